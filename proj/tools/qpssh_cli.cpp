// qpssh: command-line front end.
//
//   qpssh [global options] <spectrum|sweep|winding|fss|snapshot> [options]
//
// Exit codes: 0 success, 1 numerical failure, 2 configuration error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qpssh/qpssh.hpp"

namespace fs = std::filesystem;
using namespace qpssh;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitConfig = 2;

struct Globals {
    std::string config;
    std::string out = "qpssh_out";
    std::vector<std::string> sets;
    std::optional<int> jobs;
    std::optional<double> eta_ipr, eta_npr, trim, tol_eig;
};

class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Config file, then --set entries, then the dedicated flags.
json resolve_config(const Globals& g)
{
    json cfg = g.config.empty() ? json::object() : load_config(g.config);
    if (!cfg.is_object())
        throw ConfigError("<root>", "expected an object");
    for (const auto& s : g.sets) {
        if (s.find('=') == std::string::npos)
            throw ConfigError("--set", "expected key=value (got '" + s + "')");
        cfg.merge_patch(parse_key_value(s));
    }
    auto put = [&](const char* key, const json& v) { cfg["options"][key] = v; };
    if (g.jobs)
        put("jobs", *g.jobs);
    if (g.eta_ipr)
        put("eta_ipr", *g.eta_ipr);
    if (g.eta_npr)
        put("eta_npr", *g.eta_npr);
    if (g.trim)
        put("trim", *g.trim);
    if (g.tol_eig)
        put("tol_eig", *g.tol_eig);
    check_top_level(cfg);
    return cfg;
}

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content)
    {
        write_file_atomic(dir_ / name, content);
        written_.push_back(name);
    }

    [[nodiscard]] const std::vector<std::string>& files() const { return written_; }
    [[nodiscard]] const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::vector<std::string> written_;
};

template <typename Fn>
std::string render(Fn&& fn)
{
    std::ostringstream os;
    fn(os);
    return os.str();
}

json base_manifest(const ModelParams& p, const RunOptions& run)
{
    json m = model_to_json(p);
    m["options"] = options_to_json(run, p.sites());
    return m;
}

void finish(json manifest, Outputs& out, const std::string& command, double seconds, json diagnostics,
            const Thresholds& thresholds)
{
    json& meta = manifest["manifest"];
    meta["tool"] = "qpssh";
    meta["version"] = kVersion;
    meta["command"] = command;
    meta["calibration"] = kWindingCalibration;
    meta["thresholds"] = {{"eta_ipr", thresholds.eta_ipr}, {"eta_npr", thresholds.eta_npr}};
    meta["outputs"] = out.files();
    meta["wall_time_seconds"] = seconds;
    meta["diagnostics"] = std::move(diagnostics);
    write_file_atomic(out.dir() / "manifest.json", manifest.dump(2) + "\n");
}

json warnings_json(const EigenSystem& eig)
{
    json w = json::array();
    for (const auto& x : eig.warnings)
        w.push_back(x.message);
    return w;
}

// --- generated plot scripts -------------------------------------------------

constexpr const char* kPlotHeader = R"(#!/usr/bin/env python3
# Generated by qpssh. Reads the CSVs next to this script.
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))
)";

std::string plot_spectrum_script()
{
    return std::string(kPlotHeader) + R"(
s = pd.read_csv(os.path.join(here, "states.csv"))
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
sc = ax[0].scatter(s.re_E, s.im_E, c=s.ipr, s=6, cmap="jet")
ax[0].set_xlabel("Re E")
ax[0].set_ylabel("Im E")
fig.colorbar(sc, ax=ax[0], label="IPR")
ax[1].scatter(s["index"], s.abs_E, c=s.ipr, s=6, cmap="jet")
ax[1].set_xlabel("state index")
ax[1].set_ylabel("|E|")
fig.tight_layout()
fig.savefig(os.path.join(here, "spectrum.png"), dpi=150)
)";
}

std::string plot_sweep_script(const std::string& axis)
{
    return std::string(kPlotHeader) + "\naxis_label = \"" + axis + "\"\n" + R"(
d = pd.read_csv(os.path.join(here, "sweep.csv"))
fig, ax = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
ax[0, 0].plot(d.axis, d.mu_calibrated, "k.-")
ax[0, 0].set_ylabel("winding")
ax[0, 1].plot(d.axis, d.ipr_bulk, "r-", label="IPR bulk")
ax[0, 1].plot(d.axis, d.npr_bulk, "b-", label="NPR bulk")
for regime, colour in (("Coexisting", "0.85"),):
    mask = d.regime == regime
    ax[0, 1].fill_between(d.axis, 0, 1, where=mask, color=colour, transform=ax[0, 1].get_xaxis_transform())
ax[0, 1].legend()
ax[1, 0].semilogy(d.axis, d.absE_edge, "g-", label="|E| edge")
ax[1, 0].plot(d.axis, d.ipr_edge, "r-", label="IPR edge")
ax[1, 0].plot(d.axis, d.npr_edge, "b-", label="NPR edge")
ax[1, 0].legend()
ax[1, 1].plot(d.axis, d.dnpr_edge, "m-")
ax[1, 1].set_ylabel("d NPR edge")
for a in ax[1]:
    a.set_xlabel(axis_label)
fig.tight_layout()
fig.savefig(os.path.join(here, "sweep.png"), dpi=150)
)";
}

std::string plot_fss_script()
{
    return std::string(kPlotHeader) + R"(
d = pd.read_csv(os.path.join(here, "fss.csv"))
fig, ax = plt.subplots(figsize=(5, 4))
ax.plot(d.L, d.npr_bulk, "bo-", label="NPR bulk")
ax.plot(d.L, d.ipr_bulk, "rs-", label="IPR bulk")
ax.set_xlabel("L")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "fss.png"), dpi=150)
)";
}

std::string plot_snapshot_script()
{
    return std::string(kPlotHeader) + R"(
d = pd.read_csv(os.path.join(here, "snapshot.csv"))
fig, ax = plt.subplots(figsize=(7, 4))
for state, g in d.groupby("state"):
    ax.plot(g.site, g.weight, lw=0.6, color="tab:green" if g.is_edge.iloc[0] else "tab:blue")
ax.set_xlabel("site")
ax.set_ylabel("|psi|^2")
fig.tight_layout()
fig.savefig(os.path.join(here, "snapshot.png"), dpi=150)
)";
}

// --- subcommands ------------------------------------------------------------

int cmd_spectrum(const Globals& g, bool triplets)
{
    const auto t0 = std::chrono::steady_clock::now();
    const json cfg = resolve_config(g);
    const ModelParams p = parse_model(cfg);
    const RunOptions run = parse_options(cfg);

    const Hamiltonian h(p);
    EigenSystem eig;
    try {
        eig = eigendecompose(h, run.pipeline.spectral);
    } catch (const SpectralError& e) {
        throw NumericFailure(e.what());
    }
    const auto split = split_edge_bulk(eig, run.pipeline.spectral.degeneracy_tol);
    const auto thresholds = run.pipeline.thresholds(eig.dim);
    const auto rep = aggregate(eig, split, thresholds);

    Outputs out(g.out);
    out.write("spectrum.csv", render([&](std::ostream& os) { write_spectrum_csv(os, eig); }));
    out.write("states.csv", render([&](std::ostream& os) { write_states_csv(os, eig, split, rep); }));
    if (triplets)
        out.write("hamiltonian.csv", render([&](std::ostream& os) { h.write_triplets_csv(os); }));
    out.write("plot_spectrum.py", plot_spectrum_script());

    const json diag{{"backend", to_string(eig.backend_used)},
                    {"max_residual", eig.max_residual()},
                    {"biorth_error", eig.biorth_error},
                    {"left_residual_max", eig.left_residual_max},
                    {"edge_tie", split.tie_at_cut},
                    {"regime", to_string(rep.regime)},
                    {"warnings", warnings_json(eig)}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish(base_manifest(p, run), out, "spectrum", secs, diag, thresholds);
    std::cout << "wrote " << (out.dir() / "spectrum.csv").string() << " (" << eig.dim << " states, regime "
              << to_string(rep.regime) << ")\n";
    return kExitOk;
}

int cmd_sweep(const Globals& g)
{
    const json cfg = resolve_config(g);
    SweepSpec spec = parse_sweep(cfg);
    const RunOptions run = parse_options(cfg);
    const SweepTable table = run_sweep(spec);

    Outputs out(g.out);
    out.write("sweep.csv", render([&](std::ostream& os) { write_sweep_csv(os, table); }));
    if (spec.compute.spectrum_dump)
        out.write("sweep_spectra.csv", render([&](std::ostream& os) { write_sweep_spectra_csv(os, table); }));
    for (std::size_t i = 0; i < spec.compute.snapshots.size(); ++i) {
        std::vector<StateProfile> states;
        try {
            states = snapshot(spec.params_at(spec.compute.snapshots[i]), SnapshotSelection::all_states,
                              spec.options);
        } catch (const SpectralError& e) {
            throw NumericFailure(e.what());
        }
        out.write("snapshot_" + std::to_string(i) + ".csv",
                  render([&](std::ostream& os) { write_snapshot_csv(os, states); }));
    }
    out.write("plot_sweep.py", plot_sweep_script(to_string(spec.axis)));

    std::map<std::string, int> counts;
    int failed = 0;
    for (const auto& r : table.records)
        for (const auto& f : r.diagnostics) {
            const bool error = f.starts_with("error:");
            ++counts[error ? "error" : f];
            failed += error ? 1 : 0;
        }
    json diag{{"flag_counts", counts}, {"workers", table.metadata.workers}};
    if (table.records.size() >= 3) {
        const auto d = derivative(table, "npr_edge");
        diag["dnpr_edge_peaks"] = detect_transitions(d, table.axis());
    }
    json manifest = base_manifest(spec.base, run);
    manifest["sweep"] = sweep_to_json(spec);
    finish(std::move(manifest), out, "sweep", table.metadata.runtime_seconds, diag, table.metadata.thresholds);
    std::cout << "wrote " << (out.dir() / "sweep.csv").string() << " (" << table.records.size() << " points, "
              << table.metadata.runtime_seconds << " s)\n";
    if (failed > 0) {
        std::cerr << "qpssh: " << failed << " sweep point(s) failed numerically; see the flags column\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_winding(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const json cfg = resolve_config(g);
    const ModelParams p = parse_model(cfg);
    const RunOptions run = parse_options(cfg);
    try {
        run.pipeline.winding.validate(p.sites());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("options.trim", e.what());
    }

    EigenSystem eig;
    try {
        eig = eigendecompose(Hamiltonian(p), run.pipeline.spectral);
    } catch (const SpectralError& e) {
        throw NumericFailure(e.what());
    }
    const WindingResult w = winding_number(eig, run.pipeline.winding);
    std::cout.precision(10);
    std::cout << "mu_calibrated = " << w.mu_calibrated << "\n"
              << "mu_raw = " << w.mu_raw << "\n"
              << "im_residual = " << w.im_residual << "\n"
              << "trim_sites = " << run.pipeline.winding.trim_sites(p.sites()) << "\n";
    if (!w.warning.empty())
        std::cout << "warning = " << w.warning << "\n";

    Outputs out(g.out);
    const json diag{{"mu_raw", w.mu_raw},
                    {"mu_calibrated", w.mu_calibrated},
                    {"im_residual", w.im_residual},
                    {"cut_well_defined", w.cut_well_defined},
                    {"quantized", w.quantized},
                    {"backend", to_string(eig.backend_used)},
                    {"warnings", warnings_json(eig)}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish(base_manifest(p, run), out, "winding", secs, diag, run.pipeline.thresholds(p.sites()));
    return kExitOk;
}

int cmd_fss(const Globals& g, const std::vector<int>& flag_sizes)
{
    const auto t0 = std::chrono::steady_clock::now();
    json cfg = resolve_config(g);
    if (!flag_sizes.empty())
        cfg["fss"]["sizes"] = flag_sizes;
    const ModelParams p = parse_model(cfg);
    const RunOptions run = parse_options(cfg);
    const auto sizes = parse_fss_sizes(cfg);

    const auto records = finite_size_scan(p, sizes, run.pipeline, run.jobs);
    Outputs out(g.out);
    out.write("fss.csv", render([&](std::ostream& os) { write_fss_csv(os, records); }));
    out.write("plot_fss.py", plot_fss_script());

    json diag = json::array();
    int failed = 0;
    for (const auto& r : records) {
        diag.push_back({{"L", r.L}, {"flags", r.diagnostics}});
        for (const auto& f : r.diagnostics)
            failed += f.starts_with("error:") ? 1 : 0;
    }
    json manifest = base_manifest(p, run);
    manifest["fss"] = {{"sizes", sizes}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish(std::move(manifest), out, "fss", secs, {{"sizes", diag}}, run.pipeline.thresholds(p.sites()));
    for (const auto& r : records)
        std::cout << "L = " << r.L << "  npr_bulk = " << r.npr_bulk << "  ipr_bulk = " << r.ipr_bulk << "  "
                  << to_string(r.regime) << "\n";
    if (failed > 0) {
        std::cerr << "qpssh: " << failed << " size(s) failed numerically\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_snapshot(const Globals& g, const std::string& selection_flag)
{
    const auto t0 = std::chrono::steady_clock::now();
    json cfg = resolve_config(g);
    if (!selection_flag.empty())
        cfg["snapshot"]["selection"] = selection_flag;
    const ModelParams p = parse_model(cfg);
    const RunOptions run = parse_options(cfg);
    const SnapshotSelection sel = parse_snapshot_selection(cfg);

    std::vector<StateProfile> states;
    try {
        states = snapshot(p, sel, run.pipeline);
    } catch (const SpectralError& e) {
        throw NumericFailure(e.what());
    }
    Outputs out(g.out);
    out.write("snapshot.csv", render([&](std::ostream& os) { write_snapshot_csv(os, states); }));
    out.write("plot_snapshot.py", plot_snapshot_script());

    json manifest = base_manifest(p, run);
    manifest["snapshot"] = {{"selection", to_string(sel)}};
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish(std::move(manifest), out, "snapshot", secs, {{"states", states.size()}},
           run.pipeline.thresholds(p.sites()));
    std::cout << "wrote " << (out.dir() / "snapshot.csv").string() << " (" << states.size() << " states)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quasiperiodic non-Hermitian SSH chain: spectra, localization, winding and sweeps"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "JSON or key = value configuration file")->envname("QPSSH_CONFIG");
    app.add_option("--out", g.out, "output directory")->envname("QPSSH_OUT")->capture_default_str();
    app.add_option("--set", g.sets, "override a config entry, e.g. --set w1=0.5 --set sweep.num_points=51");
    app.add_option("--jobs", g.jobs, "worker threads for sweeps and scans (default: all cores)")
        ->envname("QPSSH_JOBS");
    app.add_option("--eta-ipr", g.eta_ipr, "IPR threshold (default max(8/L, 1e-3))")->envname("QPSSH_ETA_IPR");
    app.add_option("--eta-npr", g.eta_npr, "NPR threshold (default max(8/L, 1e-3))")->envname("QPSSH_ETA_NPR");
    app.add_option("--trim", g.trim, "trimmed fraction l/L at each end for the winding trace (default 0.2)")
        ->envname("QPSSH_TRIM");
    app.add_option("--tol-eig", g.tol_eig, "relative eigenpair residual bound (default 1e-8)")
        ->envname("QPSSH_TOL_EIG");

    auto* spectrum = app.add_subcommand("spectrum", "eigenvalues, residuals and per-state IPR/NPR");
    bool triplets = false;
    spectrum->add_flag("--triplets", triplets, "also write the Hamiltonian as row,col,re,im triplets");
    auto* sweep = app.add_subcommand("sweep", "one-dimensional sweep of w1 or gamma");
    auto* winding = app.add_subcommand("winding", "real-space winding number");
    auto* fss = app.add_subcommand("fss", "bulk NPR/IPR at several chain lengths");
    std::vector<int> sizes;
    fss->add_option("--sizes", sizes, "chain lengths L (even, ascending)")->delimiter(',');
    auto* snap = app.add_subcommand("snapshot", "eigenstate weight profiles");
    std::string selection;
    snap->add_option("--selection", selection, "all_states, bulk_only or lowest_abs_energy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*spectrum)
            return cmd_spectrum(g, triplets);
        if (*sweep)
            return cmd_sweep(g);
        if (*winding)
            return cmd_winding(g);
        if (*fss)
            return cmd_fss(g, sizes);
        if (*snap)
            return cmd_snapshot(g, selection);
    } catch (const ConfigError& e) {
        std::cerr << "qpssh: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "qpssh: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "qpssh: invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericFailure& e) {
        std::cerr << "qpssh: numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "qpssh: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitConfig;
}
