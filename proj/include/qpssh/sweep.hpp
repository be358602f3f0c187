#pragma once

// Parameter sweeps, NPR derivative and transition detection, finite-size
// scans and eigenstate snapshots.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "qpssh/localization.hpp"
#include "qpssh/model.hpp"
#include "qpssh/spectral.hpp"
#include "qpssh/topology.hpp"

namespace qpssh {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class SweepAxis { w1, gamma };

inline std::string to_string(SweepAxis a) { return a == SweepAxis::w1 ? "w1" : "gamma"; }

/// How W2 follows W1: equal, a constant, or a*cos(b*W1) + c.
struct W2Rule {
    enum class Kind { equal, constant, cosine };
    Kind kind = Kind::equal;
    std::optional<double> a, b, c;

    static W2Rule equal() { return {}; }
    static W2Rule constant(double value) { return {Kind::constant, std::nullopt, std::nullopt, value}; }
    static W2Rule cosine(double a, double b, double c) { return {Kind::cosine, a, b, c}; }

    void validate() const
    {
        switch (kind) {
        case Kind::equal:
            if (a || b || c)
                throw std::invalid_argument("w2_rule 'equal' takes no a/b/c fields");
            break;
        case Kind::constant:
            if (a || b || !c)
                throw std::invalid_argument("w2_rule 'constant' takes exactly the field c");
            break;
        case Kind::cosine:
            if (!a || !b || !c)
                throw std::invalid_argument("w2_rule 'cosine' requires fields a, b and c");
            break;
        }
    }

    [[nodiscard]] double apply(double w1) const
    {
        switch (kind) {
        case Kind::equal: return w1;
        case Kind::constant: return *c;
        case Kind::cosine: return *a * std::cos(*b * w1) + *c;
        }
        return w1;
    }
};

inline std::string to_string(W2Rule::Kind k)
{
    switch (k) {
    case W2Rule::Kind::equal: return "equal";
    case W2Rule::Kind::constant: return "constant";
    case W2Rule::Kind::cosine: return "cosine";
    }
    return "?";
}

struct ComputeFlags {
    bool winding = true;
    bool localization = true;
    bool edge = true;
    bool spectrum_dump = false;
    std::vector<double> snapshots;  // axis values
};

/// Numerical knobs shared by every pipeline evaluation.
struct PipelineOptions {
    SpectralOptions spectral;
    std::optional<double> eta_ipr, eta_npr;  // unset: Thresholds::defaults(L)
    WindingConfig winding;

    [[nodiscard]] Thresholds thresholds(int L) const
    {
        Thresholds t = Thresholds::defaults(L);
        if (eta_ipr)
            t.eta_ipr = *eta_ipr;
        if (eta_npr)
            t.eta_npr = *eta_npr;
        return t;
    }
};

struct StateRow {
    cd energy;
    double ipr;
    bool is_edge;
};

struct PointResult {
    double axis_value = 0.0;
    double mu_raw = kNaN;
    double mu_calibrated = kNaN;
    double abs_E_edge = kNaN;
    double ipr_bulk = kNaN;
    double npr_bulk = kNaN;
    double ipr_edge = kNaN;
    double npr_edge = kNaN;
    Regime regime = Regime::Indeterminate;
    std::vector<std::string> diagnostics;
    std::vector<StateRow> states;  // filled when spectrum_dump is requested

    [[nodiscard]] bool has_flag(std::string_view f) const
    {
        return std::any_of(diagnostics.begin(), diagnostics.end(),
                           [f](const std::string& d) { return d.starts_with(f); });
    }
};

inline void add_flag(std::vector<std::string>& flags, std::string f)
{
    if (std::find(flags.begin(), flags.end(), f) == flags.end())
        flags.push_back(std::move(f));
}

/// Full pipeline at one parameter point. Numerical failures are recorded in
/// the diagnostics instead of propagating.
inline PointResult evaluate_point(const ModelParams& params, const ComputeFlags& compute,
                                  const PipelineOptions& options)
{
    PointResult r;
    try {
        const Hamiltonian h(params);
        const EigenSystem eig = eigendecompose(h, options.spectral);
        for (const auto& w : eig.warnings) {
            switch (w.kind) {
            case SpectralWarning::Kind::near_defective: add_flag(r.diagnostics, "near_defective"); break;
            case SpectralWarning::Kind::chiral_fallback: add_flag(r.diagnostics, "dense_fallback"); break;
            case SpectralWarning::Kind::left_cluster_solve: add_flag(r.diagnostics, "left_cluster_solve"); break;
            case SpectralWarning::Kind::edge_tie: add_flag(r.diagnostics, "edge_tie"); break;
            }
        }
        const auto split = split_edge_bulk(eig, options.spectral.degeneracy_tol);
        if (split.tie_at_cut)
            add_flag(r.diagnostics, "edge_tie");
        const auto rep = aggregate(eig, split, options.thresholds(eig.dim));
        if (compute.localization) {
            r.ipr_bulk = rep.ipr_bulk;
            r.npr_bulk = rep.npr_bulk;
            r.regime = rep.regime;
        }
        if (compute.edge) {
            r.abs_E_edge = rep.abs_E_edge;
            r.ipr_edge = rep.ipr_edge;
            r.npr_edge = rep.npr_edge;
        }
        if (compute.winding) {
            const auto w = winding_number(eig, options.winding);
            r.mu_raw = w.mu_raw;
            r.mu_calibrated = w.mu_calibrated;
            if (!w.cut_well_defined)
                add_flag(r.diagnostics, "ill_defined_cut");
            if (!w.quantized)
                add_flag(r.diagnostics, "nonquantized");
        }
        if (compute.spectrum_dump) {
            r.states.reserve(static_cast<std::size_t>(eig.dim));
            for (int k = 0; k < eig.dim; ++k)
                r.states.push_back({eig.eigenvalues(k), rep.per_state_ipr[k],
                                    k == split.edge[0] || k == split.edge[1]});
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ' ');
        std::replace(msg.begin(), msg.end(), ';', ' ');
        add_flag(r.diagnostics, "error:" + msg);
    }
    return r;
}

struct SweepSpec {
    SweepAxis axis = SweepAxis::w1;
    double start = 0.0;
    double stop = 1.0;
    int num_points = 201;
    ModelParams base;
    W2Rule w2_rule;
    ComputeFlags compute;
    PipelineOptions options;
    int jobs = 0;  // 0: hardware concurrency

    void validate() const
    {
        base.validate();
        w2_rule.validate();
        if (!(start < stop))
            throw std::invalid_argument("sweep requires start < stop");
        if (num_points < 2)
            throw std::invalid_argument("sweep requires num_points >= 2");
        if (jobs < 0)
            throw std::invalid_argument("jobs must be >= 0");
    }

    [[nodiscard]] double grid_value(int k) const
    {
        return start + k * (stop - start) / (num_points - 1);
    }

    [[nodiscard]] ModelParams params_at(double value) const
    {
        ModelParams p = base;
        if (axis == SweepAxis::w1) {
            p.w1 = value;
        } else {
            p.gamma = value;
        }
        p.w2 = w2_rule.apply(p.w1);
        return p;
    }
};

struct SweepMetadata {
    SweepSpec spec;
    Thresholds thresholds;
    double calibration = kWindingCalibration;
    double runtime_seconds = 0.0;
    int workers = 1;
};

struct SweepTable {
    std::vector<PointResult> records;
    SweepMetadata metadata;

    [[nodiscard]] std::vector<double> axis() const
    {
        std::vector<double> out;
        out.reserve(records.size());
        for (const auto& r : records)
            out.push_back(r.axis_value);
        return out;
    }

    [[nodiscard]] std::vector<double> column(std::string_view name) const
    {
        static const std::vector<std::pair<std::string_view, double PointResult::*>> columns{
            {"axis", &PointResult::axis_value},       {"mu_raw", &PointResult::mu_raw},
            {"mu_calibrated", &PointResult::mu_calibrated}, {"absE_edge", &PointResult::abs_E_edge},
            {"ipr_bulk", &PointResult::ipr_bulk},     {"npr_bulk", &PointResult::npr_bulk},
            {"ipr_edge", &PointResult::ipr_edge},     {"npr_edge", &PointResult::npr_edge}};
        for (const auto& [key, member] : columns) {
            if (key == name) {
                std::vector<double> out;
                out.reserve(records.size());
                for (const auto& r : records)
                    out.push_back(r.*member);
                return out;
            }
        }
        throw std::invalid_argument("unknown sweep column '" + std::string(name) + "'");
    }

    [[nodiscard]] std::vector<Regime> regimes() const
    {
        std::vector<Regime> out;
        for (const auto& r : records)
            out.push_back(r.regime);
        return out;
    }
};

inline int resolve_jobs(int jobs, int work_items)
{
    int n = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    return std::clamp(n, 1, std::max(1, work_items));
}

/// Runs fn(k) for k in [0, count) on a worker pool; fn writes only slot k.
inline void parallel_for(int count, int jobs, const std::function<void(int)>& fn)
{
    const int workers = resolve_jobs(jobs, count);
    if (workers == 1) {
        for (int k = 0; k < count; ++k)
            fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int k = next++; k < count; k = next++)
                fn(k);
        });
}

inline SweepTable run_sweep(const SweepSpec& spec)
{
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    SweepTable table;
    table.records.resize(static_cast<std::size_t>(spec.num_points));
    parallel_for(spec.num_points, spec.jobs, [&](int k) {
        const double value = spec.grid_value(k);
        PointResult r = evaluate_point(spec.params_at(value), spec.compute, spec.options);
        r.axis_value = value;
        table.records[static_cast<std::size_t>(k)] = std::move(r);
    });
    table.metadata.spec = spec;
    table.metadata.thresholds = spec.options.thresholds(spec.base.sites());
    table.metadata.workers = resolve_jobs(spec.jobs, spec.num_points);
    table.metadata.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return table;
}

/// Second-order finite differences on a uniform grid: central in the
/// interior, one-sided three-point stencils at both ends.
inline std::vector<double> derivative(std::span<const double> grid, std::span<const double> values)
{
    const std::size_t n = grid.size();
    if (values.size() != n)
        throw std::invalid_argument("derivative: grid and values differ in length");
    if (n < 3)
        throw std::invalid_argument("derivative needs at least 3 points");
    const double h = (grid[n - 1] - grid[0]) / static_cast<double>(n - 1);
    if (!(h > 0.0))
        throw std::invalid_argument("derivative: grid must be increasing");
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs((grid[i] - grid[i - 1]) - h) > 1e-8 * h)
            throw std::invalid_argument("derivative: grid is not uniform");

    std::vector<double> d(n);
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i)
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    return d;
}

inline std::vector<double> derivative(const SweepTable& table, std::string_view column)
{
    const auto grid = table.axis();
    const auto values = table.column(column);
    return derivative(grid, values);
}

inline constexpr double kDefaultProminence = 20.0;

/// Local maxima of |deriv| above prominence * median(|deriv|); peaks closer
/// than one grid step are merged (the larger survives). Ascending order.
inline std::vector<double> detect_transitions(std::span<const double> deriv, std::span<const double> grid,
                                              double prominence = kDefaultProminence)
{
    if (deriv.size() != grid.size())
        throw std::invalid_argument("detect_transitions: length mismatch");
    const std::size_t n = deriv.size();
    if (n == 0)
        return {};
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i)
        mag[i] = std::isfinite(deriv[i]) ? std::abs(deriv[i]) : 0.0;
    std::vector<double> sorted = mag;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    double median = sorted[n / 2];
    if (n % 2 == 0) {
        const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2));
        median = 0.5 * (median + lower);
    }
    const double cut = prominence * median;

    std::vector<std::size_t> peaks;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(mag[i] > cut))
            continue;
        const bool left_ok = i == 0 || mag[i] >= mag[i - 1];
        const bool right_ok = i + 1 == n || mag[i] >= mag[i + 1];
        if (!(left_ok && right_ok))
            continue;
        if (!peaks.empty() && i - peaks.back() <= 1) {
            if (mag[i] > mag[peaks.back()])
                peaks.back() = i;
            continue;
        }
        peaks.push_back(i);
    }
    std::vector<double> out;
    out.reserve(peaks.size());
    for (auto i : peaks)
        out.push_back(grid[i]);
    return out;
}

struct FssRecord {
    int L = 0;
    double npr_bulk = kNaN;
    double ipr_bulk = kNaN;
    Regime regime = Regime::Indeterminate;
    std::vector<std::string> diagnostics;
};

inline void validate_sizes(std::span<const int> sizes)
{
    if (sizes.empty())
        throw std::invalid_argument("finite-size scan needs at least one size");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 4 || sizes[i] % 2 != 0)
            throw std::invalid_argument("sizes must be even and >= 4 (got " + std::to_string(sizes[i]) + ")");
        if (i > 0 && sizes[i] <= sizes[i - 1])
            throw std::invalid_argument("sizes must be strictly ascending");
    }
}

/// One pipeline evaluation per chain length at fixed couplings.
inline std::vector<FssRecord> finite_size_scan(const ModelParams& point, std::span<const int> sizes,
                                               const PipelineOptions& options = {}, int jobs = 0)
{
    validate_sizes(sizes);
    std::vector<FssRecord> out(sizes.size());
    ComputeFlags flags;
    flags.winding = false;
    parallel_for(static_cast<int>(sizes.size()), jobs, [&](int k) {
        ModelParams p = point;
        p.n_cells = sizes[static_cast<std::size_t>(k)] / 2;
        const auto r = evaluate_point(p, flags, options);
        out[static_cast<std::size_t>(k)] = {p.sites(), r.npr_bulk, r.ipr_bulk, r.regime, r.diagnostics};
    });
    return out;
}

enum class SnapshotSelection { all_states, bulk_only, lowest_abs_energy };

struct StateProfile {
    int index = 0;
    cd energy;
    double ipr = 0.0;
    bool is_edge = false;
    std::vector<double> weights;  // |psi_i|^2, unit total
};

inline std::vector<StateProfile> snapshot(const ModelParams& point, SnapshotSelection selection,
                                          const PipelineOptions& options = {})
{
    const Hamiltonian h(point);
    const auto eig = eigendecompose(h, options.spectral);
    const auto split = split_edge_bulk(eig, options.spectral.degeneracy_tol);

    std::vector<int> chosen;
    switch (selection) {
    case SnapshotSelection::all_states:
        for (int k = 0; k < eig.dim; ++k)
            chosen.push_back(k);
        break;
    case SnapshotSelection::bulk_only: chosen = split.bulk; break;
    case SnapshotSelection::lowest_abs_energy: chosen = {split.edge[0], split.edge[1]}; break;
    }

    std::vector<StateProfile> out;
    out.reserve(chosen.size());
    for (int k : chosen) {
        StateProfile s;
        s.index = k;
        s.energy = eig.eigenvalues(k);
        s.is_edge = k == split.edge[0] || k == split.edge[1];
        s.weights.resize(static_cast<std::size_t>(eig.dim));
        for (int i = 0; i < eig.dim; ++i)
            s.weights[static_cast<std::size_t>(i)] = std::norm(eig.right(i, k));
        s.ipr = ipr_state(eig.right.col(k));
        out.push_back(std::move(s));
    }
    return out;
}

// --- CSV output ---------------------------------------------------------

inline std::string join_flags(const std::vector<std::string>& flags)
{
    std::string s;
    for (const auto& f : flags) {
        if (!s.empty())
            s += ';';
        s += f;
    }
    return s;
}

inline constexpr std::string_view kSweepCsvHeader =
    "axis,mu_raw,mu_calibrated,absE_edge,ipr_bulk,npr_bulk,ipr_edge,npr_edge,dnpr_edge,regime,flags";

inline void write_sweep_csv(std::ostream& os, const SweepTable& table)
{
    std::vector<double> dnpr(table.records.size(), kNaN);
    if (table.records.size() >= 3)
        dnpr = derivative(table, "npr_edge");
    os << kSweepCsvHeader << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < table.records.size(); ++k) {
        const auto& r = table.records[k];
        os << r.axis_value << ',' << r.mu_raw << ',' << r.mu_calibrated << ',' << r.abs_E_edge << ','
           << r.ipr_bulk << ',' << r.npr_bulk << ',' << r.ipr_edge << ',' << r.npr_edge << ',' << dnpr[k]
           << ',' << to_string(r.regime) << ',' << join_flags(r.diagnostics) << '\n';
    }
}

inline void write_sweep_spectra_csv(std::ostream& os, const SweepTable& table)
{
    os << "axis,index,re_E,im_E,abs_E,ipr,is_edge\n";
    os.precision(17);
    for (const auto& r : table.records)
        for (std::size_t k = 0; k < r.states.size(); ++k) {
            const auto& s = r.states[k];
            os << r.axis_value << ',' << k << ',' << s.energy.real() << ',' << s.energy.imag() << ','
               << std::abs(s.energy) << ',' << s.ipr << ',' << (s.is_edge ? 1 : 0) << '\n';
        }
}

inline void write_fss_csv(std::ostream& os, std::span<const FssRecord> records)
{
    os << "L,npr_bulk,ipr_bulk,regime,flags\n";
    os.precision(17);
    for (const auto& r : records)
        os << r.L << ',' << r.npr_bulk << ',' << r.ipr_bulk << ',' << to_string(r.regime) << ','
           << join_flags(r.diagnostics) << '\n';
}

inline void write_snapshot_csv(std::ostream& os, std::span<const StateProfile> states)
{
    os << "state,re_E,im_E,ipr,is_edge,site,weight\n";
    os.precision(17);
    for (const auto& s : states)
        for (std::size_t i = 0; i < s.weights.size(); ++i)
            os << s.index << ',' << s.energy.real() << ',' << s.energy.imag() << ',' << s.ipr << ','
               << (s.is_edge ? 1 : 0) << ',' << i << ',' << s.weights[i] << '\n';
}

}  // namespace qpssh
