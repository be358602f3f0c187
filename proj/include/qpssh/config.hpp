#pragma once

// Run configuration: JSON or "key = value" text, plus the run manifest.
//
// Top level holds the model keys (t1, t2, w1, w2, gamma, beta, n_cells) and
// optional sections "options", "sweep", "fss" and "snapshot". A manifest
// written by the CLI uses the same layout with an extra "manifest" section,
// so it can be fed back as a config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpssh/sweep.hpp"

namespace qpssh {

using json = nlohmann::json;

/// Invalid or missing configuration entry; `key()` names the offender.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key))
    {
    }
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

namespace detail {

inline std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix)
{
    if (!obj.is_object())
        throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.contains(k))
            throw ConfigError(prefix + k, "unknown key");
}

inline double get_number(const json& obj, const std::string& key, const std::string& prefix)
{
    const auto& v = obj.at(key);
    if (!v.is_number())
        throw ConfigError(prefix + key, "expected a number");
    return v.get<double>();
}

inline int get_int(const json& obj, const std::string& key, const std::string& prefix)
{
    const auto& v = obj.at(key);
    if (!v.is_number_integer())
        throw ConfigError(prefix + key, "expected an integer");
    return v.get<int>();
}

inline bool get_bool(const json& obj, const std::string& key, const std::string& prefix)
{
    const auto& v = obj.at(key);
    if (!v.is_boolean())
        throw ConfigError(prefix + key, "expected true or false");
    return v.get<bool>();
}

inline std::string get_string(const json& obj, const std::string& key, const std::string& prefix)
{
    const auto& v = obj.at(key);
    if (!v.is_string())
        throw ConfigError(prefix + key, "expected a string");
    return v.get<std::string>();
}

}  // namespace detail

/// Parses "key = value" lines. Dotted keys nest; values are read as JSON
/// literals when possible and as bare strings otherwise.
inline json parse_key_value(const std::string& text)
{
    json root = json::object();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string raw = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno), "empty key");
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded())
            value = raw;
        json* node = &root;
        std::size_t pos = 0;
        while (true) {
            const auto dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    return root;
}

inline json parse_config_text(const std::string& text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j = json::parse(text, nullptr, false);
        if (j.is_discarded())
            throw ConfigError("<root>", "malformed JSON");
        return j;
    }
    return parse_key_value(text);
}

inline json load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("--config", "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

inline const std::set<std::string> kModelKeys{"t1", "t2", "w1", "w2", "gamma", "beta", "n_cells"};
inline const std::set<std::string> kTopLevelKeys{"t1",      "t2",    "w1",  "w2",       "gamma",   "beta",
                                                 "n_cells", "options", "sweep", "fss", "snapshot", "manifest"};

inline void check_top_level(const json& cfg) { detail::check_keys(cfg, kTopLevelKeys, ""); }

inline ModelParams parse_model(const json& cfg)
{
    if (!cfg.is_object())
        throw ConfigError("<root>", "expected an object");
    for (const char* required : {"t1", "t2", "n_cells"})
        if (!cfg.contains(required))
            throw ConfigError(required, "missing required key");
    ModelParams p;
    p.t1 = detail::get_number(cfg, "t1", "");
    p.t2 = detail::get_number(cfg, "t2", "");
    p.n_cells = detail::get_int(cfg, "n_cells", "");
    if (cfg.contains("w1"))
        p.w1 = detail::get_number(cfg, "w1", "");
    if (cfg.contains("w2"))
        p.w2 = detail::get_number(cfg, "w2", "");
    if (cfg.contains("gamma"))
        p.gamma = detail::get_number(cfg, "gamma", "");
    if (cfg.contains("beta"))
        p.beta = detail::get_number(cfg, "beta", "");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.starts_with("n_cells") ? "n_cells" : msg.starts_with("beta") ? "beta" : "<model>", msg);
    }
    return p;
}

inline json model_to_json(const ModelParams& p)
{
    return {{"t1", p.t1}, {"t2", p.t2},       {"w1", p.w1},          {"w2", p.w2},
            {"gamma", p.gamma}, {"beta", p.beta}, {"n_cells", p.n_cells}};
}

/// "options" section: eta_ipr, eta_npr, trim, tol_eig, degeneracy_tol, backend, jobs.
struct RunOptions {
    PipelineOptions pipeline;
    int jobs = 0;
};

inline RunOptions parse_options(const json& cfg)
{
    RunOptions r;
    if (!cfg.contains("options"))
        return r;
    const json& o = cfg.at("options");
    const std::string pre = "options.";
    detail::check_keys(o, {"eta_ipr", "eta_npr", "trim", "tol_eig", "degeneracy_tol", "backend", "jobs"}, pre);
    if (o.contains("eta_ipr"))
        r.pipeline.eta_ipr = detail::get_number(o, "eta_ipr", pre);
    if (o.contains("eta_npr"))
        r.pipeline.eta_npr = detail::get_number(o, "eta_npr", pre);
    if (o.contains("trim"))
        r.pipeline.winding.trim_fraction = detail::get_number(o, "trim", pre);
    if (o.contains("tol_eig"))
        r.pipeline.spectral.tol_eig = detail::get_number(o, "tol_eig", pre);
    if (o.contains("degeneracy_tol"))
        r.pipeline.spectral.degeneracy_tol = detail::get_number(o, "degeneracy_tol", pre);
    if (o.contains("backend")) {
        const auto b = detail::get_string(o, "backend", pre);
        if (b == "automatic")
            r.pipeline.spectral.backend = Backend::automatic;
        else if (b == "dense")
            r.pipeline.spectral.backend = Backend::dense;
        else if (b == "chiral")
            r.pipeline.spectral.backend = Backend::chiral;
        else
            throw ConfigError(pre + "backend", "expected automatic, dense or chiral");
    }
    if (o.contains("jobs"))
        r.jobs = detail::get_int(o, "jobs", pre);
    if (r.pipeline.winding.trim_fraction <= 0.0 || r.pipeline.winding.trim_fraction >= 0.5)
        throw ConfigError(pre + "trim", "must lie in (0, 0.5)");
    if (!(r.pipeline.spectral.tol_eig > 0.0))
        throw ConfigError(pre + "tol_eig", "must be positive");
    if (r.jobs < 0)
        throw ConfigError(pre + "jobs", "must be >= 0");
    return r;
}

/// Resolved options with every default made explicit.
inline json options_to_json(const RunOptions& r, int L)
{
    const Thresholds t = r.pipeline.thresholds(L);
    return {{"eta_ipr", t.eta_ipr},
            {"eta_npr", t.eta_npr},
            {"trim", r.pipeline.winding.trim_fraction},
            {"tol_eig", r.pipeline.spectral.tol_eig},
            {"degeneracy_tol", r.pipeline.spectral.degeneracy_tol},
            {"backend", to_string(r.pipeline.spectral.backend)},
            {"jobs", r.jobs}};
}

inline W2Rule parse_w2_rule(const json& j, const std::string& pre)
{
    if (j.is_string()) {
        if (j.get<std::string>() == "equal")
            return W2Rule::equal();
        throw ConfigError(pre, "string form only allows \"equal\"");
    }
    detail::check_keys(j, {"kind", "a", "b", "c"}, pre + ".");
    if (!j.contains("kind"))
        throw ConfigError(pre + ".kind", "missing required key");
    const std::string kind = detail::get_string(j, "kind", pre + ".");
    W2Rule r;
    if (kind == "equal")
        r.kind = W2Rule::Kind::equal;
    else if (kind == "constant")
        r.kind = W2Rule::Kind::constant;
    else if (kind == "cosine")
        r.kind = W2Rule::Kind::cosine;
    else
        throw ConfigError(pre + ".kind", "expected equal, constant or cosine");
    if (j.contains("a"))
        r.a = detail::get_number(j, "a", pre + ".");
    if (j.contains("b"))
        r.b = detail::get_number(j, "b", pre + ".");
    if (j.contains("c"))
        r.c = detail::get_number(j, "c", pre + ".");
    try {
        r.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(pre, e.what());
    }
    return r;
}

inline json w2_rule_to_json(const W2Rule& r)
{
    json j{{"kind", to_string(r.kind)}};
    if (r.a)
        j["a"] = *r.a;
    if (r.b)
        j["b"] = *r.b;
    if (r.c)
        j["c"] = *r.c;
    return j;
}

inline SweepSpec parse_sweep(const json& cfg)
{
    SweepSpec spec;
    spec.base = parse_model(cfg);
    const auto run = parse_options(cfg);
    spec.options = run.pipeline;
    spec.jobs = run.jobs;
    if (!cfg.contains("sweep"))
        throw ConfigError("sweep", "missing required section");
    const json& s = cfg.at("sweep");
    const std::string pre = "sweep.";
    detail::check_keys(s, {"axis", "start", "stop", "num_points", "w2_rule", "compute"}, pre);
    for (const char* required : {"axis", "start", "stop", "num_points"})
        if (!s.contains(required))
            throw ConfigError(pre + required, "missing required key");
    const auto axis = detail::get_string(s, "axis", pre);
    if (axis == "w1")
        spec.axis = SweepAxis::w1;
    else if (axis == "gamma")
        spec.axis = SweepAxis::gamma;
    else
        throw ConfigError(pre + "axis", "expected w1 or gamma");
    spec.start = detail::get_number(s, "start", pre);
    spec.stop = detail::get_number(s, "stop", pre);
    spec.num_points = detail::get_int(s, "num_points", pre);
    if (!(spec.start < spec.stop))
        throw ConfigError(pre + "stop", "must exceed start");
    if (spec.num_points < 2)
        throw ConfigError(pre + "num_points", "must be >= 2");
    if (s.contains("w2_rule"))
        spec.w2_rule = parse_w2_rule(s.at("w2_rule"), pre + "w2_rule");
    if (s.contains("compute")) {
        const json& c = s.at("compute");
        const std::string cp = pre + "compute.";
        detail::check_keys(c, {"winding", "localization", "edge", "spectrum_dump", "snapshots"}, cp);
        if (c.contains("winding"))
            spec.compute.winding = detail::get_bool(c, "winding", cp);
        if (c.contains("localization"))
            spec.compute.localization = detail::get_bool(c, "localization", cp);
        if (c.contains("edge"))
            spec.compute.edge = detail::get_bool(c, "edge", cp);
        if (c.contains("spectrum_dump"))
            spec.compute.spectrum_dump = detail::get_bool(c, "spectrum_dump", cp);
        if (c.contains("snapshots")) {
            const json& a = c.at("snapshots");
            if (!a.is_array())
                throw ConfigError(cp + "snapshots", "expected an array of axis values");
            for (const auto& v : a) {
                if (!v.is_number())
                    throw ConfigError(cp + "snapshots", "expected numbers");
                spec.compute.snapshots.push_back(v.get<double>());
            }
        }
    }
    return spec;
}

inline json sweep_to_json(const SweepSpec& s)
{
    return {{"axis", to_string(s.axis)},
            {"start", s.start},
            {"stop", s.stop},
            {"num_points", s.num_points},
            {"w2_rule", w2_rule_to_json(s.w2_rule)},
            {"compute",
             {{"winding", s.compute.winding},
              {"localization", s.compute.localization},
              {"edge", s.compute.edge},
              {"spectrum_dump", s.compute.spectrum_dump},
              {"snapshots", s.compute.snapshots}}}};
}

inline std::vector<int> parse_fss_sizes(const json& cfg)
{
    if (!cfg.contains("fss"))
        throw ConfigError("fss", "missing required section");
    const json& f = cfg.at("fss");
    detail::check_keys(f, {"sizes"}, "fss.");
    if (!f.contains("sizes") || !f.at("sizes").is_array())
        throw ConfigError("fss.sizes", "expected an array of chain lengths");
    std::vector<int> sizes;
    for (const auto& v : f.at("sizes")) {
        if (!v.is_number_integer())
            throw ConfigError("fss.sizes", "expected integers");
        sizes.push_back(v.get<int>());
    }
    try {
        validate_sizes(sizes);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("fss.sizes", e.what());
    }
    return sizes;
}

inline SnapshotSelection parse_snapshot_selection(const json& cfg)
{
    if (!cfg.contains("snapshot"))
        return SnapshotSelection::bulk_only;
    const json& s = cfg.at("snapshot");
    detail::check_keys(s, {"selection"}, "snapshot.");
    if (!s.contains("selection"))
        return SnapshotSelection::bulk_only;
    const auto sel = detail::get_string(s, "selection", "snapshot.");
    if (sel == "all_states")
        return SnapshotSelection::all_states;
    if (sel == "bulk_only")
        return SnapshotSelection::bulk_only;
    if (sel == "lowest_abs_energy")
        return SnapshotSelection::lowest_abs_energy;
    throw ConfigError("snapshot.selection", "expected all_states, bulk_only or lowest_abs_energy");
}

inline std::string to_string(SnapshotSelection s)
{
    switch (s) {
    case SnapshotSelection::all_states: return "all_states";
    case SnapshotSelection::bulk_only: return "bulk_only";
    case SnapshotSelection::lowest_abs_energy: return "lowest_abs_energy";
    }
    return "?";
}

/// Writes through a temporary sibling and renames on success, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    namespace fs = std::filesystem;
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("short write to '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

}  // namespace qpssh
