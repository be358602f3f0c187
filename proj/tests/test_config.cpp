#include <gtest/gtest.h>

#include <filesystem>

#include "qpssh/config.hpp"

using namespace qpssh;

namespace {

std::string key_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

}  // namespace

TEST(Config, KeyValueText)
{
    const auto j = parse_config_text(
        "# clean chain\n"
        "t1 = 1.0\n"
        "t2 = 1.3   # intercell\n"
        "n_cells = 200\n"
        "sweep.axis = w1\n"
        "sweep.w2_rule.kind = \"cosine\"\n"
        "sweep.compute.winding = false\n"
        "sweep.compute.snapshots = [0.5, 1.5]\n");
    EXPECT_EQ(j.at("t1"), 1.0);
    EXPECT_EQ(j.at("n_cells"), 200);
    EXPECT_EQ(j.at("sweep").at("axis"), "w1");
    EXPECT_EQ(j.at("sweep").at("w2_rule").at("kind"), "cosine");
    EXPECT_EQ(j.at("sweep").at("compute").at("winding"), false);
    EXPECT_EQ(j.at("sweep").at("compute").at("snapshots").size(), 2u);
}

TEST(Config, KeyValueSyntaxError)
{
    EXPECT_EQ(key_of([] { parse_key_value("t1 = 1\nbogus line\n"); }), "line 2");
}

TEST(Config, JsonText)
{
    const auto j = parse_config_text(R"({"t1": 1, "t2": 2.5, "n_cells": 10})");
    const auto p = parse_model(j);
    EXPECT_EQ(p.t2, 2.5);
    EXPECT_EQ(p.sites(), 20);
    EXPECT_THROW(parse_config_text("{\"t1\": "), ConfigError);
}

TEST(Config, MissingRequiredKeysAreNamed)
{
    EXPECT_EQ(key_of([] { parse_model(json{{"t2", 1.0}, {"n_cells", 10}}); }), "t1");
    EXPECT_EQ(key_of([] { parse_model(json{{"t1", 1.0}, {"n_cells", 10}}); }), "t2");
    EXPECT_EQ(key_of([] { parse_model(json{{"t1", 1.0}, {"t2", 1.0}}); }), "n_cells");
    EXPECT_EQ(key_of([] { parse_model(json{{"t1", "one"}, {"t2", 1.0}, {"n_cells", 10}}); }), "t1");
    EXPECT_EQ(key_of([] { parse_model(json{{"t1", 1.0}, {"t2", 1.0}, {"n_cells", 1}}); }), "n_cells");
}

TEST(Config, UnknownKeysRejected)
{
    EXPECT_EQ(key_of([] { check_top_level(json{{"t1", 1.0}, {"t3", 1.0}}); }), "t3");
    EXPECT_EQ(key_of([] { parse_options(json{{"options", {{"eta", 0.1}}}}); }), "options.eta");
    const json bad_sweep = {{"t1", 1.0}, {"t2", 1.0}, {"n_cells", 10},
                            {"sweep", {{"axis", "w1"}, {"start", 0}, {"stop", 1}, {"num_points", 3}, {"step", 1}}}};
    EXPECT_EQ(key_of([&] { parse_sweep(bad_sweep); }), "sweep.step");
}

TEST(Config, OptionValidation)
{
    EXPECT_EQ(key_of([] { parse_options(json{{"options", {{"trim", 0.6}}}}); }), "options.trim");
    EXPECT_EQ(key_of([] { parse_options(json{{"options", {{"tol_eig", -1.0}}}}); }), "options.tol_eig");
    EXPECT_EQ(key_of([] { parse_options(json{{"options", {{"backend", "magic"}}}}); }), "options.backend");
    const auto r = parse_options(json{{"options", {{"eta_npr", 0.01}, {"backend", "dense"}, {"jobs", 2}}}});
    EXPECT_EQ(*r.pipeline.eta_npr, 0.01);
    EXPECT_FALSE(r.pipeline.eta_ipr);
    EXPECT_EQ(r.pipeline.spectral.backend, Backend::dense);
    EXPECT_EQ(r.jobs, 2);
}

TEST(Config, SweepSection)
{
    const json cfg = {{"t1", 1.0},
                      {"t2", 2.5},
                      {"gamma", 0.2},
                      {"n_cells", 500},
                      {"sweep",
                       {{"axis", "w1"},
                        {"start", 0.0},
                        {"stop", 3.0},
                        {"num_points", 301},
                        {"w2_rule", {{"kind", "cosine"}, {"a", -2.0}, {"b", 3.0}, {"c", 2.0}}}}}};
    const auto s = parse_sweep(cfg);
    EXPECT_EQ(s.axis, SweepAxis::w1);
    EXPECT_EQ(s.num_points, 301);
    EXPECT_EQ(s.w2_rule.kind, W2Rule::Kind::cosine);
    EXPECT_EQ(*s.w2_rule.b, 3.0);
    EXPECT_EQ(s.base.gamma, 0.2);

    json bad = cfg;
    bad["sweep"]["w2_rule"].erase("b");
    EXPECT_EQ(key_of([&] { parse_sweep(bad); }), "sweep.w2_rule");
    bad = cfg;
    bad["sweep"]["axis"] = "w2";
    EXPECT_EQ(key_of([&] { parse_sweep(bad); }), "sweep.axis");
    bad = cfg;
    bad["sweep"]["stop"] = -1.0;
    EXPECT_EQ(key_of([&] { parse_sweep(bad); }), "sweep.stop");
    bad = cfg;
    bad.erase("sweep");
    EXPECT_EQ(key_of([&] { parse_sweep(bad); }), "sweep");
}

TEST(Config, FssSizes)
{
    json cfg = {{"fss", {{"sizes", {1000, 2000, 3000}}}}};
    EXPECT_EQ(parse_fss_sizes(cfg), (std::vector<int>{1000, 2000, 3000}));
    cfg["fss"]["sizes"] = {1000, 2001};
    EXPECT_EQ(key_of([&] { parse_fss_sizes(cfg); }), "fss.sizes");
}

TEST(Config, SnapshotSelection)
{
    EXPECT_EQ(parse_snapshot_selection(json::object()), SnapshotSelection::bulk_only);
    EXPECT_EQ(parse_snapshot_selection(json{{"snapshot", {{"selection", "all_states"}}}}),
              SnapshotSelection::all_states);
    EXPECT_EQ(key_of([] { parse_snapshot_selection(json{{"snapshot", {{"selection", "edge"}}}}); }),
              "snapshot.selection");
}

TEST(Config, SerialisedSweepRoundTrips)
{
    SweepSpec s;
    s.base.t1 = 9.0;
    s.base.t2 = 1.0;
    s.base.w1 = 0.0039;
    s.base.n_cells = 1000;
    s.axis = SweepAxis::gamma;
    s.start = 0.0;
    s.stop = 6.0;
    s.num_points = 201;
    s.w2_rule = W2Rule::constant(1.563);
    s.compute.snapshots = {4.66946};
    s.options.eta_npr = 0.004;
    s.jobs = 2;

    RunOptions run{s.options, s.jobs};
    json cfg = model_to_json(s.base);
    cfg["options"] = options_to_json(run, s.base.sites());
    cfg["sweep"] = sweep_to_json(s);
    cfg["manifest"] = {{"tool", "qpssh"}};
    check_top_level(cfg);

    const auto back = parse_sweep(json::parse(cfg.dump()));
    EXPECT_EQ(back.base.t1, s.base.t1);
    EXPECT_EQ(back.base.w1, s.base.w1);
    EXPECT_EQ(back.base.beta, s.base.beta);
    EXPECT_EQ(back.axis, s.axis);
    EXPECT_EQ(back.num_points, s.num_points);
    EXPECT_EQ(back.w2_rule.kind, W2Rule::Kind::constant);
    EXPECT_EQ(*back.w2_rule.c, 1.563);
    EXPECT_EQ(back.compute.snapshots, s.compute.snapshots);
    EXPECT_EQ(back.options.thresholds(2000).eta_npr, 0.004);
    EXPECT_EQ(back.jobs, 2);
    EXPECT_EQ(back.options.winding.trim_fraction, s.options.winding.trim_fraction);
}

TEST(Config, AtomicWrite)
{
    const auto dir = std::filesystem::temp_directory_path() / "qpssh_config_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "sub" / "out.txt";
    write_file_atomic(path, "hello\n");
    std::ifstream in(path);
    std::string s;
    std::getline(in, s);
    EXPECT_EQ(s, "hello");
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    std::filesystem::remove_all(dir);
}

TEST(Config, LoadMissingFile)
{
    EXPECT_ANY_THROW(load_config("/nonexistent/qpssh.json"));
}
