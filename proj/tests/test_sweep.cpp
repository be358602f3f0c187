#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qpssh/sweep.hpp"

using namespace qpssh;

namespace {

SweepSpec small_sweep(int points)
{
    SweepSpec s;
    s.base.t1 = 1.0;
    s.base.t2 = 1.3;
    s.base.gamma = 0.05;
    s.base.n_cells = 60;
    s.start = 0.0;
    s.stop = 3.0;
    s.num_points = points;
    s.jobs = 1;
    return s;
}

}  // namespace

TEST(Sweep, W2Rules)
{
    EXPECT_EQ(W2Rule::equal().apply(1.7), 1.7);
    EXPECT_EQ(W2Rule::constant(1.563).apply(0.2), 1.563);
    const auto r = W2Rule::cosine(-2.0, 3.0, 2.0);
    EXPECT_NEAR(r.apply(0.0), 0.0, 1e-15);
    EXPECT_NEAR(r.apply(std::acos(0.0) / 3.0), 2.0, 1e-14);
    EXPECT_NEAR(r.apply(1.0), -2.0 * std::cos(3.0) + 2.0, 1e-15);
    W2Rule bad;
    bad.kind = W2Rule::Kind::cosine;
    bad.a = 1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = W2Rule::equal();
    bad.c = 1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Sweep, ParamsAtFollowAxisAndRule)
{
    auto s = small_sweep(5);
    s.w2_rule = W2Rule::cosine(-2.0, 3.0, 2.0);
    const auto p = s.params_at(0.5);
    EXPECT_EQ(p.w1, 0.5);
    EXPECT_NEAR(p.w2, -2.0 * std::cos(1.5) + 2.0, 1e-15);

    s.axis = SweepAxis::gamma;
    s.base.w1 = 0.0039;
    s.w2_rule = W2Rule::constant(1.563);
    const auto q = s.params_at(4.5);
    EXPECT_EQ(q.gamma, 4.5);
    EXPECT_EQ(q.w1, 0.0039);
    EXPECT_EQ(q.w2, 1.563);
    EXPECT_DOUBLE_EQ(s.grid_value(4), 3.0);
}

TEST(Sweep, SpecValidation)
{
    auto s = small_sweep(1);
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = small_sweep(3);
    s.stop = s.start;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = small_sweep(3);
    s.jobs = -1;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Sweep, DerivativeIsExactForQuadratics)
{
    std::vector<double> x, y;
    for (int i = 0; i <= 10; ++i) {
        x.push_back(-1.0 + 0.3 * i);
        y.push_back(x.back() * x.back() - 4.0 * x.back() + 1.0);
    }
    const auto d = derivative(x, y);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(d[i], 2.0 * x[i] - 4.0, 1e-12) << "x=" << x[i];
}

TEST(Sweep, DerivativeRejectsBadGrids)
{
    const std::vector<double> y{1.0, 2.0, 3.0};
    EXPECT_THROW(derivative(std::vector<double>{0.0, 1.0, 3.0}, y), std::invalid_argument);
    EXPECT_THROW(derivative(std::vector<double>{2.0, 1.0, 0.0}, y), std::invalid_argument);
    EXPECT_THROW(derivative(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(derivative(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Sweep, DetectTransitionsOnSmoothedSteps)
{
    std::vector<double> x, y;
    for (int i = 0; i < 201; ++i) {
        x.push_back(0.02 * i);
        y.push_back(std::tanh((x.back() - 1.1) / 0.01) - 0.5 * std::tanh((x.back() - 2.9) / 0.01) +
                    1e-3 * std::sin(x.back()));
    }
    const auto peaks = detect_transitions(derivative(x, y), x);
    ASSERT_EQ(peaks.size(), 2u);
    EXPECT_NEAR(peaks[0], 1.1, 0.02);
    EXPECT_NEAR(peaks[1], 2.9, 0.02);
}

TEST(Sweep, DetectTransitionsMergesAdjacentPeaks)
{
    std::vector<double> g(21), d(21, 1.0);
    for (int i = 0; i < 21; ++i)
        g[i] = i;
    d[10] = 100.0;
    d[11] = 100.0;
    const auto peaks = detect_transitions(d, g);
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_EQ(peaks[0], 10.0);
    EXPECT_TRUE(detect_transitions(std::vector<double>(21, 1.0), g).empty());
}

TEST(Sweep, TwoPointSweep)
{
    const auto t = run_sweep(small_sweep(2));
    ASSERT_EQ(t.records.size(), 2u);
    EXPECT_EQ(t.records[0].axis_value, 0.0);
    EXPECT_EQ(t.records[1].axis_value, 3.0);
    EXPECT_NEAR(t.records[0].mu_calibrated, 1.0, 0.05);
    EXPECT_EQ(t.records[0].regime, Regime::Extended);
    EXPECT_EQ(t.records[1].regime, Regime::Localized);
    EXPECT_DOUBLE_EQ(t.metadata.thresholds.eta_ipr, 8.0 / 120.0);

    std::ostringstream os;
    write_sweep_csv(os, t);
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')),
              "axis,mu_raw,mu_calibrated,absE_edge,ipr_bulk,npr_bulk,ipr_edge,npr_edge,dnpr_edge,regime,flags");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}

TEST(Sweep, ResultsIndependentOfWorkerCount)
{
    auto s = small_sweep(7);
    const auto a = run_sweep(s);
    s.jobs = 3;
    const auto b = run_sweep(s);
    EXPECT_EQ(b.metadata.workers, 3);
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        EXPECT_EQ(a.records[k].mu_raw, b.records[k].mu_raw);
        EXPECT_EQ(a.records[k].npr_edge, b.records[k].npr_edge);
        EXPECT_EQ(a.records[k].regime, b.records[k].regime);
    }
}

TEST(Sweep, ComputeFlagsLeaveColumnsEmpty)
{
    auto s = small_sweep(3);
    s.compute.winding = false;
    s.compute.edge = false;
    s.compute.spectrum_dump = true;
    const auto t = run_sweep(s);
    EXPECT_TRUE(std::isnan(t.records[0].mu_raw));
    EXPECT_TRUE(std::isnan(t.records[0].npr_edge));
    EXPECT_FALSE(std::isnan(t.records[0].npr_bulk));
    EXPECT_EQ(t.records[0].states.size(), 120u);
    EXPECT_THROW(t.column("nope"), std::invalid_argument);
}

TEST(Sweep, FiniteSizeScan)
{
    ModelParams p;
    p.t1 = 1.0;
    p.t2 = 1.3;
    p.w1 = p.w2 = 3.0;
    p.gamma = 0.05;
    const std::vector<int> sizes{40, 80};
    const auto recs = finite_size_scan(p, sizes, {}, 1);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].L, 40);
    EXPECT_EQ(recs[1].L, 80);
    for (const auto& r : recs)
        EXPECT_EQ(r.regime, Regime::Localized);
    EXPECT_THROW(validate_sizes(std::vector<int>{40, 81}), std::invalid_argument);
    EXPECT_THROW(validate_sizes(std::vector<int>{80, 40}), std::invalid_argument);
    EXPECT_THROW(validate_sizes(std::vector<int>{}), std::invalid_argument);
}

TEST(Sweep, SnapshotWeightsAreNormalised)
{
    ModelParams p;
    p.t1 = 1.0;
    p.t2 = 1.3;
    p.w1 = p.w2 = 0.5;
    p.gamma = 0.1;
    p.n_cells = 20;
    for (auto sel : {SnapshotSelection::all_states, SnapshotSelection::bulk_only, SnapshotSelection::lowest_abs_energy}) {
        const auto states = snapshot(p, sel);
        const std::size_t expect = sel == SnapshotSelection::all_states  ? 40u
                                   : sel == SnapshotSelection::bulk_only ? 38u
                                                                         : 2u;
        ASSERT_EQ(states.size(), expect);
        for (const auto& s : states) {
            double total = 0.0;
            for (double w : s.weights)
                total += w;
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
    const auto edges = snapshot(p, SnapshotSelection::lowest_abs_energy);
    EXPECT_TRUE(edges[0].is_edge && edges[1].is_edge);
}

TEST(Sweep, ErrorsBecomeFlags)
{
    ModelParams p;
    p.n_cells = 1;
    const auto r = evaluate_point(p, {}, {});
    EXPECT_TRUE(r.has_flag("error:"));
    EXPECT_EQ(join_flags({"a", "b"}), "a;b");
}
