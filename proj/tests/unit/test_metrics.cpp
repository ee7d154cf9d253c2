#include "nebp/metrics.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace nebp;

namespace {

Estimate est(std::uint64_t id, double x, double y, double score = 1.0) {
    return {TrackId{id}, {x, y, 0.0, 0.0}, 1.0, score};
}

TruthObject obj(std::uint64_t id, double x, double y) { return {TrackId{id}, {x, y, 0.0, 0.0}, Eigen::VectorXd()}; }

/// Ground truth with one object moving along x, and a perfect tracker for it.
std::pair<GroundTruth, std::vector<std::vector<Estimate>>> single_track(int frames) {
    GroundTruth gt;
    std::vector<std::vector<Estimate>> e;
    for (int k = 0; k < frames; ++k) {
        gt.frames.push_back({obj(1, k, 0.0)});
        e.push_back({est(50, k, 0.0)});
    }
    return {gt, e};
}

}  // namespace

TEST(Gospa, IdenticalSetsAreZero) {
    const std::vector<Eigen::Vector2d> x{{0.0, 0.0}, {3.0, 4.0}};
    EXPECT_EQ(gospa_frame(x, x).value, 0.0);
}

TEST(Gospa, MissedObjectCostsHalfCutoff) {
    const GospaFrame f = gospa_frame({}, {Eigen::Vector2d(1.0, 1.0)});
    EXPECT_DOUBLE_EQ(f.missed, 50.0);
    EXPECT_DOUBLE_EQ(f.value, std::sqrt(50.0));
    EXPECT_EQ(f.n_missed, 1);
}

TEST(Gospa, ComponentsSumToPower) {
    const GospaFrame f = gospa_frame({{0.0, 0.0}, {20.0, 0.0}, {5.0, 5.0}}, {{1.0, 0.0}, {-30.0, 0.0}});
    EXPECT_NEAR(f.localization + f.false_objects + f.missed, f.value * f.value, 1e-9);
    EXPECT_EQ(f.n_assigned, 1);
    EXPECT_EQ(f.n_false, 2);
    EXPECT_EQ(f.n_missed, 1);
}

TEST(Gospa, MatchesBruteForce) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-12.0, 12.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Eigen::Vector2d> x(rng() % 5);
        std::vector<Eigen::Vector2d> y(rng() % 5);
        for (auto& v : x) v = Eigen::Vector2d(u(rng), u(rng));
        for (auto& v : y) v = Eigen::Vector2d(u(rng), u(rng));
        EXPECT_NEAR(gospa_frame(x, y).value, oracle::gospa_brute(x, y, 10.0, 2.0), 1e-9);
    }
}

TEST(Gospa, SequenceTotals) {
    auto [gt, e] = single_track(4);
    e[1].clear();
    e[2].push_back(est(9, 40.0, 0.0));
    const GospaResult r = gospa(e, gt);
    EXPECT_DOUBLE_EQ(r.missed, 50.0);
    EXPECT_DOUBLE_EQ(r.false_objects, 50.0);
    EXPECT_DOUBLE_EQ(r.total, 100.0);
    EXPECT_DOUBLE_EQ(r.mean, 2.0 * std::sqrt(50.0) / 4.0);
}

TEST(Clear, PerfectTracker) {
    const auto [gt, e] = single_track(10);
    const ClearSweep s = clear_sweep(e, gt);
    EXPECT_DOUBLE_EQ(s.amota, 1.0);
    EXPECT_EQ(s.all.ids, 0);
    EXPECT_EQ(s.all.frag, 0);
    EXPECT_EQ(s.all.fp, 0);
    EXPECT_DOUBLE_EQ(s.all.mota(), 1.0);
}

TEST(Clear, SingleIdentitySwitch) {
    auto [gt, e] = single_track(6);
    for (int k = 3; k < 6; ++k) e[static_cast<std::size_t>(k)][0].id = TrackId{51};
    const ClearCounts c = clear_counts(e, gt, 2.0);
    EXPECT_EQ(c.ids, 1);
    EXPECT_EQ(c.frag, 0);
}

TEST(Clear, FragmentationWhenMatchLost) {
    auto [gt, e] = single_track(6);
    e[2].clear();
    e[4][0].state.px += 5.0;  // outside the matching distance
    const ClearCounts c = clear_counts(e, gt, 2.0);
    EXPECT_EQ(c.frag, 2);
    EXPECT_EQ(c.ids, 0);
    EXPECT_EQ(c.fn, 2);
    EXPECT_EQ(c.fp, 1);
}

TEST(Clear, NoFragmentationWhenObjectLeaves) {
    GroundTruth gt;
    gt.frames = {{obj(1, 0.0, 0.0)}, {obj(1, 1.0, 0.0)}, {}};
    const std::vector<std::vector<Estimate>> e{{est(5, 0.0, 0.0)}, {est(5, 1.0, 0.0)}, {}};
    EXPECT_EQ(clear_counts(e, gt, 2.0).frag, 0);
}

TEST(Clear, SwitchAcrossGapCounts) {
    auto [gt, e] = single_track(5);
    e[2].clear();
    e[3][0].id = TrackId{77};
    e[4][0].id = TrackId{77};
    const ClearCounts c = clear_counts(e, gt, 2.0);
    EXPECT_EQ(c.ids, 1);
    EXPECT_EQ(c.frag, 1);
}

TEST(Clear, ScoreThresholdFilters) {
    auto [gt, e] = single_track(4);
    e[0].push_back(est(8, 30.0, 0.0, 0.1));
    EXPECT_EQ(clear_counts(e, gt, 2.0).fp, 1);
    EXPECT_EQ(clear_counts(e, gt, 2.0, 0.5).fp, 0);
    // The low-score false track only costs at thresholds that are never needed.
    EXPECT_DOUBLE_EQ(clear_sweep(e, gt).amota, 1.0);
}

TEST(Clear, HalfRecallCurve) {
    GroundTruth gt;
    std::vector<std::vector<Estimate>> e;
    for (int k = 0; k < 4; ++k) {
        gt.frames.push_back({obj(1, 0.0, 0.0), obj(2, 50.0, 0.0)});
        e.push_back({est(10, 0.0, 0.0)});
    }
    const ClearSweep s = clear_sweep(e, gt, 2.0, 40);
    // Recall 0.5 is the ceiling: targets up to 0.5 reach MOTAR 1, higher ones are unreachable.
    for (const auto& p : s.curve) {
        if (p.recall_target <= 0.5 + 1e-12) {
            EXPECT_TRUE(p.reachable);
            EXPECT_DOUBLE_EQ(p.motar, 1.0);
        } else {
            EXPECT_FALSE(p.reachable);
            EXPECT_EQ(p.motar, 0.0);
        }
    }
}

TEST(Evaluate, AggregateAveragesScenes) {
    EvalReport a;
    a.gospa_mean = 2.0;
    a.amota = 0.5;
    a.ids = 3;
    EvalReport b;
    b.gospa_mean = 4.0;
    b.amota = 1.0;
    b.ids = 1;
    const EvalReport m = aggregate({a, b});
    EXPECT_DOUBLE_EQ(m.gospa_mean, 3.0);
    EXPECT_DOUBLE_EQ(m.amota, 0.75);
    EXPECT_EQ(m.ids, 4);
}

TEST(Evaluate, LengthMismatchThrows) {
    auto [gt, e] = single_track(3);
    e.pop_back();
    EXPECT_ANY_THROW(evaluate(e, gt));
}
