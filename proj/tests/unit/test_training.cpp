#include "nebp/training.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

using namespace nebp;

namespace {

TruthObject object(std::uint64_t id, double x, double y) { return {TrackId{id}, {x, y, 0.0, 0.0}, Eigen::VectorXd()}; }

MeasurementFrame frame_at(std::initializer_list<std::pair<double, double>> points) {
    MeasurementFrame f;
    for (const auto& [x, y] : points) {
        Measurement m;
        m.px = x;
        m.py = y;
        m.shape = Eigen::VectorXd::Zero(2);
        f.measurements.push_back(m);
    }
    return f;
}

std::vector<Dataset> tiny_scenes(int n, std::uint64_t seed) {
    ScenarioFamily family;
    family.n_frames = 12;
    family.shape_dim = 4;
    std::vector<Dataset> out;
    for (int s = 0; s < n; ++s) out.push_back(simulate(sample_scenario(family, seed + static_cast<std::uint64_t>(s))));
    return out;
}

NebpConfig tiny_config(std::uint64_t seed) {
    NebpConfig c;
    c.shape_dim = 4;
    c.feature_dim = 8;
    c.hidden_dim = 16;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(Labels, MeasurementWithinDistanceIsTrue) {
    const auto f = frame_at({{1.5, 0.0}, {9.0, 0.0}});
    const FrameLabels l = label_frame({object(4, 0.0, 0.0)}, f, {}, 2.0);
    EXPECT_EQ(l.omega_gt(0), 1.0);
    EXPECT_EQ(l.omega_gt(1), 0.0);
    EXPECT_EQ(l.measurement_ids[0], 4);
    EXPECT_EQ(l.measurement_ids[1], -1);
}

TEST(Labels, NoObjectsNoPositives) {
    const auto f = frame_at({{1.0, 0.0}, {2.0, 0.0}});
    const FrameLabels l = label_frame({}, f, {3, -1}, 2.0);
    EXPECT_TRUE(l.omega_gt.isZero(0.0));
    EXPECT_TRUE(l.mu_gt.isZero(0.0));
}

TEST(Labels, AmbiguousGeometryMatchesExhaustiveAssignment) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TruthObject> gt;
        MeasurementFrame f;
        for (int k = 0; k < 3; ++k) {
            gt.push_back(object(static_cast<std::uint64_t>(10 + k), u(rng), u(rng)));
            f.measurements.push_back(frame_at({{u(rng), u(rng)}}).measurements[0]);
        }
        Eigen::Matrix3d cost;
        for (int g = 0; g < 3; ++g)
            for (int j = 0; j < 3; ++j)
                cost(g, j) = std::hypot(f.measurements[static_cast<std::size_t>(j)].px - gt[static_cast<std::size_t>(g)].state.px,
                                        f.measurements[static_cast<std::size_t>(j)].py - gt[static_cast<std::size_t>(g)].state.py);
        const auto ids = measurement_ids(gt, f, 2.0);
        double got = 0.0;
        for (int j = 0; j < 3; ++j) {
            ASSERT_GE(ids[static_cast<std::size_t>(j)], 10);
            got += cost(ids[static_cast<std::size_t>(j)] - 10, j);
        }
        EXPECT_NEAR(got, oracle::brute_force_assignment(cost), 1e-12);
    }
}

TEST(Labels, LabelerKeepsAndDropsIdentities) {
    PseudoLabeler labeler(2.0);
    const std::vector<TruthObject> gt{object(7, 0.0, 0.0)};
    const auto f = frame_at({{0.5, 0.0}});
    const FrameLabels first = labeler.label(gt, f, {}, {});
    labeler.register_new(100, first);
    EXPECT_EQ(labeler.id_of(TrackId{100}), 7);

    const std::vector<TrackId> legacy{TrackId{100}};
    const std::vector<Eigen::Vector4d> near{Eigen::Vector4d(0.2, 0.0, 0.0, 0.0)};
    const FrameLabels second = labeler.label(gt, f, legacy, near);
    EXPECT_EQ(second.mu_gt(0, 0), 1.0);
    // A new PO for the same object is not labeled while the legacy PO holds the id.
    labeler.register_new(200, second);
    EXPECT_EQ(labeler.id_of(TrackId{200}), -1);

    const std::vector<Eigen::Vector4d> far{Eigen::Vector4d(5.0, 0.0, 0.0, 0.0)};
    const FrameLabels third = labeler.label(gt, f, legacy, far);
    EXPECT_EQ(third.mu_gt(0, 0), 0.0);
    EXPECT_EQ(labeler.id_of(TrackId{100}), -1);
}

TEST(Losses, RejectionAtHalf) {
    EXPECT_NEAR(loss_rejection(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Ones(1), 0.1), std::numbers::ln2,
                1e-15);
    EXPECT_NEAR(loss_rejection_logits(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 0.1), std::numbers::ln2,
                1e-15);
    EXPECT_DOUBLE_EQ(TrainConfig{}.eps, 0.1);
}

TEST(Losses, RejectionVanishesAtLabels) {
    const Eigen::Vector3d y(1.0, 0.0, 1.0);
    const Eigen::Vector3d w(1.0 - 1e-12, 1e-12, 1.0 - 1e-12);
    EXPECT_LT(loss_rejection(w, y, 0.1), 1e-10);
    EXPECT_LT(loss_rejection_logits(Eigen::Vector3d(40.0, -40.0, 40.0), y, 0.1), 1e-15);
}

TEST(Losses, LogitFormMatchesProbabilityForm) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01(0.0, 2.0);
    Eigen::VectorXd z(6);
    for (int k = 0; k < 6; ++k) z(k) = n01(rng);
    const Eigen::VectorXd y = (Eigen::VectorXd(6) << 1, 0, 1, 1, 0, 0).finished();
    const Calibration cal{2.0, 0.3};
    Eigen::VectorXd w(6);
    for (int k = 0; k < 6; ++k) w(k) = 1.0 / (1.0 + std::exp(-2.0 * (z(k) - 0.3)));
    EXPECT_NEAR(loss_rejection_logits(z, y, 0.1, cal), loss_rejection(w, y, 0.1), 1e-12);
}

TEST(Losses, AssociationAtZeroAndLimits) {
    EXPECT_NEAR(loss_association(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1)), std::numbers::ln2, 1e-15);
    const Eigen::Matrix2d y = (Eigen::Matrix2d() << 1, 0, 0, 1).finished();
    EXPECT_LT(loss_association(80.0 * (2.0 * y.array() - 1.0).matrix(), y), 1e-30);
    EXPECT_EQ(loss_association(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)), 0.0);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01(0.0, 1.5);
    const Eigen::MatrixXd mu = Eigen::MatrixXd::NullaryExpr(3, 4, [&]() { return n01(rng); });
    Eigen::MatrixXd y(3, 4);
    for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = static_cast<double>(rng() % 2);
    const Eigen::MatrixXd analytic = loss_association_grad(mu, y);
    const Eigen::VectorXd numeric = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& v) { return loss_association(v.reshaped(3, 4), y); }, mu.reshaped(), 1e-6);
    EXPECT_LE((analytic.reshaped() - numeric).norm() / numeric.norm(), 1e-6);

    const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(5, [&]() { return n01(rng); });
    const Eigen::VectorXd yz = (Eigen::VectorXd(5) << 1, 0, 0, 1, 0).finished();
    const Calibration cal{1.7, -0.4};
    const Eigen::VectorXd numeric_r = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& v) { return loss_rejection_logits(v, yz, 0.1, cal); }, z, 1e-6);
    EXPECT_LE((loss_rejection_grad(z, yz, 0.1, cal) - numeric_r).norm() / numeric_r.norm(), 1e-6);
}

TEST(Training, Defaults) {
    const TrainConfig c;
    EXPECT_DOUBLE_EQ(c.lr, 1e-4);
    EXPECT_EQ(c.epochs, 8);
    EXPECT_DOUBLE_EQ(c.t_dist, 2.0);
}

TEST(Training, ZeroEpochsKeepsInitialization) {
    auto nets = NebpNetworks::create(tiny_config(1));
    const auto init = nets;
    Adam adam;
    TrainConfig cfg;
    cfg.epochs = 0;
    ModelParams params;
    params.n_particles = 50;
    EXPECT_TRUE(train(nets, adam, tiny_scenes(1, 0), params, cfg).empty());
    for (std::size_t n = 0; n < 6; ++n) EXPECT_EQ(nets.all()[n]->flat_params(), init.all()[n]->flat_params());
}

TEST(Training, LossDecreasesOnTinyDataset) {
    const auto scenes = tiny_scenes(2, 40);
    ModelParams params;
    params.n_particles = 50;
    int decreasing = 0;
    const int seeds = 10;
    for (int seed = 0; seed < seeds; ++seed) {
        auto nets = NebpNetworks::create(tiny_config(static_cast<std::uint64_t>(seed) + 1));
        AdamConfig ac;
        ac.lr = 1e-3;
        Adam adam(ac);
        TrainConfig cfg;
        cfg.lr = ac.lr;
        cfg.epochs = 3;
        cfg.seed = static_cast<std::uint64_t>(seed);
        const auto logs = train(nets, adam, scenes, params, cfg);
        ASSERT_EQ(logs.size(), 3u);
        if (logs[1].loss_total < logs[0].loss_total && logs[2].loss_total < logs[1].loss_total) ++decreasing;
    }
    EXPECT_GE(decreasing, 9);
}

TEST(Training, SameSeedSameWeights) {
    const auto scenes = tiny_scenes(1, 60);
    ModelParams params;
    params.n_particles = 50;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 3;
    auto a = NebpNetworks::create(tiny_config(2));
    auto b = a;
    Adam adam_a;
    Adam adam_b;
    train(a, adam_a, scenes, params, cfg);
    train(b, adam_b, scenes, params, cfg);
    for (std::size_t n = 0; n < 6; ++n) EXPECT_EQ(a.all()[n]->flat_params(), b.all()[n]->flat_params());
}

TEST(Calibration, GridShape) {
    const CalibrationGrid g;
    EXPECT_EQ(g.temperatures.size(), 8u);
    EXPECT_EQ(g.sigmoid_deltas.size(), 5u);
    EXPECT_TRUE(std::isinf(g.temperatures.back()));
}

TEST(Calibration, SinglePointIsReturned) {
    CalibrationGrid g;
    g.temperatures = {4.0};
    g.sigmoid_deltas = {0.05};
    const auto r = grid_search(g, [](const Calibration&) { return 1.0; }, true);
    EXPECT_EQ(r.best.temperature, 4.0);
    EXPECT_NEAR(r.best.delta, std::log(0.05 / 0.95), 1e-15);
}

TEST(Calibration, ConstantMetricTieBreak) {
    for (bool lower : {true, false}) {
        const auto r = grid_search(CalibrationGrid{}, [](const Calibration&) { return 0.7; }, lower);
        EXPECT_EQ(r.best.temperature, 0.5);
        EXPECT_NEAR(r.best.delta, logit(0.01), 1e-15);
        EXPECT_EQ(r.table.size(), 40u);
    }
}

TEST(Calibration, SkipsNonFiniteValues) {
    const auto r = grid_search(
        CalibrationGrid{},
        [](const Calibration& c) { return c.temperature < 2.0 ? std::nan("") : c.temperature; }, true);
    EXPECT_EQ(r.best.temperature, 2.0);
    EXPECT_THROW(grid_search(CalibrationGrid{}, [](const Calibration&) { return std::nan(""); }, true),
                 std::runtime_error);
    EXPECT_THROW(parse_calibration_metric("mota"), ConfigError);
}

TEST(ParallelFor, EveryIndexOnce) {
    std::vector<std::atomic<int>> hits(97);
    parallel_for(hits.size(), 4, [&](std::size_t k) { ++hits[k]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(5, 3, [](std::size_t k) { if (k == 3) throw std::runtime_error("x"); }),
                 std::runtime_error);
}
