#include "nebp/assignment.hpp"
#include "nebp/model.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nebp;

TEST(ModelParams, DefaultsAreValid) {
    ModelParams p;
    p.p_s = 0.999;
    EXPECT_NO_THROW(validate_params(p));
}

TEST(ModelParams, RejectsZeroDetectionProbability) {
    ModelParams p;
    p.p_d = 0.0;
    EXPECT_THROW(validate_params(p), ConfigError);
}

TEST(ModelParams, RejectsIndefiniteMeasurementCovariance) {
    ModelParams p;
    p.meas_cov = Eigen::Vector2d(1.0, -0.5).asDiagonal();
    EXPECT_THROW(validate_params(p), ConfigError);
}

TEST(ModelParams, RejectsNonSelectionMeasurementMatrix) {
    ModelParams p;
    p.meas_matrix = Eigen::MatrixXd::Ones(2, 4);
    EXPECT_THROW(validate_params(p), ConfigError);
}

TEST(ModelParams, ConstantVelocityTransition) {
    const Eigen::Matrix4d f = ModelParams::cv_transition(0.5);
    const Eigen::Vector4d x(1.0, 2.0, 3.0, -4.0);
    EXPECT_TRUE((f * x).isApprox(Eigen::Vector4d(2.5, 0.0, 3.0, -4.0)));
}

TEST(ModelParams, ProcessNoiseIsPositiveSemidefinite) {
    const Eigen::Matrix4d q = ModelParams::cv_process_noise(0.5, 0.5);
    EXPECT_TRUE(is_symmetric_positive_semidefinite(q));
    // Position variance q dt^3 / 3.
    EXPECT_NEAR(q(0, 0), 0.5 * 0.125 / 3.0, 1e-15);
}

TEST(AssociationVector, ConsistencyIndicator) {
    EXPECT_TRUE(consistency_indicator(1, 2, 2, 1));
    EXPECT_TRUE(consistency_indicator(1, 2, 0, 0));
    EXPECT_FALSE(consistency_indicator(1, 2, 2, 0));
    EXPECT_FALSE(consistency_indicator(1, 2, 0, 1));
}

TEST(AssociationVector, RoundTripBetweenViews) {
    const auto v = AssociationVector::from_object_oriented({2, 0, 1}, 3);
    EXPECT_TRUE(v.consistent());
    EXPECT_EQ(v.b, (std::vector<int>{3, 1, 0}));
    const auto w = AssociationVector::from_measurement_oriented(v.b, 3);
    EXPECT_EQ(w.a, v.a);
}

TEST(AssociationVector, DetectsDoubleAssociation) {
    EXPECT_THROW(AssociationVector::from_object_oriented({1, 1}, 2), ConfigError);
}

TEST(PotentialObject, ValidateChecksWeights) {
    PotentialObject po;
    po.particles = Eigen::Matrix4Xd::Zero(4, 2);
    po.weights = Eigen::Vector2d(0.5, 0.4);
    po.existence = 0.5;
    EXPECT_THROW(po.validate(), ConfigError);
    po.weights = Eigen::Vector2d(0.5, 0.5);
    EXPECT_NO_THROW(po.validate());
}

TEST(Assignment, MatchesBruteForce) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 5);
        const int cols = 1 + static_cast<int>(rng() % 5);
        Eigen::MatrixXd c(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int k = 0; k < cols; ++k) c(r, k) = u(rng);
        const auto a = solve_assignment(c);
        ASSERT_EQ(static_cast<int>(a.size()), rows);
        int assigned = 0;
        std::vector<bool> used(static_cast<std::size_t>(cols), false);
        for (int col : a) {
            if (col < 0) continue;
            ASSERT_FALSE(used[static_cast<std::size_t>(col)]);
            used[static_cast<std::size_t>(col)] = true;
            ++assigned;
        }
        EXPECT_EQ(assigned, std::min(rows, cols));
        EXPECT_NEAR(assignment_cost(c, a), oracle::brute_force_assignment(c), 1e-9);
    }
}

TEST(Assignment, EmptyInput) {
    EXPECT_TRUE(solve_assignment(Eigen::MatrixXd(0, 3)).empty());
    EXPECT_EQ(solve_assignment(Eigen::MatrixXd(2, 0)), (std::vector<int>{-1, -1}));
}
