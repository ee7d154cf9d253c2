#pragma once

#include "nebp/detail/random.hpp"
#include "nebp/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace nebp {

struct BirthEvent {
    int frame = 0;
    KinematicState state;
    /// Object shape descriptor; normalized to unit length on generation. Empty means "draw one".
    Eigen::VectorXd shape;
};

/// Forces the object created by birth_schedule[birth_index] to disappear at `frame`.
struct DeathEvent {
    int birth_index = 0;
    int frame = 0;
};

/// A persistent false-alarm emitter: Poisson(rate) detections per frame around a fixed position,
/// all carrying (noisy copies of) the source descriptor.
struct ClutterSource {
    double px = 0.0;
    double py = 0.0;
    Eigen::VectorXd shape;
    double rate = 1.0;
    double spread = 0.0;
};

struct BetaParams {
    double alpha = 1.0;
    double beta = 1.0;
};

struct ScenarioConfig {
    int n_frames = 20;
    double dt = 0.5;
    Rect roi;
    std::vector<BirthEvent> birth_schedule;
    std::vector<DeathEvent> death_schedule;
    std::vector<ClutterSource> clutter_sources;
    double uniform_clutter_rate = 0.0;
    double detection_prob = 1.0;
    /// Noise covariance of the measured (px, py, vx, vy).
    Eigen::Matrix4d meas_noise_cov = Eigen::Vector4d(0.25, 0.25, 0.25, 0.25).asDiagonal();
    /// Spectral density of the white-noise acceleration driving ground-truth trajectories.
    double process_noise = 0.0;
    int shape_dim = 8;
    double shape_noise = 0.1;
    /// Velocity spread of clutter detections (uniform and persistent).
    double clutter_velocity_std = 0.5;
    BetaParams true_score{6.0, 2.0};
    BetaParams clutter_score{2.0, 4.0};
    std::uint64_t rng_seed = 0;

    /// Throws ConfigError on negative rates or events outside [0, n_frames).
    void validate() const;
};

struct TruthObject {
    TrackId id;
    KinematicState state;
    Eigen::VectorXd shape;
};

/// Per-frame list of existing objects. A track's states occupy a contiguous frame interval; objects
/// leaving the region of interest terminate.
struct GroundTruth {
    std::vector<std::vector<TruthObject>> frames;
};

GroundTruth generate_ground_truth(const ScenarioConfig& cfg);

/// One measurement frame per ground-truth frame. Uses an RNG stream independent of the one used for
/// the trajectories, so the same seed yields the same measurements for the same ground truth.
std::vector<MeasurementFrame> generate_measurements(const GroundTruth& gt, const ScenarioConfig& cfg);

struct Dataset {
    ScenarioConfig config;
    GroundTruth truth;
    std::vector<MeasurementFrame> frames;
};

Dataset simulate(const ScenarioConfig& cfg);

/// Randomized scenario family with persistent clutter. Clutter-source descriptors are drawn around a
/// small set of prototypes fixed by `family_seed`, so a network can learn them across scenes.
struct ScenarioFamily {
    int n_frames = 40;
    double dt = 0.5;
    Rect roi{-40.0, 40.0, -40.0, 40.0};
    int min_objects = 3;
    int max_objects = 6;
    double min_speed = 2.0;
    double max_speed = 6.0;
    double birth_window = 0.5;   ///< fraction of the scene during which births happen
    int n_clutter_sources = 3;
    double clutter_source_rate = 0.9;
    double clutter_source_spread = 0.3;
    int n_clutter_prototypes = 3;
    double prototype_noise = 0.05;
    double uniform_clutter_rate = 2.0;
    double detection_prob = 0.9;
    double process_noise = 0.2;
    int shape_dim = 8;
    double shape_noise = 0.15;
    std::uint64_t family_seed = 7;
};

ScenarioConfig sample_scenario(const ScenarioFamily& family, std::uint64_t scene_seed);

}  // namespace nebp

