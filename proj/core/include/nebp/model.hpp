#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nebp {

/// Raised for invalid configuration or parameter values. The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// 2-D position (m) and velocity (m/s).
struct KinematicState {
    double px = 0.0;
    double py = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    [[nodiscard]] Eigen::Vector4d vec() const { return {px, py, vx, vy}; }
    [[nodiscard]] static KinematicState from(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
    [[nodiscard]] bool finite() const;

    friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

/// Opaque track identity. Only used for labeling and metrics, never for inference.
struct TrackId {
    std::uint64_t value = 0;
    friend auto operator<=>(const TrackId&, const TrackId&) = default;
};

enum class PoKind { kLegacy, kNew };

/// Particle belief over the kinematic state plus a Bernoulli existence probability.
///
/// Nonexistence is carried entirely by `1 - existence`; no dummy state density is stored.
/// `descriptor` is the running shape-descriptor estimate used by the neural enhancement.
struct PotentialObject {
    Eigen::Matrix4Xd particles;
    Eigen::VectorXd weights;
    double existence = 0.0;
    TrackId id;
    PoKind kind = PoKind::kNew;
    Eigen::VectorXd descriptor;
    /// Estimated object score from the latest update (existence plus association-weighted detection scores).
    double score = 0.0;
    /// p(b_j = 0) of the measurement that spawned this PO; only meaningful for new POs.
    double p_unassociated = 1.0;

    [[nodiscard]] Eigen::Vector4d mean() const { return particles * weights; }
    [[nodiscard]] Eigen::Matrix4d covariance() const;
    /// Throws ConfigError if weights are not normalized, existence is outside [0,1] or there are no particles.
    void validate() const;
};

/// One detection: position, velocity, confidence score in (0,1] and a shape descriptor.
struct Measurement {
    double px = 0.0;
    double py = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double score = 1.0;
    Eigen::VectorXd shape;
    /// Originating ground-truth object, -1 for clutter. Carried for export only; trackers never read it.
    std::int64_t source = -1;

    [[nodiscard]] Eigen::Vector4d vec() const { return {px, py, vx, vy}; }
    void validate(Eigen::Index shape_dim) const;
};

struct MeasurementFrame {
    int frame = 0;
    std::vector<Measurement> measurements;

    [[nodiscard]] std::size_t size() const { return measurements.size(); }
};

/// Axis-aligned rectangle in meters.
struct Rect {
    double xmin = -54.0;
    double xmax = 54.0;
    double ymin = -54.0;
    double ymax = 54.0;

    [[nodiscard]] double area() const { return (xmax - xmin) * (ymax - ymin); }
    [[nodiscard]] bool contains(double x, double y) const {
        return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
    }
};

/// Statistical model of the tracker plus its algorithmic thresholds.
///
/// The measurement map must select either the position (2x4) or the full state (4x4). False alarms
/// and unknown objects are uniform over `roi`; when velocity is measured they are additionally
/// uniform over the velocity box [-velocity_extent, velocity_extent]^2.
struct ModelParams {
    double p_d = 0.9;
    double p_s = 0.999;
    double mu_fa = 2.0;
    double mu_u = 0.1;
    Rect roi;
    Eigen::MatrixXd meas_matrix = default_meas_matrix();
    Eigen::MatrixXd meas_cov = Eigen::Matrix2d::Identity() * 0.25;
    Eigen::Matrix4d proc_cov = cv_process_noise(0.5, 0.5);
    double dt = 0.5;
    double t_dec = 0.5;
    double t_pru = 1e-3;
    double t_new = 0.8;
    int n_particles = 500;
    int max_da_iterations = 200;
    double da_tol = 1e-10;
    /// Squared Mahalanobis gate; measurements beyond it get a zero likelihood ratio. +inf disables gating.
    double gate = 13.8;
    /// Standard deviation of the velocity prior added to measured velocity when spawning new POs.
    double new_vel_std = 1.0;
    double velocity_extent = 20.0;
    /// Decay of the running shape-descriptor estimate kept for every PO.
    double descriptor_decay = 0.9;

    [[nodiscard]] Eigen::Index meas_dim() const { return meas_matrix.rows(); }
    [[nodiscard]] bool measures_velocity() const { return meas_matrix.rows() == 4; }
    /// Density of the uniform false-alarm (and unknown-object) distribution in measurement space.
    [[nodiscard]] double clutter_density() const;

    static Eigen::MatrixXd default_meas_matrix();
    /// Continuous white-noise acceleration covariance with spectral density q over period dt.
    static Eigen::Matrix4d cv_process_noise(double q, double dt);
    /// Constant-velocity transition matrix.
    static Eigen::Matrix4d cv_transition(double dt);
};

/// Returns `raw` unchanged when every invariant holds, otherwise throws ConfigError naming the
/// first violated one.
ModelParams validate_params(const ModelParams& raw);

/// Object-oriented (a) and measurement-oriented (b) association vectors.
///
/// a[i] in {0..J} (0 = missed), b[j] in {0..I} (0 = not from a legacy PO). Indices are 1-based
/// for associations, matching the usual convention.
struct AssociationVector {
    std::vector<int> a;
    std::vector<int> b;

    /// Every consistency indicator evaluates to one.
    [[nodiscard]] bool consistent() const;
    static AssociationVector from_object_oriented(std::vector<int> a, int num_measurements);
    static AssociationVector from_measurement_oriented(std::vector<int> b, int num_legacy);
};

/// Consistency indicator between a_i and b_j for legacy PO i and measurement j (both 1-based).
[[nodiscard]] constexpr bool consistency_indicator(int i, int j, int a_i, int b_j) {
    return (a_i == j) == (b_j == i);
}

[[nodiscard]] bool is_symmetric_positive_definite(const Eigen::MatrixXd& m, double tol = 1e-12);
[[nodiscard]] bool is_symmetric_positive_semidefinite(const Eigen::MatrixXd& m, double tol = 1e-12);

}  // namespace nebp
