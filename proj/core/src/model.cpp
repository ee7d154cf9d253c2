#include "nebp/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nebp {

bool KinematicState::finite() const {
    return std::isfinite(px) && std::isfinite(py) && std::isfinite(vx) && std::isfinite(vy);
}

Eigen::Matrix4d PotentialObject::covariance() const {
    const Eigen::Vector4d m = mean();
    const Eigen::Matrix4Xd centered = particles.colwise() - m;
    return centered * weights.asDiagonal() * centered.transpose();
}

void PotentialObject::validate() const {
    if (particles.cols() == 0) {
        throw ConfigError("potential object has no particles");
    }
    if (weights.size() != particles.cols()) {
        throw ConfigError("particle weight count does not match particle count");
    }
    if ((weights.array() < 0.0).any()) {
        throw ConfigError("negative particle weight");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-9) {
        throw ConfigError("particle weights do not sum to one");
    }
    if (!(existence >= 0.0 && existence <= 1.0)) {
        throw ConfigError("existence probability outside [0,1]");
    }
}

void Measurement::validate(Eigen::Index shape_dim) const {
    if (!(score > 0.0 && score <= 1.0)) {
        throw ConfigError("measurement score outside (0,1]");
    }
    if (shape.size() != shape_dim) {
        std::ostringstream os;
        os << "measurement shape descriptor has length " << shape.size() << ", expected " << shape_dim;
        throw ConfigError(os.str());
    }
    if (!std::isfinite(px) || !std::isfinite(py) || !std::isfinite(vx) || !std::isfinite(vy)) {
        throw ConfigError("measurement has non-finite components");
    }
}

double ModelParams::clutter_density() const {
    double density = 1.0 / roi.area();
    if (measures_velocity()) {
        const double side = 2.0 * velocity_extent;
        density /= side * side;
    }
    return density;
}

Eigen::MatrixXd ModelParams::default_meas_matrix() {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 4);
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    return h;
}

Eigen::Matrix4d ModelParams::cv_process_noise(double q, double dt) {
    const double dt2 = dt * dt;
    const double dt3 = dt2 * dt;
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (int k = 0; k < 2; ++k) {
        m(k, k) = q * dt3 / 3.0;
        m(k, k + 2) = q * dt2 / 2.0;
        m(k + 2, k) = q * dt2 / 2.0;
        m(k + 2, k + 2) = q * dt;
    }
    return m;
}

Eigen::Matrix4d ModelParams::cv_transition(double dt) {
    Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
    f(0, 2) = dt;
    f(1, 3) = dt;
    return f;
}

bool is_symmetric_positive_semidefinite(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols() || m.rows() == 0) return false;
    if (!m.allFinite()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvalues().minCoeff() >= -tol;
}

bool is_symmetric_positive_definite(const Eigen::MatrixXd& m, double tol) {
    if (!is_symmetric_positive_semidefinite(m, tol)) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvalues().minCoeff() > tol;
}

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

bool is_selection(const Eigen::MatrixXd& h) {
    if (h.cols() != 4 || (h.rows() != 2 && h.rows() != 4)) return false;
    return h.isApprox(Eigen::MatrixXd::Identity(h.rows(), 4));
}

}  // namespace

ModelParams validate_params(const ModelParams& raw) {
    require(raw.p_d > 0.0 && raw.p_d <= 1.0, "p_d must lie in (0,1]");
    require(raw.p_s > 0.0 && raw.p_s <= 1.0, "p_s must lie in (0,1]");
    // A zero false-alarm rate leaves every likelihood ratio undefined.
    require(std::isfinite(raw.mu_fa) && raw.mu_fa > 0.0, "mu_fa must be positive and finite");
    require(std::isfinite(raw.mu_u) && raw.mu_u >= 0.0, "mu_u must be nonnegative and finite");
    require(raw.roi.xmax > raw.roi.xmin && raw.roi.ymax > raw.roi.ymin, "roi must have positive area");
    require(is_selection(raw.meas_matrix), "meas_matrix must be [I2 0] (2x4) or I4 (4x4)");
    require(raw.meas_cov.rows() == raw.meas_matrix.rows() && raw.meas_cov.cols() == raw.meas_matrix.rows(),
            "meas_cov dimension must match meas_matrix rows");
    require(is_symmetric_positive_definite(raw.meas_cov), "meas_cov must be symmetric positive definite");
    require(is_symmetric_positive_semidefinite(raw.proc_cov), "proc_cov must be symmetric positive semidefinite");
    require(raw.dt > 0.0 && std::isfinite(raw.dt), "dt must be positive");
    require(raw.t_dec >= 0.0 && raw.t_dec <= 1.0, "t_dec must lie in [0,1]");
    require(raw.t_pru >= 0.0 && raw.t_pru <= 1.0, "t_pru must lie in [0,1]");
    require(raw.t_new >= 0.0 && raw.t_new <= 1.0, "t_new must lie in [0,1]");
    require(raw.n_particles > 0, "n_particles must be positive");
    require(raw.max_da_iterations > 0, "max_da_iterations must be positive");
    require(raw.da_tol >= 0.0, "da_tol must be nonnegative");
    require(raw.gate > 0.0, "gate must be positive");
    require(raw.new_vel_std >= 0.0 && std::isfinite(raw.new_vel_std), "new_vel_std must be nonnegative");
    require(raw.descriptor_decay >= 0.0 && raw.descriptor_decay <= 1.0, "descriptor_decay must lie in [0,1]");
    require(raw.velocity_extent > 0.0, "velocity_extent must be positive");
    return raw;
}

bool AssociationVector::consistent() const {
    const int num_legacy = static_cast<int>(a.size());
    const int num_meas = static_cast<int>(b.size());
    for (int i = 1; i <= num_legacy; ++i) {
        if (a[i - 1] < 0 || a[i - 1] > num_meas) return false;
    }
    for (int j = 1; j <= num_meas; ++j) {
        if (b[j - 1] < 0 || b[j - 1] > num_legacy) return false;
    }
    for (int i = 1; i <= num_legacy; ++i) {
        for (int j = 1; j <= num_meas; ++j) {
            if (!consistency_indicator(i, j, a[i - 1], b[j - 1])) return false;
        }
    }
    return true;
}

AssociationVector AssociationVector::from_object_oriented(std::vector<int> a, int num_measurements) {
    AssociationVector v;
    v.b.assign(static_cast<std::size_t>(num_measurements), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const int j = a[i];
        if (j < 0 || j > num_measurements) throw ConfigError("association index out of range");
        if (j == 0) continue;
        if (v.b[static_cast<std::size_t>(j - 1)] != 0) {
            throw ConfigError("two legacy POs associated with one measurement");
        }
        v.b[static_cast<std::size_t>(j - 1)] = static_cast<int>(i) + 1;
    }
    v.a = std::move(a);
    return v;
}

AssociationVector AssociationVector::from_measurement_oriented(std::vector<int> b, int num_legacy) {
    AssociationVector v;
    v.a.assign(static_cast<std::size_t>(num_legacy), 0);
    for (std::size_t j = 0; j < b.size(); ++j) {
        const int i = b[j];
        if (i < 0 || i > num_legacy) throw ConfigError("association index out of range");
        if (i == 0) continue;
        if (v.a[static_cast<std::size_t>(i - 1)] != 0) {
            throw ConfigError("two measurements associated with one legacy PO");
        }
        v.a[static_cast<std::size_t>(i - 1)] = static_cast<int>(j) + 1;
    }
    v.b = std::move(b);
    return v;
}

}  // namespace nebp
