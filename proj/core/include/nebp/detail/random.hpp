#pragma once

#include <Eigen/Dense>

#include <random>

namespace nebp {

template <typename Rng>
Eigen::VectorXd random_unit_vector(int dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(dim);
    do {
        for (int k = 0; k < dim; ++k) v(k) = normal(rng);
    } while (v.norm() < 1e-12);
    return v.normalized();
}

/// Beta(alpha, beta) sample via two gamma draws.
template <typename Rng>
double sample_beta(double alpha, double beta, Rng& rng) {
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

/// Zero-mean Gaussian sample with covariance sqrt_cov * sqrt_cov^T.
template <typename Rng, typename Derived>
Eigen::VectorXd sample_gaussian(const Eigen::MatrixBase<Derived>& sqrt_cov, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd e(sqrt_cov.cols());
    for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = normal(rng);
    return sqrt_cov * e;
}

/// Symmetric square root of a PSD matrix (tolerates singular inputs such as zero process noise).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace nebp
