#include "nebp/data_association.hpp"

#include "nebp/model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nebp {

void DaInputs::validate() const {
    if (beta.rows() > 0 && beta.cols() != xi.size() + 1) {
        throw ConfigError("beta must have J+1 columns");
    }
    if (!beta.allFinite() || !xi.allFinite()) throw ConfigError("DA inputs must be finite");
    if ((beta.array() < 0.0).any() || (xi.array() < 0.0).any()) throw ConfigError("DA inputs must be nonnegative");
}

namespace {

// Stand-in for an infinite ratio (beta_i(0) = 0 with no competing measurement).
constexpr double kHugeRatio = 1e300;

double relative_change(double before, double after) {
    const double scale = std::max(std::abs(before), std::abs(after));
    return scale > 0.0 ? std::abs(after - before) / scale : 0.0;
}

// Sum of all entries except index k, for every k, via prefix/suffix sums. Avoids the cancellation
// of "total minus own term" when one term dominates.
template <typename Vec>
void exclusive_sums(const Vec& terms, std::vector<double>& out) {
    const std::size_t n = static_cast<std::size_t>(terms.size());
    out.assign(n, 0.0);
    double prefix = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = prefix;
        prefix += terms(static_cast<Eigen::Index>(k));
    }
    double suffix = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        out[k] += suffix;
        suffix += terms(static_cast<Eigen::Index>(k));
    }
}

void update_nu(const DaInputs& in, const Eigen::MatrixXd& phi, Eigen::MatrixXd& nu) {
    const Eigen::Index num_legacy = phi.rows();
    const Eigen::Index num_meas = phi.cols();
    std::vector<double> others;
    for (Eigen::Index j = 0; j < num_meas; ++j) {
        exclusive_sums(phi.col(j), others);
        for (Eigen::Index i = 0; i < num_legacy; ++i) {
            const double denom = in.xi(j) + others[static_cast<std::size_t>(i)];
            nu(i, j) = denom > 0.0 ? 1.0 / denom : 0.0;
        }
    }
}

void update_phi(const DaInputs& in, const Eigen::MatrixXd& nu, Eigen::MatrixXd& phi) {
    const Eigen::Index num_legacy = nu.rows();
    const Eigen::Index num_meas = nu.cols();
    Eigen::VectorXd terms(num_meas);
    std::vector<double> others;
    for (Eigen::Index i = 0; i < num_legacy; ++i) {
        for (Eigen::Index j = 0; j < num_meas; ++j) terms(j) = in.beta(i, j + 1) * nu(i, j);
        exclusive_sums(terms, others);
        for (Eigen::Index j = 0; j < num_meas; ++j) {
            const double bij = in.beta(i, j + 1);
            const double denom = in.beta(i, 0) + others[static_cast<std::size_t>(j)];
            if (denom > 0.0) {
                phi(i, j) = bij / denom;
            } else {
                phi(i, j) = bij > 0.0 ? kHugeRatio : 0.0;
            }
        }
    }
}

}  // namespace

DaMessages iterate_da(const DaInputs& inputs, int max_iterations, double tol) {
    const Eigen::Index num_legacy = inputs.num_legacy();
    const Eigen::Index num_meas = inputs.num_measurements();
    DaMessages msgs;
    msgs.phi = Eigen::MatrixXd::Ones(num_legacy, num_meas);
    msgs.nu = Eigen::MatrixXd::Zero(num_legacy, num_meas);
    if (num_legacy == 0 || num_meas == 0) {
        msgs.converged = true;
        return msgs;
    }

    Eigen::MatrixXd phi_prev(num_legacy, num_meas);
    Eigen::MatrixXd nu_prev(num_legacy, num_meas);
    for (int it = 1; it <= max_iterations; ++it) {
        phi_prev = msgs.phi;
        nu_prev = msgs.nu;
        update_nu(inputs, msgs.phi, msgs.nu);
        update_phi(inputs, msgs.nu, msgs.phi);
        msgs.iterations_used = it;
        if (tol <= 0.0 || it == 1) continue;
        double change = 0.0;
        for (Eigen::Index k = 0; k < msgs.phi.size(); ++k) {
            change = std::max(change, relative_change(phi_prev.data()[k], msgs.phi.data()[k]));
            change = std::max(change, relative_change(nu_prev.data()[k], msgs.nu.data()[k]));
        }
        if (change <= tol) {
            msgs.converged = true;
            break;
        }
    }
    return msgs;
}

double da_residual(const DaInputs& inputs, const DaMessages& msgs) {
    if (msgs.phi.size() == 0) return 0.0;
    Eigen::MatrixXd nu_fixed(msgs.nu.rows(), msgs.nu.cols());
    Eigen::MatrixXd phi_fixed(msgs.phi.rows(), msgs.phi.cols());
    update_nu(inputs, msgs.phi, nu_fixed);
    update_phi(inputs, msgs.nu, phi_fixed);
    double residual = 0.0;
    for (Eigen::Index k = 0; k < msgs.phi.size(); ++k) {
        residual = std::max(residual, relative_change(msgs.phi.data()[k], phi_fixed.data()[k]));
        residual = std::max(residual, relative_change(msgs.nu.data()[k], nu_fixed.data()[k]));
    }
    return residual;
}

AssociationMarginals association_marginals(const DaInputs& inputs, const DaMessages& msgs) {
    const Eigen::Index num_legacy = inputs.num_legacy();
    const Eigen::Index num_meas = inputs.num_measurements();
    AssociationMarginals m;
    m.p_a = Eigen::MatrixXd::Zero(num_legacy, num_meas + 1);
    m.p_b = Eigen::MatrixXd::Zero(num_meas, num_legacy + 1);

    for (Eigen::Index i = 0; i < num_legacy; ++i) {
        m.p_a(i, 0) = inputs.beta(i, 0);
        for (Eigen::Index j = 0; j < num_meas; ++j) m.p_a(i, j + 1) = inputs.beta(i, j + 1) * msgs.nu(i, j);
        const double total = m.p_a.row(i).sum();
        if (total > 0.0) {
            m.p_a.row(i) /= total;
        } else {
            m.p_a(i, 0) = 1.0;
        }
    }
    for (Eigen::Index j = 0; j < num_meas; ++j) {
        m.p_b(j, 0) = inputs.xi(j);
        for (Eigen::Index i = 0; i < num_legacy; ++i) m.p_b(j, i + 1) = msgs.phi(i, j);
        const double total = m.p_b.row(j).sum();
        if (total > 0.0) {
            m.p_b.row(j) /= total;
        } else {
            m.p_b(j, 0) = 1.0;
        }
    }
    return m;
}

}  // namespace nebp
