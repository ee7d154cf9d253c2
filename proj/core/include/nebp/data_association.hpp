#pragma once

#include <Eigen/Dense>

namespace nebp {

/// Likelihood ratios entering iterative probabilistic data association.
///
/// `beta` is I x (J+1): column 0 holds beta_i(a_i = 0), column j holds beta_i(a_i = j).
/// `xi` has length J and holds xi_j(b_j = 0); xi_j(b_j = i) = 1 for every legacy PO i is implicit.
struct DaInputs {
    Eigen::MatrixXd beta;
    Eigen::VectorXd xi;

    [[nodiscard]] Eigen::Index num_legacy() const { return beta.rows(); }
    [[nodiscard]] Eigen::Index num_measurements() const { return xi.size(); }
    /// Throws ConfigError if shapes disagree or any entry is negative or non-finite.
    void validate() const;
};

/// Two-value message ratios: phi(i, j) is the legacy-to-measurement ratio and nu(i, j) the
/// measurement-to-legacy ratio nu_{j,i}; both I x J.
struct DaMessages {
    Eigen::MatrixXd phi;
    Eigen::MatrixXd nu;
    int iterations_used = 0;
    bool converged = false;
};

/// Runs the message ratio fixed-point iteration, starting from phi = 1.
///
///   nu_{j,i}  = 1 / (xi_j(0) + sum_{i' != i} phi_{i',j})
///   phi_{i,j} = beta_i(j) / (beta_i(0) + sum_{j' != j} beta_i(j') nu_{j',i})
///
/// Each iteration is O(I*J). Stops once the maximum relative change of both message sets is at most
/// `tol`, or after `max_iterations`. With tol = 0 exactly `max_iterations` iterations run.
DaMessages iterate_da(const DaInputs& inputs, int max_iterations, double tol);

/// Maximum relative violation of the two fixed-point equations by (phi, nu).
double da_residual(const DaInputs& inputs, const DaMessages& msgs);

/// Approximate association marginals. `p_a` is I x (J+1) with p(a_i = j) in column j,
/// `p_b` is J x (I+1) with p(b_j = i) in column i.
struct AssociationMarginals {
    Eigen::MatrixXd p_a;
    Eigen::MatrixXd p_b;
};

AssociationMarginals association_marginals(const DaInputs& inputs, const DaMessages& msgs);

}  // namespace nebp
