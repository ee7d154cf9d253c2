#pragma once

#include "nebp/data_association.hpp"
#include "nebp/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace nebp {

using Rng = std::mt19937_64;

/// A PO after time propagation (the prediction message). Same representation as the belief.
using PredictedPo = PotentialObject;

/// Propagates particles through the constant-velocity model and multiplies existence by p_s.
PredictedPo predict(const PotentialObject& po, const ModelParams& params, Rng& rng);

/// Legacy-PO likelihood ratios for one frame.
///
/// `beta` is I x (J+1) as in DaInputs. `particle_ratios[i]` is N_i x J and holds
/// p_d f(z_j | x_p) / (mu_fa f_fa(z_j)) per particle; gated pairs are zero.
struct LegacyLikelihoods {
    Eigen::MatrixXd beta;
    std::vector<Eigen::MatrixXd> particle_ratios;
};

/// beta_i(j) = r_i p_d sum_p w_p f(z_j|x_p) / (mu_fa f_fa(z_j)) for j >= 1 and
/// beta_i(0) = 1 - r_i + r_i (1 - p_d). Nonzero entries are floored at 1e-300.
LegacyLikelihoods compute_beta(std::span<const PredictedPo> predicted, const MeasurementFrame& frame,
                               const ModelParams& params);

/// xi_j(0) = 1 + p_d mu_u int f_u(x) f(z_j|x) dx / (mu_fa f_fa(z_j)), evaluated in closed form for the
/// uniform densities over the region of interest.
Eigen::VectorXd compute_xi(const MeasurementFrame& frame, const ModelParams& params);

/// Probability that N(center, diag(variances)) falls inside [lo, hi] (per-dimension product).
double gaussian_box_mass(const Eigen::VectorXd& center, const Eigen::VectorXd& variances, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi);

/// Measurement-dependent factors produced by the neural enhancement. omega has length J, mu is I x J
/// and c_q holds the per-legacy-PO normalization constants.
struct Enhancement {
    Eigen::VectorXd omega;
    Eigen::MatrixXd mu;
    Eigen::VectorXd c_q;
};

struct Beliefs {
    std::vector<PotentialObject> legacy;
    std::vector<PotentialObject> fresh;
    AssociationMarginals marginals;
};

/// Belief calculation after data association.
///
/// Legacy particles are reweighted by the association mixture, existence follows from the
/// normalized r = 0 / r = 1 masses, and one new PO is spawned per measurement with existence from the
/// b_j = 0 branch. With `enhancement` the legacy mixture uses omega_j L / C_q + mu_ij per
/// association, matching the enhanced beta. `inputs` must be the (possibly enhanced) DA inputs that
/// produced `msgs`. Particle sets are resampled (systematic) when the effective sample size drops
/// below half the particle count.
Beliefs compute_beliefs(std::span<const PredictedPo> predicted, const MeasurementFrame& frame,
                        const LegacyLikelihoods& likelihoods, const DaInputs& inputs, const DaMessages& msgs,
                        const ModelParams& params, Rng& rng, std::uint64_t& next_id,
                        const Enhancement* enhancement = nullptr);

/// Removes POs with existence below t_pru and new POs with p(b_j = 0) below t_new.
std::vector<PotentialObject> prune(std::vector<PotentialObject> pos, const ModelParams& params);

struct Estimate {
    TrackId id;
    KinematicState state;
    double existence = 0.0;
    double score = 0.0;
};

/// POs with existence above t_dec, with their MMSE state estimate and score.
std::vector<Estimate> declare_and_estimate(std::span<const PotentialObject> pos, const ModelParams& params);

/// s_i = existence + sum_j p(a_i = j) s_j. `p_a_row` has J+1 entries (column 0 is a_i = 0).
double legacy_score(double existence, const Eigen::Ref<const Eigen::RowVectorXd>& p_a_row,
                    std::span<const double> measurement_scores);

/// In-place systematic resampling; returns true if resampling happened.
bool resample_if_degenerate(PotentialObject& po, Rng& rng);

struct TrackerState {
    std::vector<PotentialObject> objects;
    std::uint64_t next_id = 1;
    Rng rng;
    int frame = -1;

    explicit TrackerState(std::uint64_t seed = 0) : rng(seed) {}
};

/// Everything computed for a frame before data association.
struct PreparedFrame {
    MeasurementFrame frame;  ///< measurements inside the region of interest
    std::vector<PredictedPo> predicted;
    std::vector<Eigen::Vector4d> prior_means;  ///< MMSE estimates before prediction
    std::vector<double> prior_existence;
    LegacyLikelihoods likelihoods;
    Eigen::VectorXd xi;

    [[nodiscard]] DaInputs da_inputs() const { return {likelihoods.beta, xi}; }
};

/// Drops out-of-region measurements, predicts every PO and evaluates beta and xi.
PreparedFrame prepare_frame(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params);

struct StepOutput {
    std::vector<Estimate> estimates;
    DaMessages messages;
    AssociationMarginals marginals;
};

/// Beliefs, pruning and declaration given converged messages; updates `state`.
StepOutput finish_frame(TrackerState& state, PreparedFrame&& prepared, const DaInputs& inputs, DaMessages msgs,
                        const ModelParams& params, const Enhancement* enhancement = nullptr);

/// One conventional BP tracking step: predict, beta/xi, iterative DA, beliefs, prune, declare.
StepOutput bp_step(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params);

}  // namespace nebp
