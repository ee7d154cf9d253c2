#pragma once

#include "nebp/bp_tracker.hpp"
#include "nebp/data_association.hpp"
#include "nebp/mlp.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace nebp {

/// Sizes of the enhancement networks. Embeddings are [motion | shape], each `feature_dim` long.
struct NebpConfig {
    int shape_dim = 8;
    int feature_dim = 128;
    int hidden_dim = 128;
    int gnn_iterations = 3;
    /// Fixed input scaling of the motion network (meters, meters/second).
    double pos_scale = 50.0;
    double vel_scale = 10.0;
    std::uint64_t seed = 1;

    [[nodiscard]] int embed_dim() const { return 2 * feature_dim; }
    void validate() const;
};

/// All trainable networks. The motion and shape networks are shared between legacy POs and
/// measurements.
struct NebpNetworks {
    NebpConfig config;
    Mlp motion;       ///< (px, py, vx, vy, existence or score) -> feature_dim
    Mlp shape;        ///< descriptor -> feature_dim
    Mlp edge;         ///< [h_a, h_b, beta_s, message ratio] -> embed_dim
    Mlp node;         ///< [h, aggregated messages, singleton attribute] -> embed_dim
    Mlp rejection;    ///< h_b -> omega*
    Mlp association;  ///< m_{b->a} -> mu*

    static NebpNetworks create(const NebpConfig& cfg);

    [[nodiscard]] std::array<Mlp*, 6> all();
    [[nodiscard]] std::array<const Mlp*, 6> all() const;
    static const std::array<const char*, 6>& names();
    void zero_grad();
    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] Eigen::Index parameter_count() const;
};

enum class Method { kBp, kNebp, kNebpM, kNebpR, kNebpA, kNebpNc };

/// Parses "bp", "nebp", "nebp-m", "nebp-r", "nebp-a", "nebp-nc"; throws ConfigError otherwise.
Method parse_method(const std::string& name);
std::string method_name(Method m);

/// Sigmoid reshaping of the rejection head at inference. temperature may be +inf (hard threshold).
struct Calibration {
    double temperature = 1.0;
    double delta = 0.0;
};

/// Per-frame quantities entering the GNN. BP values are constants for backpropagation.
struct GnnInputs {
    Eigen::MatrixXd motion_a;  ///< 5 x I, scaled
    Eigen::MatrixXd shape_a;   ///< shape_dim x I
    Eigen::MatrixXd motion_b;  ///< 5 x J, scaled
    Eigen::MatrixXd shape_b;   ///< shape_dim x J
    Eigen::MatrixXd beta_s;    ///< I x (J+1), rows divided by C_q
    Eigen::VectorXd xi_s;      ///< J, xi(0) / C_v
    Eigen::MatrixXd phi;       ///< I x J, squashed to phi / (1 + phi)
    Eigen::MatrixXd nu;        ///< I x J

    [[nodiscard]] Eigen::Index num_legacy() const { return motion_a.cols(); }
    [[nodiscard]] Eigen::Index num_measurements() const { return motion_b.cols(); }
};

/// C_q,i = sum_j beta_i(j) over j = 0..J.
Eigen::VectorXd normalizer_q(const Eigen::MatrixXd& beta);
/// C_v,j = xi_j(0) + I (xi_j(i) = 1 for every legacy PO).
Eigen::VectorXd normalizer_v(const Eigen::VectorXd& xi, Eigen::Index num_legacy);

/// Assembles GNN inputs from the previous-step estimates of the legacy POs, their running
/// descriptors, the current measurements and the converged BP messages.
GnnInputs make_gnn_inputs(const std::vector<Eigen::Vector4d>& prior_means, const std::vector<double>& prior_existence,
                          const std::vector<Eigen::VectorXd>& descriptors, const MeasurementFrame& frame,
                          const DaInputs& bp, const DaMessages& msgs, const NebpConfig& cfg);

struct GnnState {
    Eigen::MatrixXd h_a;   ///< embed_dim x I
    Eigen::MatrixXd h_b;   ///< embed_dim x J
    Eigen::MatrixXd m_ab;  ///< embed_dim x IJ, column i + I j
    Eigen::MatrixXd m_ba;  ///< embed_dim x IJ, column i + I j
    int iterations = 0;
};

/// Everything needed to backpropagate through one GNN evaluation.
struct GnnTape {
    MlpTape motion, shape;
    std::vector<MlpTape> edge;
    std::vector<MlpTape> node;
    MlpTape rejection, association;
    bool motion_only = false;
    Eigen::Index num_legacy = 0;
    Eigen::Index num_meas = 0;
};

/// Initial embeddings [motion | shape]. With `motion_only` the shape half is zero.
GnnState extract_features(const GnnInputs& in, const NebpNetworks& nets, bool motion_only = false,
                          GnnTape* tape = nullptr);

/// P rounds of edge messages followed by node updates. The messages of the last round are kept in
/// the state; with P = 0 the embeddings are unchanged and one message round is evaluated.
GnnState gnn_pass(GnnState state, const GnnInputs& in, const NebpNetworks& nets, int iterations,
                  GnnTape* tape = nullptr);

struct Refinements {
    Eigen::VectorXd omega;       ///< J, in (0,1) ({0,1} for infinite temperature)
    Eigen::MatrixXd mu;          ///< I x J, >= 0
    Eigen::VectorXd omega_star;  ///< pre-activation of omega
    Eigen::MatrixXd mu_star;     ///< pre-activation of mu
};

/// omega_j = sigmoid(T (omega*_j - delta)) with omega* from the rejection head on h_b, and
/// mu_i(j) = ReLU(mu*_i(j)) with mu* from the association head on m_{b_j -> a_i}.
Refinements compute_refinements(const GnnState& state, const NebpNetworks& nets, const Calibration& cal,
                                GnnTape* tape = nullptr);

double sigmoid(double x);
/// sigmoid(T (x - delta)) with the T = +inf limit taken as a step at delta.
double calibrated_sigmoid(double x, const Calibration& cal);

/// Neural enhanced DA inputs:
///   beta~(i, 0) = beta(i, 0) / C_q,i
///   beta~(i, j) = omega_j beta(i, j) / C_q,i + mu_i(j)
///   xi~(j)      = 1 + omega_j (xi(j) - 1)
/// Rows of beta are normalized consistently so (omega = 1, mu = 0) reproduces plain BP.
DaInputs enhance(const DaInputs& bp, const Eigen::VectorXd& c_q, const Refinements& ref);

/// Full forward pass: features, GNN, refinement heads.
Refinements run_gnn(const GnnInputs& in, const NebpNetworks& nets, const Calibration& cal, bool motion_only,
                    GnnTape* tape = nullptr);

/// Backpropagates dL/domega* and dL/dmu* (I x J) into the gradient buffers of every network.
void gnn_backward(NebpNetworks& nets, const GnnTape& tape, const Eigen::VectorXd& d_omega_star,
                  const Eigen::MatrixXd& d_mu_star);

/// Applies the method ablations to raw refinements (mu = 0 for -r, omega = 1 for -a).
void apply_method(Method method, Refinements& ref);

/// Per-frame record of a NEBP step, used for training and diagnostics.
struct NebpTrace {
    GnnTape tape;
    GnnInputs inputs;
    Refinements refinements;
    std::vector<TrackId> legacy_ids;
    std::vector<Eigen::Vector4d> predicted_means;
    MeasurementFrame frame;  ///< measurements inside the region of interest
    std::uint64_t first_new_id = 0;
};

/// One NEBP tracking step: BP DA to convergence, GNN refinement, enhanced DA, beliefs, prune,
/// declare. Method kBp falls back to bp_step; kNebpNc ignores `cal` and uses T = 1, delta = 0.
StepOutput nebp_step(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params,
                     const NebpNetworks& nets, Method method, const Calibration& cal, NebpTrace* trace = nullptr);

/// Runs a tracker over a whole sequence from an empty state. `nets` may be null for Method::kBp.
std::vector<std::vector<Estimate>> track_sequence(const std::vector<MeasurementFrame>& frames,
                                                  const ModelParams& params, Method method,
                                                  const NebpNetworks* nets, const Calibration& cal,
                                                  std::uint64_t seed);

nlohmann::json to_json(const NebpConfig& cfg);
NebpConfig nebp_config_from_json(const nlohmann::json& j);

}  // namespace nebp
