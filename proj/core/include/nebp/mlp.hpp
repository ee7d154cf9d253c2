#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nebp {

enum class Activation { kLinear, kLeakyRelu };

inline constexpr double kLeakySlope = 0.01;

/// Dense layer y = act(W x + b) with gradient buffers and Adam moments alongside the parameters.
struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
    Activation activation = Activation::kLinear;

    Eigen::MatrixXd grad_weight;
    Eigen::VectorXd grad_bias;
    Eigen::MatrixXd m_weight, v_weight;
    Eigen::VectorXd m_bias, v_bias;

    [[nodiscard]] Eigen::Index inputs() const { return weight.cols(); }
    [[nodiscard]] Eigen::Index outputs() const { return weight.rows(); }
    void reset_buffers();
};

/// Values recorded by a forward pass; columns are samples.
struct MlpTape {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> pre;
};

/// Feed-forward network with one column per sample.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    /// Hidden layers use leaky ReLU, the output layer is linear. Weights are drawn uniformly from
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases start at zero.
    static Mlp make(std::span<const int> sizes, std::uint64_t seed);

    [[nodiscard]] Eigen::Index input_dim() const;
    [[nodiscard]] Eigen::Index output_dim() const;
    [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    [[nodiscard]] Eigen::Index parameter_count() const;

    /// x is input_dim x batch. Records into `tape` when given. Throws std::invalid_argument on shape mismatch.
    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpTape* tape = nullptr) const;

    /// Accumulates parameter gradients for upstream gradient `dy` and returns dL/dx.
    Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& dy);

    void zero_grad();
    void scale_weights(double factor);

    /// Flat views used by finite-difference checks. Order: per layer weight (column-major) then bias.
    [[nodiscard]] Eigen::VectorXd flat_params() const;
    void set_flat_params(const Eigen::VectorXd& flat);
    [[nodiscard]] Eigen::VectorXd flat_grads() const;

    [[nodiscard]] bool all_finite() const;

    [[nodiscard]] nlohmann::json to_json(bool with_optimizer_state = true) const;
    static Mlp from_json(const nlohmann::json& j);

private:
    std::vector<DenseLayer> layers_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. The step counter is shared by every network it updates.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Advances the step counter once and updates every network from its gradient buffers.
    void step(std::span<Mlp* const> nets);

    [[nodiscard]] long steps() const { return t_; }
    void set_steps(long t) { t_ = t; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace nebp
