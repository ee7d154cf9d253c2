#include "nebp/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace nebp {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
    if (act == Activation::kLinear) return pre;
    return pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& dy, Activation act) {
    if (act == Activation::kLinear) return dy;
    return dy.binaryExpr(pre, [](double g, double v) { return v > 0.0 ? g : kLeakySlope * g; });
}

std::string activation_name(Activation a) { return a == Activation::kLinear ? "linear" : "leaky_relu"; }

Activation activation_from(const std::string& s) {
    if (s == "linear") return Activation::kLinear;
    if (s == "leaky_relu") return Activation::kLeakyRelu;
    throw std::invalid_argument("unknown activation: " + s);
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.size(); ++k) data.push_back(m.data()[k]);
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::invalid_argument("matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = data[static_cast<std::size_t>(k)].get<double>();
    return m;
}

}  // namespace

void DenseLayer::reset_buffers() {
    grad_weight = Eigen::MatrixXd::Zero(weight.rows(), weight.cols());
    grad_bias = Eigen::VectorXd::Zero(bias.size());
    m_weight = grad_weight;
    v_weight = grad_weight;
    m_bias = grad_bias;
    v_bias = grad_bias;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& layer = layers_[l];
        if (layer.bias.size() != layer.weight.rows()) throw std::invalid_argument("bias length must equal layer outputs");
        if (l > 0 && layer.inputs() != layers_[l - 1].outputs()) throw std::invalid_argument("layer shapes do not chain");
        if (layer.grad_weight.rows() != layer.weight.rows() || layer.grad_weight.cols() != layer.weight.cols()) {
            layer.reset_buffers();
        }
    }
}

Mlp Mlp::make(std::span<const int> sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw std::invalid_argument("an MLP needs at least input and output sizes");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] <= 0 || sizes[l + 1] <= 0) throw std::invalid_argument("layer sizes must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        DenseLayer layer;
        layer.weight = Eigen::MatrixXd::NullaryExpr(sizes[l + 1], sizes[l], [&]() { return u(rng); });
        layer.bias = Eigen::VectorXd::Zero(sizes[l + 1]);
        layer.activation = l + 2 < sizes.size() ? Activation::kLeakyRelu : Activation::kLinear;
        layer.reset_buffers();
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

Eigen::Index Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
Eigen::Index Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

Eigen::Index Mlp::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpTape* tape) const {
    if (layers_.empty()) throw std::invalid_argument("forward on an empty network");
    if (x.rows() != input_dim()) {
        throw std::invalid_argument("input has " + std::to_string(x.rows()) + " rows, network expects " +
                                    std::to_string(input_dim()));
    }
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
    }
    Eigen::MatrixXd a = x;
    for (const auto& layer : layers_) {
        Eigen::MatrixXd pre = layer.weight * a;
        pre.colwise() += layer.bias;
        Eigen::MatrixXd out = activate(pre, layer.activation);
        if (tape) {
            tape->inputs.push_back(std::move(a));
            tape->pre.push_back(std::move(pre));
        }
        a = std::move(out);
    }
    return a;
}

Eigen::MatrixXd Mlp::backward(const MlpTape& tape, const Eigen::MatrixXd& dy) {
    if (tape.inputs.size() != layers_.size()) throw std::invalid_argument("tape does not belong to this network");
    Eigen::MatrixXd g = dy;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        auto& layer = layers_[l];
        const Eigen::MatrixXd dpre = activation_grad(tape.pre[l], g, layer.activation);
        layer.grad_weight.noalias() += dpre * tape.inputs[l].transpose();
        layer.grad_bias += dpre.rowwise().sum();
        g = layer.weight.transpose() * dpre;
    }
    return g;
}

void Mlp::zero_grad() {
    for (auto& l : layers_) {
        l.grad_weight.setZero();
        l.grad_bias.setZero();
    }
}

void Mlp::scale_weights(double factor) {
    for (auto& l : layers_) {
        l.weight *= factor;
        l.bias *= factor;
    }
}

Eigen::VectorXd Mlp::flat_params() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        flat.segment(k, l.weight.size()) = l.weight.reshaped();
        k += l.weight.size();
        flat.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return flat;
}

void Mlp::set_flat_params(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("flat parameter length mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
        l.weight.reshaped() = flat.segment(k, l.weight.size());
        k += l.weight.size();
        l.bias = flat.segment(k, l.bias.size());
        k += l.bias.size();
    }
}

Eigen::VectorXd Mlp::flat_grads() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        flat.segment(k, l.grad_weight.size()) = l.grad_weight.reshaped();
        k += l.grad_weight.size();
        flat.segment(k, l.grad_bias.size()) = l.grad_bias;
        k += l.grad_bias.size();
    }
    return flat;
}

bool Mlp::all_finite() const {
    for (const auto& l : layers_) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

nlohmann::json Mlp::to_json(bool with_optimizer_state) const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        nlohmann::json jl{{"activation", activation_name(l.activation)},
                          {"weight", matrix_json(l.weight)},
                          {"bias", matrix_json(l.bias)}};
        if (with_optimizer_state) {
            jl["m_weight"] = matrix_json(l.m_weight);
            jl["v_weight"] = matrix_json(l.v_weight);
            jl["m_bias"] = matrix_json(l.m_bias);
            jl["v_bias"] = matrix_json(l.v_bias);
        }
        layers.push_back(std::move(jl));
    }
    return {{"layers", std::move(layers)}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
    std::vector<DenseLayer> layers;
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        l.activation = activation_from(jl.at("activation").get<std::string>());
        l.weight = matrix_from(jl.at("weight"));
        l.bias = matrix_from(jl.at("bias")).reshaped();
        l.reset_buffers();
        if (jl.contains("m_weight")) {
            l.m_weight = matrix_from(jl.at("m_weight"));
            l.v_weight = matrix_from(jl.at("v_weight"));
            l.m_bias = matrix_from(jl.at("m_bias")).reshaped();
            l.v_bias = matrix_from(jl.at("v_bias")).reshaped();
            if (l.m_weight.rows() != l.weight.rows() || l.m_weight.cols() != l.weight.cols() ||
                l.v_weight.rows() != l.weight.rows() || l.v_weight.cols() != l.weight.cols() ||
                l.m_bias.size() != l.bias.size() || l.v_bias.size() != l.bias.size()) {
                throw std::invalid_argument("optimizer state shape mismatch");
            }
        }
        layers.push_back(std::move(l));
    }
    Mlp net(std::move(layers));
    if (!net.all_finite()) throw std::invalid_argument("checkpoint contains non-finite weights");
    return net;
}

void Adam::step(std::span<Mlp* const> nets) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](auto& param, auto& grad, auto& m, auto& v) {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        param.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    };
    for (Mlp* net : nets) {
        for (auto& l : net->layers()) {
            update(l.weight, l.grad_weight, l.m_weight, l.v_weight);
            update(l.bias, l.grad_bias, l.m_bias, l.v_bias);
        }
    }
}

}  // namespace nebp
