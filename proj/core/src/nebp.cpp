#include "nebp/nebp.hpp"

#include <cmath>
#include <limits>

namespace nebp {

namespace {

constexpr Eigen::Index kMotionInputs = 5;

Eigen::Matrix<double, kMotionInputs, 1> motion_input(const Eigen::Vector4d& x, double extra, const NebpConfig& cfg) {
    Eigen::Matrix<double, kMotionInputs, 1> v;
    v << x(0) / cfg.pos_scale, x(1) / cfg.pos_scale, x(2) / cfg.vel_scale, x(3) / cfg.vel_scale, extra;
    return v;
}

Eigen::MatrixXd edge_batch(const GnnState& s, const GnnInputs& in) {
    const Eigen::Index e = s.h_a.rows();
    const Eigen::Index ni = in.num_legacy();
    const Eigen::Index nj = in.num_measurements();
    const Eigen::Index pairs = ni * nj;
    Eigen::MatrixXd x(2 * e + 2, 2 * pairs);
    for (Eigen::Index j = 0; j < nj; ++j) {
        for (Eigen::Index i = 0; i < ni; ++i) {
            const Eigen::Index k = i + ni * j;
            for (const Eigen::Index col : {k, pairs + k}) {
                x.block(0, col, e, 1) = s.h_a.col(i);
                x.block(e, col, e, 1) = s.h_b.col(j);
                x(2 * e, col) = in.beta_s(i, j + 1);
            }
            x(2 * e + 1, k) = in.phi(i, j);
            x(2 * e + 1, pairs + k) = in.nu(i, j);
        }
    }
    return x;
}

}  // namespace

void NebpConfig::validate() const {
    if (shape_dim <= 0 || feature_dim <= 0 || hidden_dim <= 0) throw ConfigError("network sizes must be positive");
    if (gnn_iterations < 0) throw ConfigError("gnn_iterations must be nonnegative");
    if (!(pos_scale > 0.0) || !(vel_scale > 0.0)) throw ConfigError("input scales must be positive");
}

NebpNetworks NebpNetworks::create(const NebpConfig& cfg) {
    cfg.validate();
    const int f = cfg.feature_dim;
    const int e = cfg.embed_dim();
    const int h = cfg.hidden_dim;
    NebpNetworks n;
    n.config = cfg;
    const std::array<int, 3> motion{static_cast<int>(kMotionInputs), h, f};
    const std::array<int, 3> shape{cfg.shape_dim, h, f};
    const std::array<int, 3> edge{2 * e + 2, h, e};
    const std::array<int, 3> node{2 * e + 1, h, e};
    const std::array<int, 3> head{e, h, 1};
    n.motion = Mlp::make(motion, cfg.seed * 8 + 1);
    n.shape = Mlp::make(shape, cfg.seed * 8 + 2);
    n.edge = Mlp::make(edge, cfg.seed * 8 + 3);
    n.node = Mlp::make(node, cfg.seed * 8 + 4);
    n.rejection = Mlp::make(head, cfg.seed * 8 + 5);
    n.association = Mlp::make(head, cfg.seed * 8 + 6);
    return n;
}

std::array<Mlp*, 6> NebpNetworks::all() { return {&motion, &shape, &edge, &node, &rejection, &association}; }

std::array<const Mlp*, 6> NebpNetworks::all() const {
    return {&motion, &shape, &edge, &node, &rejection, &association};
}

const std::array<const char*, 6>& NebpNetworks::names() {
    static const std::array<const char*, 6> n{"motion", "shape", "edge", "node", "rejection", "association"};
    return n;
}

void NebpNetworks::zero_grad() {
    for (Mlp* m : all()) m->zero_grad();
}

bool NebpNetworks::all_finite() const {
    for (const Mlp* m : all()) {
        if (!m->all_finite()) return false;
    }
    return true;
}

Eigen::Index NebpNetworks::parameter_count() const {
    Eigen::Index n = 0;
    for (const Mlp* m : all()) n += m->parameter_count();
    return n;
}

Method parse_method(const std::string& name) {
    if (name == "bp") return Method::kBp;
    if (name == "nebp") return Method::kNebp;
    if (name == "nebp-m") return Method::kNebpM;
    if (name == "nebp-r") return Method::kNebpR;
    if (name == "nebp-a") return Method::kNebpA;
    if (name == "nebp-nc") return Method::kNebpNc;
    throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::kBp: return "bp";
        case Method::kNebp: return "nebp";
        case Method::kNebpM: return "nebp-m";
        case Method::kNebpR: return "nebp-r";
        case Method::kNebpA: return "nebp-a";
        case Method::kNebpNc: return "nebp-nc";
    }
    return "bp";
}

Eigen::VectorXd normalizer_q(const Eigen::MatrixXd& beta) { return beta.rowwise().sum(); }

Eigen::VectorXd normalizer_v(const Eigen::VectorXd& xi, Eigen::Index num_legacy) {
    return xi.array() + static_cast<double>(num_legacy);
}

GnnInputs make_gnn_inputs(const std::vector<Eigen::Vector4d>& prior_means, const std::vector<double>& prior_existence,
                          const std::vector<Eigen::VectorXd>& descriptors, const MeasurementFrame& frame,
                          const DaInputs& bp, const DaMessages& msgs, const NebpConfig& cfg) {
    const auto ni = static_cast<Eigen::Index>(prior_means.size());
    const auto nj = static_cast<Eigen::Index>(frame.size());
    if (prior_existence.size() != prior_means.size() || descriptors.size() != prior_means.size()) {
        throw std::invalid_argument("legacy PO inputs have inconsistent lengths");
    }
    if (bp.num_legacy() != ni || bp.num_measurements() != nj) throw std::invalid_argument("DA inputs do not match");

    GnnInputs in;
    in.motion_a.resize(kMotionInputs, ni);
    in.shape_a = Eigen::MatrixXd::Zero(cfg.shape_dim, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
        const auto k = static_cast<std::size_t>(i);
        in.motion_a.col(i) = motion_input(prior_means[k], prior_existence[k], cfg);
        if (descriptors[k].size() == cfg.shape_dim) in.shape_a.col(i) = descriptors[k];
    }
    in.motion_b.resize(kMotionInputs, nj);
    in.shape_b.resize(cfg.shape_dim, nj);
    for (Eigen::Index j = 0; j < nj; ++j) {
        const Measurement& m = frame.measurements[static_cast<std::size_t>(j)];
        if (m.shape.size() != cfg.shape_dim) throw ConfigError("measurement descriptor length differs from shape_dim");
        in.motion_b.col(j) = motion_input(m.vec(), m.score, cfg);
        in.shape_b.col(j) = m.shape;
    }

    const Eigen::VectorXd c_q = normalizer_q(bp.beta);
    in.beta_s = bp.beta;
    for (Eigen::Index i = 0; i < ni; ++i) {
        if (c_q(i) > 0.0) in.beta_s.row(i) /= c_q(i);
    }
    in.xi_s = bp.xi.cwiseQuotient(normalizer_v(bp.xi, ni));
    // phi is unbounded (up to the huge-ratio stand-in); squash to [0, 1) like the other attributes.
    in.phi = msgs.phi.array() / (1.0 + msgs.phi.array());
    in.nu = msgs.nu;
    return in;
}

GnnState extract_features(const GnnInputs& in, const NebpNetworks& nets, bool motion_only, GnnTape* tape) {
    const Eigen::Index ni = in.num_legacy();
    const Eigen::Index nj = in.num_measurements();
    const Eigen::Index f = nets.config.feature_dim;

    Eigen::MatrixXd motion_x(kMotionInputs, ni + nj);
    motion_x << in.motion_a, in.motion_b;
    const Eigen::MatrixXd motion = nets.motion.forward(motion_x, tape ? &tape->motion : nullptr);

    Eigen::MatrixXd shape = Eigen::MatrixXd::Zero(f, ni + nj);
    if (!motion_only) {
        Eigen::MatrixXd shape_x(in.shape_a.rows(), ni + nj);
        shape_x << in.shape_a, in.shape_b;
        shape = nets.shape.forward(shape_x, tape ? &tape->shape : nullptr);
    }

    GnnState s;
    s.h_a.resize(2 * f, ni);
    s.h_b.resize(2 * f, nj);
    s.h_a << motion.leftCols(ni), shape.leftCols(ni);
    s.h_b << motion.rightCols(nj), shape.rightCols(nj);
    if (tape) {
        tape->motion_only = motion_only;
        tape->num_legacy = ni;
        tape->num_meas = nj;
        tape->edge.clear();
        tape->node.clear();
    }
    return s;
}

GnnState gnn_pass(GnnState s, const GnnInputs& in, const NebpNetworks& nets, int iterations, GnnTape* tape) {
    const Eigen::Index ni = in.num_legacy();
    const Eigen::Index nj = in.num_measurements();
    const Eigen::Index e = s.h_a.rows();
    const Eigen::Index pairs = ni * nj;
    const int rounds = std::max(iterations, 1);
    for (int r = 0; r < rounds; ++r) {
        MlpTape* edge_tape = nullptr;
        if (tape) edge_tape = &tape->edge.emplace_back();
        const Eigen::MatrixXd m = nets.edge.forward(edge_batch(s, in), edge_tape);
        s.m_ab = m.leftCols(pairs);
        s.m_ba = m.rightCols(pairs);
        if (r >= iterations) break;

        Eigen::MatrixXd x(2 * e + 1, ni + nj);
        for (Eigen::Index i = 0; i < ni; ++i) {
            Eigen::VectorXd agg = Eigen::VectorXd::Zero(e);
            for (Eigen::Index j = 0; j < nj; ++j) agg += s.m_ba.col(i + ni * j);
            x.block(0, i, e, 1) = s.h_a.col(i);
            x.block(e, i, e, 1) = agg;
            x(2 * e, i) = in.beta_s(i, 0);
        }
        for (Eigen::Index j = 0; j < nj; ++j) {
            x.block(0, ni + j, e, 1) = s.h_b.col(j);
            x.block(e, ni + j, e, 1) = s.m_ab.middleCols(ni * j, ni).rowwise().sum();
            x(2 * e, ni + j) = in.xi_s(j);
        }
        MlpTape* node_tape = nullptr;
        if (tape) node_tape = &tape->node.emplace_back();
        const Eigen::MatrixXd h = nets.node.forward(x, node_tape);
        s.h_a = h.leftCols(ni);
        s.h_b = h.rightCols(nj);
    }
    s.iterations = iterations;
    return s;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

double calibrated_sigmoid(double x, const Calibration& cal) {
    if (std::isinf(cal.temperature)) {
        if (x > cal.delta) return 1.0;
        return x < cal.delta ? 0.0 : 0.5;
    }
    return sigmoid(cal.temperature * (x - cal.delta));
}

Refinements compute_refinements(const GnnState& state, const NebpNetworks& nets, const Calibration& cal,
                                GnnTape* tape) {
    const Eigen::Index ni = state.h_a.cols();
    const Eigen::Index nj = state.h_b.cols();
    Refinements ref;
    ref.omega_star = nets.rejection.forward(state.h_b, tape ? &tape->rejection : nullptr).row(0).transpose();
    ref.omega = ref.omega_star.unaryExpr([&](double v) { return calibrated_sigmoid(v, cal); });
    const Eigen::MatrixXd mu_row = nets.association.forward(state.m_ba, tape ? &tape->association : nullptr);
    ref.mu_star = mu_row.reshaped(ni, nj);
    ref.mu = ref.mu_star.cwiseMax(0.0);
    return ref;
}

Refinements run_gnn(const GnnInputs& in, const NebpNetworks& nets, const Calibration& cal, bool motion_only,
                    GnnTape* tape) {
    GnnState s = extract_features(in, nets, motion_only, tape);
    s = gnn_pass(std::move(s), in, nets, nets.config.gnn_iterations, tape);
    return compute_refinements(s, nets, cal, tape);
}

void gnn_backward(NebpNetworks& nets, const GnnTape& tape, const Eigen::VectorXd& d_omega_star,
                  const Eigen::MatrixXd& d_mu_star) {
    const Eigen::Index ni = tape.num_legacy;
    const Eigen::Index nj = tape.num_meas;
    const Eigen::Index pairs = ni * nj;
    const Eigen::Index e = nets.config.embed_dim();
    const Eigen::Index f = nets.config.feature_dim;
    if (d_omega_star.size() != nj || d_mu_star.rows() != ni || d_mu_star.cols() != nj) {
        throw std::invalid_argument("gradient shapes do not match the recorded pass");
    }

    Eigen::MatrixXd dh_a = Eigen::MatrixXd::Zero(e, ni);
    Eigen::MatrixXd dh_b = nets.rejection.backward(tape.rejection, d_omega_star.transpose());
    const Eigen::MatrixXd dm_ba_last =
        nets.association.backward(tape.association, d_mu_star.reshaped(1, pairs));

    const auto rounds = static_cast<int>(tape.edge.size());
    const auto node_rounds = static_cast<int>(tape.node.size());
    for (int r = rounds - 1; r >= 0; --r) {
        Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(e, 2 * pairs);
        if (r == rounds - 1) dm.rightCols(pairs) = dm_ba_last;
        if (r < node_rounds) {
            Eigen::MatrixXd d_out(e, ni + nj);
            d_out << dh_a, dh_b;
            const Eigen::MatrixXd d_in = nets.node.backward(tape.node[static_cast<std::size_t>(r)], d_out);
            dh_a = d_in.block(0, 0, e, ni);
            dh_b = d_in.block(0, ni, e, nj);
            for (Eigen::Index j = 0; j < nj; ++j) {
                for (Eigen::Index i = 0; i < ni; ++i) {
                    const Eigen::Index k = i + ni * j;
                    dm.col(pairs + k) += d_in.block(e, i, e, 1);
                    dm.col(k) += d_in.block(e, ni + j, e, 1);
                }
            }
        }
        const Eigen::MatrixXd d_edge = nets.edge.backward(tape.edge[static_cast<std::size_t>(r)], dm);
        for (Eigen::Index j = 0; j < nj; ++j) {
            for (Eigen::Index i = 0; i < ni; ++i) {
                const Eigen::Index k = i + ni * j;
                dh_a.col(i) += d_edge.block(0, k, e, 1) + d_edge.block(0, pairs + k, e, 1);
                dh_b.col(j) += d_edge.block(e, k, e, 1) + d_edge.block(e, pairs + k, e, 1);
            }
        }
    }

    Eigen::MatrixXd d_motion(f, ni + nj);
    d_motion << dh_a.topRows(f), dh_b.topRows(f);
    nets.motion.backward(tape.motion, d_motion);
    if (!tape.motion_only) {
        Eigen::MatrixXd d_shape(f, ni + nj);
        d_shape << dh_a.bottomRows(f), dh_b.bottomRows(f);
        nets.shape.backward(tape.shape, d_shape);
    }
}

DaInputs enhance(const DaInputs& bp, const Eigen::VectorXd& c_q, const Refinements& ref) {
    const Eigen::Index ni = bp.num_legacy();
    const Eigen::Index nj = bp.num_measurements();
    if (c_q.size() != ni || ref.omega.size() != nj || ref.mu.rows() != ni || ref.mu.cols() != nj) {
        throw std::invalid_argument("refinement shapes do not match the DA inputs");
    }
    DaInputs out;
    out.beta.resize(ni, nj + 1);
    for (Eigen::Index i = 0; i < ni; ++i) {
        if (!(c_q(i) > 0.0)) throw std::invalid_argument("C_q must be positive");
        out.beta(i, 0) = bp.beta(i, 0) / c_q(i);
        for (Eigen::Index j = 0; j < nj; ++j) {
            out.beta(i, j + 1) = ref.omega(j) * bp.beta(i, j + 1) / c_q(i) + ref.mu(i, j);
        }
    }
    out.xi = (1.0 + ref.omega.array() * (bp.xi.array() - 1.0)).matrix();
    return out;
}

void apply_method(Method method, Refinements& ref) {
    if (method == Method::kNebpR) ref.mu.setZero();
    if (method == Method::kNebpA) ref.omega.setOnes();
}

StepOutput nebp_step(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params,
                     const NebpNetworks& nets, Method method, const Calibration& cal, NebpTrace* trace) {
    if (method == Method::kBp) return bp_step(state, frame, params);

    PreparedFrame prepared = prepare_frame(state, frame, params);
    const DaInputs bp_inputs = prepared.da_inputs();
    const DaMessages bp_msgs = iterate_da(bp_inputs, params.max_da_iterations, params.da_tol);

    std::vector<Eigen::VectorXd> descriptors;
    descriptors.reserve(prepared.predicted.size());
    for (const auto& po : prepared.predicted) descriptors.push_back(po.descriptor);
    GnnInputs gnn_in = make_gnn_inputs(prepared.prior_means, prepared.prior_existence, descriptors, prepared.frame,
                                       bp_inputs, bp_msgs, nets.config);

    const Calibration effective = method == Method::kNebpNc ? Calibration{} : cal;
    Refinements ref = run_gnn(gnn_in, nets, effective, method == Method::kNebpM, trace ? &trace->tape : nullptr);
    apply_method(method, ref);

    const Eigen::VectorXd c_q = normalizer_q(bp_inputs.beta);
    const DaInputs enhanced = enhance(bp_inputs, c_q, ref);
    DaMessages msgs = iterate_da(enhanced, params.max_da_iterations, params.da_tol);

    if (trace) {
        trace->legacy_ids.clear();
        trace->predicted_means.clear();
        for (const auto& po : prepared.predicted) {
            trace->legacy_ids.push_back(po.id);
            trace->predicted_means.push_back(po.mean());
        }
        trace->frame = prepared.frame;
        trace->first_new_id = state.next_id;
        trace->inputs = std::move(gnn_in);
        trace->refinements = ref;
    }
    const Enhancement enh{ref.omega, ref.mu, c_q};
    return finish_frame(state, std::move(prepared), enhanced, std::move(msgs), params, &enh);
}

std::vector<std::vector<Estimate>> track_sequence(const std::vector<MeasurementFrame>& frames,
                                                  const ModelParams& params, Method method,
                                                  const NebpNetworks* nets, const Calibration& cal,
                                                  std::uint64_t seed) {
    if (method != Method::kBp && nets == nullptr) throw ConfigError("method " + method_name(method) + " needs networks");
    TrackerState state(seed);
    std::vector<std::vector<Estimate>> out;
    out.reserve(frames.size());
    for (const auto& frame : frames) {
        StepOutput step = method == Method::kBp ? bp_step(state, frame, params)
                                                : nebp_step(state, frame, params, *nets, method, cal);
        out.push_back(std::move(step.estimates));
    }
    return out;
}

nlohmann::json to_json(const NebpConfig& cfg) {
    return {{"shape_dim", cfg.shape_dim},           {"feature_dim", cfg.feature_dim},
            {"hidden_dim", cfg.hidden_dim},         {"gnn_iterations", cfg.gnn_iterations},
            {"pos_scale", cfg.pos_scale},           {"vel_scale", cfg.vel_scale},
            {"seed", cfg.seed}};
}

NebpConfig nebp_config_from_json(const nlohmann::json& j) {
    NebpConfig cfg;
    cfg.shape_dim = j.value("shape_dim", cfg.shape_dim);
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.gnn_iterations = j.value("gnn_iterations", cfg.gnn_iterations);
    cfg.pos_scale = j.value("pos_scale", cfg.pos_scale);
    cfg.vel_scale = j.value("vel_scale", cfg.vel_scale);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

}  // namespace nebp
