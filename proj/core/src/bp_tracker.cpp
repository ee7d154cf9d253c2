#include "nebp/bp_tracker.hpp"

#include "nebp/detail/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace nebp {

namespace {

constexpr double kRatioFloor = 1e-300;

Eigen::VectorXd measurement_vector(const Measurement& m, Eigen::Index dim) {
    if (dim == 4) return m.vec();
    return Eigen::Vector2d(m.px, m.py);
}

/// Gaussian N(. ; 0, R) evaluated through a cached Cholesky factor.
struct GaussianKernel {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_norm = 0.0;

    explicit GaussianKernel(const Eigen::MatrixXd& cov) : llt(cov) {
        const Eigen::MatrixXd l = llt.matrixL();
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        log_norm = -0.5 * (static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi) + log_det);
    }

    /// Densities for every column of `diffs`.
    Eigen::ArrayXd densities(const Eigen::MatrixXd& diffs) const {
        const Eigen::MatrixXd y = llt.matrixL().solve(diffs);
        return (log_norm - 0.5 * y.colwise().squaredNorm().array()).exp().transpose();
    }
};

double effective_sample_size(const Eigen::VectorXd& w) {
    const double s2 = w.squaredNorm();
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

}  // namespace

PredictedPo predict(const PotentialObject& po, const ModelParams& params, Rng& rng) {
    PredictedPo out = po;
    out.kind = PoKind::kLegacy;
    out.existence = po.existence * params.p_s;
    out.particles = ModelParams::cv_transition(params.dt) * po.particles;
    if (!params.proc_cov.isZero(0.0)) {
        const Eigen::MatrixXd noise_sqrt = psd_sqrt(params.proc_cov);
        for (Eigen::Index p = 0; p < out.particles.cols(); ++p) {
            out.particles.col(p) += sample_gaussian(noise_sqrt, rng);
        }
    }
    return out;
}

LegacyLikelihoods compute_beta(std::span<const PredictedPo> predicted, const MeasurementFrame& frame,
                               const ModelParams& params) {
    const auto num_legacy = static_cast<Eigen::Index>(predicted.size());
    const auto num_meas = static_cast<Eigen::Index>(frame.size());
    const Eigen::Index dz = params.meas_dim();
    const double fa = params.mu_fa * params.clutter_density();
    const GaussianKernel kernel(params.meas_cov);

    std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(num_meas));
    for (Eigen::Index j = 0; j < num_meas; ++j) {
        z[static_cast<std::size_t>(j)] = measurement_vector(frame.measurements[static_cast<std::size_t>(j)], dz);
    }

    LegacyLikelihoods out;
    out.beta = Eigen::MatrixXd::Zero(num_legacy, num_meas + 1);
    out.particle_ratios.reserve(predicted.size());
    for (Eigen::Index i = 0; i < num_legacy; ++i) {
        const PredictedPo& po = predicted[static_cast<std::size_t>(i)];
        const double r = po.existence;
        out.beta(i, 0) = std::max(1.0 - r * params.p_d, kRatioFloor);

        const Eigen::MatrixXd hx = params.meas_matrix * po.particles;
        Eigen::MatrixXd ratios = Eigen::MatrixXd::Zero(po.particles.cols(), num_meas);

        // Gate on the moment-matched predicted measurement.
        std::optional<Eigen::LLT<Eigen::MatrixXd>> gate_llt;
        Eigen::VectorXd gate_center;
        if (std::isfinite(params.gate)) {
            gate_center = hx * po.weights;
            const Eigen::MatrixXd s =
                params.meas_matrix * po.covariance() * params.meas_matrix.transpose() + params.meas_cov;
            gate_llt.emplace(s);
        }

        Eigen::MatrixXd diffs(dz, po.particles.cols());
        for (Eigen::Index j = 0; j < num_meas; ++j) {
            const Eigen::VectorXd& zj = z[static_cast<std::size_t>(j)];
            if (gate_llt) {
                const Eigen::VectorXd d = zj - gate_center;
                if (d.dot(gate_llt->solve(d)) > params.gate) continue;
            }
            diffs = (-hx).colwise() + zj;
            ratios.col(j) = (params.p_d / fa) * kernel.densities(diffs).matrix();
            const double b = r * po.weights.dot(ratios.col(j));
            out.beta(i, j + 1) = std::max(b, kRatioFloor);
        }
        out.particle_ratios.push_back(std::move(ratios));
    }
    return out;
}

double gaussian_box_mass(const Eigen::VectorXd& center, const Eigen::VectorXd& variances, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi) {
    double mass = 1.0;
    for (Eigen::Index k = 0; k < center.size(); ++k) {
        const double s = std::sqrt(2.0 * variances(k));
        mass *= 0.5 * (std::erf((hi(k) - center(k)) / s) - std::erf((lo(k) - center(k)) / s));
    }
    return mass;
}

Eigen::VectorXd compute_xi(const MeasurementFrame& frame, const ModelParams& params) {
    const Eigen::Index dz = params.meas_dim();
    Eigen::VectorXd lo(dz);
    Eigen::VectorXd hi(dz);
    lo.head<2>() << params.roi.xmin, params.roi.ymin;
    hi.head<2>() << params.roi.xmax, params.roi.ymax;
    if (dz == 4) {
        lo.tail<2>().setConstant(-params.velocity_extent);
        hi.tail<2>().setConstant(params.velocity_extent);
    }
    const Eigen::VectorXd variances = params.meas_cov.diagonal();
    // f_u and f_FA share the same uniform density, so it cancels from the ratio.
    const double scale = params.p_d * params.mu_u / params.mu_fa;
    Eigen::VectorXd xi(static_cast<Eigen::Index>(frame.size()));
    for (std::size_t j = 0; j < frame.size(); ++j) {
        const Eigen::VectorXd zj = measurement_vector(frame.measurements[j], dz);
        xi(static_cast<Eigen::Index>(j)) = 1.0 + scale * gaussian_box_mass(zj, variances, lo, hi);
    }
    return xi;
}

bool resample_if_degenerate(PotentialObject& po, Rng& rng) {
    const Eigen::Index n = po.weights.size();
    if (n == 0 || effective_sample_size(po.weights) >= 0.5 * static_cast<double>(n)) return false;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double step = 1.0 / static_cast<double>(n);
    double u = u01(rng) * step;
    Eigen::Matrix4Xd resampled(4, n);
    double cumulative = po.weights(0);
    Eigen::Index src = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        while (u > cumulative && src + 1 < n) cumulative += po.weights(++src);
        resampled.col(k) = po.particles.col(src);
        u += step;
    }
    po.particles = std::move(resampled);
    po.weights.setConstant(step);
    return true;
}

double legacy_score(double existence, const Eigen::Ref<const Eigen::RowVectorXd>& p_a_row,
                    std::span<const double> measurement_scores) {
    double s = existence;
    for (std::size_t j = 0; j < measurement_scores.size(); ++j) {
        s += p_a_row(static_cast<Eigen::Index>(j) + 1) * measurement_scores[j];
    }
    return s;
}

Beliefs compute_beliefs(std::span<const PredictedPo> predicted, const MeasurementFrame& frame,
                        const LegacyLikelihoods& likelihoods, const DaInputs& inputs, const DaMessages& msgs,
                        const ModelParams& params, Rng& rng, std::uint64_t& next_id,
                        const Enhancement* enhancement) {
    const auto num_legacy = static_cast<Eigen::Index>(predicted.size());
    const auto num_meas = static_cast<Eigen::Index>(frame.size());

    Beliefs out;
    out.marginals = association_marginals(inputs, msgs);
    std::vector<double> scores;
    scores.reserve(frame.size());
    for (const auto& m : frame.measurements) scores.push_back(m.score);

    out.legacy.reserve(predicted.size());
    for (Eigen::Index i = 0; i < num_legacy; ++i) {
        const PredictedPo& pred = predicted[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd& ratios = likelihoods.particle_ratios[static_cast<std::size_t>(i)];
        const double r = pred.existence;
        const double c_q = enhancement ? enhancement->c_q(i) : 1.0;

        // Per-particle r = 1 mass: missed detection plus every detection hypothesis weighted by nu.
        Eigen::VectorXd per_particle = Eigen::VectorXd::Constant(pred.weights.size(), r * (1.0 - params.p_d) / c_q);
        double mu_mass = 0.0;
        for (Eigen::Index j = 0; j < num_meas; ++j) {
            const double nu = msgs.nu(i, j);
            if (nu == 0.0) continue;
            const double omega = enhancement ? enhancement->omega(j) : 1.0;
            per_particle += (nu * omega * r / c_q) * ratios.col(j);
            if (enhancement) mu_mass += nu * enhancement->mu(i, j);
        }
        // The shape term carries no kinematic information and is spread over the prior particles.
        per_particle = per_particle.cwiseProduct(pred.weights) + mu_mass * pred.weights;

        PotentialObject post = pred;
        const double mass1 = per_particle.sum();
        const double mass0 = (1.0 - r) / c_q;
        post.existence = mass0 + mass1 > 0.0 ? std::clamp(mass1 / (mass0 + mass1), 0.0, 1.0) : 0.0;
        if (mass1 > 0.0 && std::isfinite(mass1)) post.weights = per_particle / mass1;
        resample_if_degenerate(post, rng);

        const auto p_a = out.marginals.p_a.row(i);
        if (num_meas > 0) {
            if (post.descriptor.size() == 0) post.descriptor = Eigen::VectorXd::Zero(frame.measurements[0].shape.size());
            Eigen::VectorXd pull = Eigen::VectorXd::Zero(post.descriptor.size());
            for (Eigen::Index j = 0; j < num_meas; ++j) {
                const auto& shape = frame.measurements[static_cast<std::size_t>(j)].shape;
                if (shape.size() == pull.size()) pull += p_a(j + 1) * (shape - post.descriptor);
            }
            post.descriptor += (1.0 - params.descriptor_decay) * pull;
        }
        post.score = legacy_score(post.existence, p_a, scores);
        out.legacy.push_back(std::move(post));
    }

    const Eigen::Index dz = params.meas_dim();
    const Eigen::MatrixXd meas_sqrt = psd_sqrt(params.meas_cov);
    std::normal_distribution<double> normal(0.0, 1.0);
    out.fresh.reserve(frame.size());
    for (Eigen::Index j = 0; j < num_meas; ++j) {
        const Measurement& m = frame.measurements[static_cast<std::size_t>(j)];
        const double xi = inputs.xi(j);
        const double phi_sum = num_legacy > 0 ? msgs.phi.col(j).sum() : 0.0;
        const double denom = xi + phi_sum;

        PotentialObject po;
        po.kind = PoKind::kNew;
        po.id = TrackId{next_id++};
        po.existence = denom > 0.0 ? std::clamp((xi - 1.0) / denom, 0.0, 1.0) : 0.0;
        po.p_unassociated = out.marginals.p_b(j, 0);
        po.descriptor = m.shape;
        po.score = po.existence + m.score;

        const int n = params.n_particles;
        po.particles.resize(4, n);
        po.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
        const Eigen::VectorXd z = measurement_vector(m, dz);
        for (int p = 0; p < n; ++p) {
            const Eigen::VectorXd noise = sample_gaussian(meas_sqrt, rng);
            if (dz == 4) {
                po.particles.col(p) = z + noise;
            } else {
                po.particles.col(p) << z(0) + noise(0), z(1) + noise(1), m.vx + params.new_vel_std * normal(rng),
                    m.vy + params.new_vel_std * normal(rng);
            }
        }
        out.fresh.push_back(std::move(po));
    }
    return out;
}

std::vector<PotentialObject> prune(std::vector<PotentialObject> pos, const ModelParams& params) {
    std::erase_if(pos, [&](const PotentialObject& po) {
        if (po.existence < params.t_pru) return true;
        return po.kind == PoKind::kNew && po.p_unassociated < params.t_new;
    });
    return pos;
}

std::vector<Estimate> declare_and_estimate(std::span<const PotentialObject> pos, const ModelParams& params) {
    std::vector<Estimate> out;
    for (const auto& po : pos) {
        if (po.existence > params.t_dec) {
            out.push_back({po.id, KinematicState::from(po.mean()), po.existence, po.score});
        }
    }
    return out;
}

PreparedFrame prepare_frame(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params) {
    PreparedFrame out;
    out.frame.frame = frame.frame;
    for (const auto& m : frame.measurements) {
        if (params.roi.contains(m.px, m.py)) out.frame.measurements.push_back(m);
    }
    out.predicted.reserve(state.objects.size());
    for (const auto& po : state.objects) {
        out.prior_means.push_back(po.mean());
        out.prior_existence.push_back(po.existence);
        out.predicted.push_back(predict(po, params, state.rng));
    }
    out.likelihoods = compute_beta(out.predicted, out.frame, params);
    out.xi = compute_xi(out.frame, params);
    state.frame = frame.frame;
    return out;
}

StepOutput finish_frame(TrackerState& state, PreparedFrame&& prepared, const DaInputs& inputs, DaMessages msgs,
                        const ModelParams& params, const Enhancement* enhancement) {
    Beliefs beliefs = compute_beliefs(prepared.predicted, prepared.frame, prepared.likelihoods, inputs, msgs, params,
                                      state.rng, state.next_id, enhancement);
    std::vector<PotentialObject> all = std::move(beliefs.legacy);
    all.insert(all.end(), std::make_move_iterator(beliefs.fresh.begin()),
               std::make_move_iterator(beliefs.fresh.end()));
    state.objects = prune(std::move(all), params);

    StepOutput out;
    out.estimates = declare_and_estimate(state.objects, params);
    out.messages = std::move(msgs);
    out.marginals = std::move(beliefs.marginals);
    return out;
}

StepOutput bp_step(TrackerState& state, const MeasurementFrame& frame, const ModelParams& params) {
    PreparedFrame prepared = prepare_frame(state, frame, params);
    const DaInputs inputs = prepared.da_inputs();
    DaMessages msgs = iterate_da(inputs, params.max_da_iterations, params.da_tol);
    return finish_frame(state, std::move(prepared), inputs, std::move(msgs), params);
}

}  // namespace nebp
