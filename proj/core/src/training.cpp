#include "nebp/training.hpp"

#include "nebp/assignment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace nebp {

namespace {

/// ln(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::vector<std::int64_t> measurement_ids(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                                          double t_dist) {
    if (!(t_dist > 0.0)) throw ConfigError("T_dist must be positive");
    std::vector<std::int64_t> ids(frame.size(), -1);
    if (gt.empty() || frame.size() == 0) return ids;
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(gt.size()), static_cast<Eigen::Index>(frame.size()));
    for (std::size_t g = 0; g < gt.size(); ++g) {
        for (std::size_t j = 0; j < frame.size(); ++j) {
            const auto& m = frame.measurements[j];
            cost(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j)) =
                std::hypot(m.px - gt[g].state.px, m.py - gt[g].state.py);
        }
    }
    const std::vector<int> a = solve_assignment(cost);
    for (std::size_t g = 0; g < gt.size(); ++g) {
        const int j = a[g];
        if (j >= 0 && cost(static_cast<Eigen::Index>(g), j) < t_dist) {
            ids[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(gt[g].id.value);
        }
    }
    return ids;
}

FrameLabels label_frame(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                        const std::vector<std::int64_t>& legacy_ids, double t_dist) {
    const auto nj = static_cast<Eigen::Index>(frame.size());
    const auto ni = static_cast<Eigen::Index>(legacy_ids.size());
    FrameLabels labels;
    labels.measurement_ids = measurement_ids(gt, frame, t_dist);
    labels.legacy_ids = legacy_ids;
    labels.omega_gt = Eigen::VectorXd::Zero(nj);
    for (Eigen::Index j = 0; j < nj; ++j) {
        const auto& m = frame.measurements[static_cast<std::size_t>(j)];
        for (const auto& g : gt) {
            if (std::hypot(m.px - g.state.px, m.py - g.state.py) < t_dist) {
                labels.omega_gt(j) = 1.0;
                break;
            }
        }
    }
    labels.mu_gt = Eigen::MatrixXd::Zero(ni, nj);
    for (Eigen::Index i = 0; i < ni; ++i) {
        const std::int64_t id = legacy_ids[static_cast<std::size_t>(i)];
        if (id < 0) continue;
        for (Eigen::Index j = 0; j < nj; ++j) {
            if (labels.measurement_ids[static_cast<std::size_t>(j)] == id) labels.mu_gt(i, j) = 1.0;
        }
    }
    return labels;
}

PseudoLabeler::PseudoLabeler(double t_dist) : t_dist_(t_dist) {
    if (!(t_dist > 0.0)) throw ConfigError("T_dist must be positive");
}

std::int64_t PseudoLabeler::id_of(TrackId po) const {
    const auto it = ids_.find(po.value);
    return it == ids_.end() ? -1 : it->second;
}

FrameLabels PseudoLabeler::label(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                                 std::span<const TrackId> legacy, std::span<const Eigen::Vector4d> predicted_means) {
    if (legacy.size() != predicted_means.size()) throw std::invalid_argument("legacy ids and means differ in length");
    std::vector<std::int64_t> legacy_ids(legacy.size(), -1);
    for (std::size_t i = 0; i < legacy.size(); ++i) {
        const auto it = ids_.find(legacy[i].value);
        if (it == ids_.end()) continue;
        const auto obj = std::find_if(gt.begin(), gt.end(), [&](const TruthObject& g) {
            return static_cast<std::int64_t>(g.id.value) == it->second;
        });
        const bool kept = obj != gt.end() && std::hypot(predicted_means[i](0) - obj->state.px,
                                                         predicted_means[i](1) - obj->state.py) < t_dist_;
        if (kept) {
            legacy_ids[i] = it->second;
        } else {
            ids_.erase(it);
        }
    }
    return label_frame(gt, frame, legacy_ids, t_dist_);
}

void PseudoLabeler::register_new(std::uint64_t first_new_id, const FrameLabels& labels) {
    for (std::size_t j = 0; j < labels.measurement_ids.size(); ++j) {
        const std::int64_t id = labels.measurement_ids[j];
        if (id < 0) continue;
        const bool held = std::find(labels.legacy_ids.begin(), labels.legacy_ids.end(), id) != labels.legacy_ids.end();
        if (!held) ids_[first_new_id + j] = id;
    }
}

double loss_rejection(const Eigen::VectorXd& omega, const Eigen::VectorXd& omega_gt, double eps) {
    if (omega.size() != omega_gt.size()) throw std::invalid_argument("omega and labels differ in length");
    if (omega.size() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index j = 0; j < omega.size(); ++j) {
        const double y = omega_gt(j);
        if (y > 0.0) sum += y * std::log(omega(j));
        if (y < 1.0) sum += eps * (1.0 - y) * std::log1p(-omega(j));
    }
    return -sum / static_cast<double>(omega.size());
}

double loss_rejection_logits(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_gt, double eps,
                             const Calibration& cal) {
    if (omega_star.size() != omega_gt.size()) throw std::invalid_argument("omega and labels differ in length");
    if (omega_star.size() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index j = 0; j < omega_star.size(); ++j) {
        const double z = cal.temperature * (omega_star(j) - cal.delta);
        const double y = omega_gt(j);
        // ln sigmoid(z) = -softplus(-z), ln(1 - sigmoid(z)) = -softplus(z)
        sum += y * softplus(-z) + eps * (1.0 - y) * softplus(z);
    }
    return sum / static_cast<double>(omega_star.size());
}

Eigen::VectorXd loss_rejection_grad(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_gt, double eps,
                                    const Calibration& cal) {
    const auto nj = omega_star.size();
    Eigen::VectorXd g(nj);
    for (Eigen::Index j = 0; j < nj; ++j) {
        const double w = sigmoid(cal.temperature * (omega_star(j) - cal.delta));
        const double y = omega_gt(j);
        g(j) = -cal.temperature * (y * (1.0 - w) - eps * (1.0 - y) * w) / static_cast<double>(nj);
    }
    return g;
}

double loss_association(const Eigen::MatrixXd& mu_star, const Eigen::MatrixXd& mu_gt) {
    if (mu_star.rows() != mu_gt.rows() || mu_star.cols() != mu_gt.cols()) {
        throw std::invalid_argument("mu and labels differ in shape");
    }
    if (mu_star.size() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < mu_star.size(); ++k) {
        const double z = mu_star.data()[k];
        const double y = mu_gt.data()[k];
        sum += y * softplus(-z) + (1.0 - y) * softplus(z);
    }
    return sum / static_cast<double>(mu_star.size());
}

Eigen::MatrixXd loss_association_grad(const Eigen::MatrixXd& mu_star, const Eigen::MatrixXd& mu_gt) {
    if (mu_star.size() == 0) return Eigen::MatrixXd::Zero(mu_star.rows(), mu_star.cols());
    const double n = static_cast<double>(mu_star.size());
    return mu_star.unaryExpr([](double z) { return sigmoid(z); }).binaryExpr(mu_gt, [n](double s, double y) {
        return (s - y) / n;
    });
}

std::pair<double, double> accumulate_gradients(NebpNetworks& nets, const NebpTrace& trace, const FrameLabels& labels,
                                               double eps) {
    const Refinements& ref = trace.refinements;
    const double l_r = loss_rejection_logits(ref.omega_star, labels.omega_gt, eps);
    const double l_a = loss_association(ref.mu_star, labels.mu_gt);
    gnn_backward(nets, trace.tape, loss_rejection_grad(ref.omega_star, labels.omega_gt, eps),
                 loss_association_grad(ref.mu_star, labels.mu_gt));
    return {l_r, l_a};
}

std::vector<EpochLog> train(NebpNetworks& nets, Adam& adam, const std::vector<Dataset>& scenes,
                            const ModelParams& params, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch) {
    if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg.eps < 0.0) throw ConfigError("eps must be nonnegative");
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    const std::array<Mlp*, 6> net_ptrs = nets.all();
    const Calibration train_cal{};  // T = 1, delta = 0

    std::vector<EpochLog> logs;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog log;
        log.epoch = epoch + 1;
        for (const std::size_t s : order) {
            const Dataset& scene = scenes[s];
            if (scene.truth.frames.size() != scene.frames.size()) throw ConfigError("scene truth and frames differ");
            TrackerState state(rng());
            PseudoLabeler labeler(cfg.t_dist);
            for (std::size_t k = 0; k < scene.frames.size(); ++k) {
                NebpTrace trace;
                nebp_step(state, scene.frames[k], params, nets, Method::kNebp, train_cal, &trace);
                const FrameLabels labels =
                    labeler.label(scene.truth.frames[k], trace.frame, trace.legacy_ids, trace.predicted_means);
                labeler.register_new(trace.first_new_id, labels);
                if (trace.frame.size() == 0) continue;

                nets.zero_grad();
                const auto [l_r, l_a] = accumulate_gradients(nets, trace, labels, cfg.eps);
                if (!std::isfinite(l_r) || !std::isfinite(l_a)) {
                    std::ostringstream os;
                    os << "non-finite loss at epoch " << log.epoch << ", scene " << s << ", frame " << k
                       << " (L_r = " << l_r << ", L_a = " << l_a << ", I = " << trace.legacy_ids.size()
                       << ", J = " << trace.frame.size() << ")";
                    throw TrainingDiverged(os.str());
                }
                adam.step(net_ptrs);
                if (!nets.all_finite()) {
                    throw TrainingDiverged("non-finite parameters after Adam step " + std::to_string(adam.steps()));
                }
                log.loss_rejection += l_r;
                log.loss_association += l_a;
                ++log.frames;
            }
        }
        if (log.frames > 0) {
            log.loss_rejection /= static_cast<double>(log.frames);
            log.loss_association /= static_cast<double>(log.frames);
        }
        log.loss_total = log.loss_rejection + log.loss_association;
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    return logs;
}

std::string epoch_csv_header() { return "epoch,loss_rejection,loss_association,loss_total,frames"; }

std::string epoch_csv_row(const EpochLog& e) {
    std::ostringstream os;
    os.precision(10);
    os << e.epoch << ',' << e.loss_rejection << ',' << e.loss_association << ',' << e.loss_total << ',' << e.frames;
    return os.str();
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("logit needs p in (0,1)");
    return std::log(p / (1.0 - p));
}

CalibrationResult grid_search(const CalibrationGrid& grid, const std::function<double(const Calibration&)>& metric,
                              bool lower_is_better) {
    if (grid.temperatures.empty() || grid.sigmoid_deltas.empty()) throw ConfigError("calibration grid is empty");
    std::vector<double> temps = grid.temperatures;
    std::vector<double> deltas = grid.sigmoid_deltas;
    std::sort(temps.begin(), temps.end());
    std::sort(deltas.begin(), deltas.end());
    for (double t : temps) {
        if (!(t > 0.0)) throw ConfigError("temperatures must be positive");
    }

    CalibrationResult out;
    bool have = false;
    for (double t : temps) {
        for (double sd : deltas) {
            const Calibration cal{t, logit(sd)};
            const double v = metric(cal);
            out.table.push_back({t, sd, v});
            if (!std::isfinite(v)) continue;
            const bool better = lower_is_better ? v < out.best_value : v > out.best_value;
            if (!have || better) {
                out.best = cal;
                out.best_value = v;
                have = true;
            }
        }
    }
    if (!have) throw std::runtime_error("calibration metric was not finite anywhere on the grid");
    return out;
}

CalibrationMetric parse_calibration_metric(const std::string& name) {
    if (name == "gospa") return CalibrationMetric::kGospa;
    if (name == "amota") return CalibrationMetric::kAmota;
    throw ConfigError("unknown calibration metric: " + name);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<EvalReport> evaluate_scenes(const std::vector<Dataset>& scenes, const ModelParams& params, Method method,
                                        const NebpNetworks* nets, const Calibration& cal, std::uint64_t seed,
                                        int jobs) {
    std::vector<EvalReport> reports(scenes.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t s) {
        const auto est = track_sequence(scenes[s].frames, params, method, nets, cal, seed + s);
        reports[s] = evaluate(est, scenes[s].truth);
    });
    return reports;
}

CalibrationResult calibrate(const NebpNetworks& nets, const std::vector<Dataset>& scenes, const ModelParams& params,
                            Method method, CalibrationMetric metric, const CalibrationGrid& grid, std::uint64_t seed,
                            int jobs) {
    if (scenes.empty()) throw ConfigError("calibration needs at least one scene");
    auto objective = [&](const Calibration& cal) {
        const std::vector<EvalReport> reports = evaluate_scenes(scenes, params, method, &nets, cal, seed, jobs);
        const EvalReport mean = aggregate(reports);
        return metric == CalibrationMetric::kGospa ? mean.gospa_mean : mean.amota;
    };
    return grid_search(grid, objective, metric == CalibrationMetric::kGospa);
}

}  // namespace nebp
