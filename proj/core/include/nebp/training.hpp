#pragma once

#include "nebp/metrics.hpp"
#include "nebp/nebp.hpp"
#include "nebp/simulator.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nebp {

/// Pseudo ground truth of one frame. Identifiers are ground-truth object ids, -1 when unlabeled.
struct FrameLabels {
    Eigen::VectorXd omega_gt;  ///< J, 1 if the measurement lies within T_dist of some object
    Eigen::MatrixXd mu_gt;     ///< I x J, 1 if legacy PO i and measurement j carry the same id
    std::vector<std::int64_t> measurement_ids;
    std::vector<std::int64_t> legacy_ids;
};

/// Identifiers transferred from ground truth to measurements: optimal assignment on Euclidean
/// position distance, pairs closer than t_dist inherit the object id.
std::vector<std::int64_t> measurement_ids(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                                          double t_dist);

/// Labels for one frame given the ids currently held by the legacy POs.
FrameLabels label_frame(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                        const std::vector<std::int64_t>& legacy_ids, double t_dist);

/// Stateful labeling over a sequence.
///
/// A legacy PO keeps its id while its predicted position stays within t_dist of the object with that
/// id; otherwise it loses it for good. The new PO spawned by a labeled measurement inherits the
/// measurement id unless a legacy PO already holds it.
class PseudoLabeler {
public:
    explicit PseudoLabeler(double t_dist);

    FrameLabels label(const std::vector<TruthObject>& gt, const MeasurementFrame& frame,
                      std::span<const TrackId> legacy, std::span<const Eigen::Vector4d> predicted_means);

    /// New PO for measurement j has track id first_new_id + j.
    void register_new(std::uint64_t first_new_id, const FrameLabels& labels);

    [[nodiscard]] std::int64_t id_of(TrackId po) const;

private:
    double t_dist_;
    std::map<std::uint64_t, std::int64_t> ids_;
};

/// L_r = -(1/J) sum_j [y_j ln w_j + eps (1 - y_j) ln(1 - w_j)]; 0 for J = 0.
double loss_rejection(const Eigen::VectorXd& omega, const Eigen::VectorXd& omega_gt, double eps);
/// Same loss evaluated from omega* with omega = sigmoid(T (omega* - delta)), numerically stable.
double loss_rejection_logits(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_gt, double eps,
                             const Calibration& cal = {});
/// dL_r / domega*.
Eigen::VectorXd loss_rejection_grad(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_gt, double eps,
                                    const Calibration& cal = {});

/// L_a = -(1/(IJ)) sum [y ln sigmoid(mu*) + (1 - y) ln(1 - sigmoid(mu*))]; 0 for IJ = 0.
double loss_association(const Eigen::MatrixXd& mu_star, const Eigen::MatrixXd& mu_gt);
/// dL_a / dmu* = (sigmoid(mu*) - y) / (IJ).
Eigen::MatrixXd loss_association_grad(const Eigen::MatrixXd& mu_star, const Eigen::MatrixXd& mu_gt);

struct TrainConfig {
    double lr = 1e-4;
    int epochs = 8;
    double eps = 0.1;
    double t_dist = 2.0;
    std::uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    double loss_rejection = 0.0;
    double loss_association = 0.0;
    double loss_total = 0.0;  ///< mean over frames of L_r + L_a
    long frames = 0;
};

/// Non-finite loss or parameters during training.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loss and gradients of one recorded NEBP step (T = 1, delta = 0). Gradients are accumulated into the
/// network buffers; returns (L_r, L_a).
std::pair<double, double> accumulate_gradients(NebpNetworks& nets, const NebpTrace& trace, const FrameLabels& labels,
                                               double eps);

/// Adam training with batch size 1 over every frame of every scene; scenes are shuffled per epoch.
std::vector<EpochLog> train(NebpNetworks& nets, Adam& adam, const std::vector<Dataset>& scenes,
                            const ModelParams& params, const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochLog& e);

struct CalibrationGrid {
    std::vector<double> temperatures{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, std::numeric_limits<double>::infinity()};
    /// Values of sigmoid(delta).
    std::vector<double> sigmoid_deltas{0.01, 0.02, 0.05, 0.1, 0.2};
};

struct CalibrationEntry {
    double temperature = 0.0;
    double sigmoid_delta = 0.0;
    double value = 0.0;
};

struct CalibrationResult {
    Calibration best;
    double best_value = 0.0;
    std::vector<CalibrationEntry> table;
};

double logit(double p);

/// Exhaustive grid search. Ties keep the smaller temperature, then the smaller delta.
CalibrationResult grid_search(const CalibrationGrid& grid, const std::function<double(const Calibration&)>& metric,
                              bool lower_is_better);

enum class CalibrationMetric { kGospa, kAmota };
CalibrationMetric parse_calibration_metric(const std::string& name);

/// Runs `method` on every scene for each grid point and picks the best mean metric (GOSPA: mean per-frame
/// value, lower is better; AMOTA: higher is better). Scenes are processed on `jobs` threads.
CalibrationResult calibrate(const NebpNetworks& nets, const std::vector<Dataset>& scenes, const ModelParams& params,
                            Method method, CalibrationMetric metric, const CalibrationGrid& grid, std::uint64_t seed,
                            int jobs = 1);

/// Tracks every scene with `method` and evaluates it; scene s uses tracker seed `seed + s`.
std::vector<EvalReport> evaluate_scenes(const std::vector<Dataset>& scenes, const ModelParams& params, Method method,
                                        const NebpNetworks* nets, const Calibration& cal, std::uint64_t seed,
                                        int jobs = 1);

/// Runs fn(0..n-1) on up to `jobs` threads. Each index is processed exactly once.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace nebp
