#pragma once

#include "nebp/bp_tracker.hpp"
#include "nebp/simulator.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <limits>
#include <string>
#include <vector>

namespace nebp {

struct GospaParams {
    double c = 10.0;
    double p = 2.0;
    double alpha = 2.0;
};

/// GOSPA of one frame. Components are in the p-th power domain and sum to `value^p`.
struct GospaFrame {
    double value = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_objects = 0.0;
    int n_assigned = 0;
    int n_missed = 0;
    int n_false = 0;
};

/// Single frame GOSPA between estimated and true positions (2-D). Only alpha = 2 is supported.
GospaFrame gospa_frame(const std::vector<Eigen::Vector2d>& estimates, const std::vector<Eigen::Vector2d>& truth,
                       const GospaParams& params = {});

struct GospaResult {
    std::vector<GospaFrame> frames;
    /// Sums over frames of the power-domain components; total = localization + missed + false.
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_objects = 0.0;
    /// Mean over frames of the per-frame GOSPA value.
    double mean = 0.0;
};

GospaResult gospa(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                  const GospaParams& params = {});

struct ClearCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long ids = 0;
    long frag = 0;
    long gt = 0;

    [[nodiscard]] double recall() const { return gt > 0 ? static_cast<double>(tp) / static_cast<double>(gt) : 0.0; }
    [[nodiscard]] double mota() const;
};

/// CLEAR counts of the estimates with score >= threshold; per-frame optimal matching within
/// `dist_thresh` meters. IDS counts changes of the estimate identity matched to a ground-truth
/// object; Frag counts ground-truth objects matched at k-1 and unmatched at k.
ClearCounts clear_counts(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                         double dist_thresh, double score_threshold = -std::numeric_limits<double>::infinity());

struct RecallPoint {
    double recall_target = 0.0;
    double threshold = 0.0;
    double recall = 0.0;
    double motar = 0.0;
    bool reachable = false;
};

struct ClearSweep {
    std::vector<RecallPoint> curve;
    double amota = 0.0;
    ClearCounts all;  ///< counts over all estimates (no score threshold)
};

/// Score-threshold sweep. For each recall target r the highest threshold reaching recall >= r is used and
/// MOTAR = max(0, 1 - (IDS + FP + FN - (1 - r) P) / (r P)), clamped to <= 1 (0 when r is unreachable).
/// AMOTA is the average over `n_recall_points` targets evenly spaced in [0.1, 1].
ClearSweep clear_sweep(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                       double dist_thresh = 2.0, int n_recall_points = 40);

struct EvalReport {
    double gospa_total = 0.0;
    double gospa_localization = 0.0;
    double gospa_false = 0.0;
    double gospa_missed = 0.0;
    double gospa_mean = 0.0;
    std::vector<RecallPoint> mota_at_recall;
    double amota = 0.0;
    long ids = 0;
    long frag = 0;
    long n_frames = 0;
};

EvalReport evaluate(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                    const GospaParams& gospa_params = {}, double dist_thresh = 2.0, int n_recall_points = 40);

/// Scene average of the scalar fields (curves are averaged pointwise; counts are summed).
EvalReport aggregate(const std::vector<EvalReport>& reports);

nlohmann::json to_json(const EvalReport& r);
std::string csv_header(const EvalReport&);
std::string csv_row(const EvalReport& r);

}  // namespace nebp
