#include "nebp/metrics.hpp"

#include "nebp/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nebp {

namespace {

constexpr double kForbidden = 1e12;

std::vector<Eigen::Vector2d> positions(const std::vector<Estimate>& est) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(est.size());
    for (const auto& e : est) out.emplace_back(e.state.px, e.state.py);
    return out;
}

std::vector<Eigen::Vector2d> positions(const std::vector<TruthObject>& gt) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(gt.size());
    for (const auto& g : gt) out.emplace_back(g.state.px, g.state.py);
    return out;
}

void check_lengths(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth) {
    if (estimates.size() != truth.frames.size()) {
        throw std::invalid_argument("estimate and ground-truth sequences differ in length");
    }
}

}  // namespace

GospaFrame gospa_frame(const std::vector<Eigen::Vector2d>& estimates, const std::vector<Eigen::Vector2d>& truth,
                       const GospaParams& params) {
    if (!(params.c > 0.0) || !(params.p >= 1.0)) throw std::invalid_argument("GOSPA needs c > 0 and p >= 1");
    if (params.alpha != 2.0) throw std::invalid_argument("only alpha = 2 is supported");
    const auto n_est = static_cast<Eigen::Index>(estimates.size());
    const auto n_gt = static_cast<Eigen::Index>(truth.size());
    const double cp = std::pow(params.c, params.p);

    GospaFrame f;
    std::vector<int> assignment;
    Eigen::MatrixXd dist(n_est, n_gt);
    if (n_est > 0 && n_gt > 0) {
        for (Eigen::Index i = 0; i < n_est; ++i) {
            for (Eigen::Index j = 0; j < n_gt; ++j) {
                dist(i, j) = (estimates[static_cast<std::size_t>(i)] - truth[static_cast<std::size_t>(j)]).norm();
            }
        }
        const Eigen::MatrixXd cost = dist.unaryExpr([&](double d) { return std::pow(std::min(d, params.c), params.p); });
        assignment = solve_assignment(cost);
    } else {
        assignment.assign(static_cast<std::size_t>(n_est), -1);
    }

    for (Eigen::Index i = 0; i < n_est; ++i) {
        const int j = assignment[static_cast<std::size_t>(i)];
        // A pair at distance >= c is no better than one missed plus one false object.
        if (j >= 0 && dist(i, j) < params.c) {
            f.localization += std::pow(dist(i, j), params.p);
            ++f.n_assigned;
        }
    }
    f.n_false = static_cast<int>(n_est) - f.n_assigned;
    f.n_missed = static_cast<int>(n_gt) - f.n_assigned;
    f.false_objects = 0.5 * cp * f.n_false;
    f.missed = 0.5 * cp * f.n_missed;
    f.value = std::pow(f.localization + f.false_objects + f.missed, 1.0 / params.p);
    return f;
}

GospaResult gospa(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                  const GospaParams& params) {
    check_lengths(estimates, truth);
    GospaResult r;
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        GospaFrame f = gospa_frame(positions(estimates[k]), positions(truth.frames[k]), params);
        r.localization += f.localization;
        r.missed += f.missed;
        r.false_objects += f.false_objects;
        r.mean += f.value;
        r.frames.push_back(f);
    }
    r.total = r.localization + r.missed + r.false_objects;
    if (!r.frames.empty()) r.mean /= static_cast<double>(r.frames.size());
    return r;
}

double ClearCounts::mota() const {
    if (gt == 0) return fp == 0 ? 1.0 : 0.0;
    return 1.0 - static_cast<double>(fn + fp + ids) / static_cast<double>(gt);
}

ClearCounts clear_counts(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                         double dist_thresh, double score_threshold) {
    check_lengths(estimates, truth);
    ClearCounts c;
    std::map<std::uint64_t, std::uint64_t> last_match;
    std::set<std::uint64_t> matched_prev;
    for (std::size_t k = 0; k < estimates.size(); ++k) {
        std::vector<const Estimate*> est;
        for (const auto& e : estimates[k]) {
            if (e.score >= score_threshold) est.push_back(&e);
        }
        const auto& gt = truth.frames[k];
        const auto n_gt = static_cast<Eigen::Index>(gt.size());
        const auto n_est = static_cast<Eigen::Index>(est.size());
        c.gt += n_gt;

        std::vector<int> match(gt.size(), -1);
        if (n_gt > 0 && n_est > 0) {
            Eigen::MatrixXd cost(n_gt, n_est);
            for (Eigen::Index g = 0; g < n_gt; ++g) {
                const auto& s = gt[static_cast<std::size_t>(g)].state;
                for (Eigen::Index e = 0; e < n_est; ++e) {
                    const auto& t = est[static_cast<std::size_t>(e)]->state;
                    const double d = std::hypot(s.px - t.px, s.py - t.py);
                    cost(g, e) = d <= dist_thresh ? d : kForbidden;
                }
            }
            const std::vector<int> a = solve_assignment(cost);
            for (Eigen::Index g = 0; g < n_gt; ++g) {
                const int e = a[static_cast<std::size_t>(g)];
                if (e >= 0 && cost(g, e) < kForbidden) match[static_cast<std::size_t>(g)] = e;
            }
        }

        std::set<std::uint64_t> matched_now;
        long tp = 0;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            const std::uint64_t gid = gt[g].id.value;
            if (match[g] < 0) {
                if (matched_prev.contains(gid)) ++c.frag;
                continue;
            }
            ++tp;
            matched_now.insert(gid);
            const std::uint64_t eid = est[static_cast<std::size_t>(match[g])]->id.value;
            auto it = last_match.find(gid);
            if (it != last_match.end() && it->second != eid) ++c.ids;
            last_match[gid] = eid;
        }
        c.tp += tp;
        c.fn += n_gt - tp;
        c.fp += n_est - tp;
        matched_prev = std::move(matched_now);
    }
    return c;
}

ClearSweep clear_sweep(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                       double dist_thresh, int n_recall_points) {
    if (n_recall_points < 1) throw std::invalid_argument("n_recall_points must be positive");
    ClearSweep out;
    out.all = clear_counts(estimates, truth, dist_thresh);

    std::vector<double> scores;
    for (const auto& f : estimates) {
        for (const auto& e : f) scores.push_back(e.score);
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    // Rank-based subsampling keeps the sweep invariant to monotone rescaling of scores.
    constexpr std::size_t kMaxThresholds = 400;
    std::vector<double> thresholds;
    if (scores.size() <= kMaxThresholds) {
        thresholds = scores;
    } else {
        for (std::size_t t = 0; t < kMaxThresholds; ++t) {
            thresholds.push_back(scores[t * (scores.size() - 1) / (kMaxThresholds - 1)]);
        }
    }
    std::vector<ClearCounts> counts;
    counts.reserve(thresholds.size());
    for (double t : thresholds) counts.push_back(clear_counts(estimates, truth, dist_thresh, t));

    const double p = static_cast<double>(out.all.gt);
    double sum = 0.0;
    for (int n = 0; n < n_recall_points; ++n) {
        RecallPoint pt;
        pt.recall_target = n_recall_points == 1 ? 1.0 : 0.1 + 0.9 * n / static_cast<double>(n_recall_points - 1);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            if (p > 0.0 && counts[t].recall() >= pt.recall_target - 1e-12) {
                const auto& c = counts[t];
                const double r = pt.recall_target;
                const double err = static_cast<double>(c.ids + c.fp + c.fn) - (1.0 - r) * p;
                pt.reachable = true;
                pt.threshold = thresholds[t];
                pt.recall = c.recall();
                pt.motar = std::clamp(1.0 - err / (r * p), 0.0, 1.0);
                break;
            }
        }
        sum += pt.motar;
        out.curve.push_back(pt);
    }
    out.amota = sum / n_recall_points;
    return out;
}

EvalReport evaluate(const std::vector<std::vector<Estimate>>& estimates, const GroundTruth& truth,
                    const GospaParams& gospa_params, double dist_thresh, int n_recall_points) {
    const GospaResult g = gospa(estimates, truth, gospa_params);
    const ClearSweep s = clear_sweep(estimates, truth, dist_thresh, n_recall_points);
    EvalReport r;
    r.gospa_total = g.total;
    r.gospa_localization = g.localization;
    r.gospa_false = g.false_objects;
    r.gospa_missed = g.missed;
    r.gospa_mean = g.mean;
    r.mota_at_recall = s.curve;
    r.amota = s.amota;
    r.ids = s.all.ids;
    r.frag = s.all.frag;
    r.n_frames = static_cast<long>(estimates.size());
    return r;
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
    EvalReport out;
    if (reports.empty()) return out;
    const double n = static_cast<double>(reports.size());
    out.mota_at_recall = reports.front().mota_at_recall;
    for (auto& pt : out.mota_at_recall) pt = RecallPoint{pt.recall_target, 0.0, 0.0, 0.0, false};
    for (const auto& r : reports) {
        out.gospa_total += r.gospa_total / n;
        out.gospa_localization += r.gospa_localization / n;
        out.gospa_false += r.gospa_false / n;
        out.gospa_missed += r.gospa_missed / n;
        out.gospa_mean += r.gospa_mean / n;
        out.amota += r.amota / n;
        out.ids += r.ids;
        out.frag += r.frag;
        out.n_frames += r.n_frames;
        for (std::size_t k = 0; k < out.mota_at_recall.size() && k < r.mota_at_recall.size(); ++k) {
            auto& pt = out.mota_at_recall[k];
            pt.motar += r.mota_at_recall[k].motar / n;
            pt.recall += r.mota_at_recall[k].recall / n;
            pt.reachable = pt.reachable || r.mota_at_recall[k].reachable;
        }
    }
    return out;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& pt : r.mota_at_recall) {
        curve.push_back({{"recall_target", pt.recall_target},
                         {"threshold", pt.threshold},
                         {"recall", pt.recall},
                         {"motar", pt.motar},
                         {"reachable", pt.reachable}});
    }
    return {{"gospa_total", r.gospa_total},
            {"gospa_localization", r.gospa_localization},
            {"gospa_false", r.gospa_false},
            {"gospa_missed", r.gospa_missed},
            {"gospa_mean", r.gospa_mean},
            {"amota", r.amota},
            {"ids", r.ids},
            {"frag", r.frag},
            {"n_frames", r.n_frames},
            {"mota_at_recall", std::move(curve)}};
}

std::string csv_header(const EvalReport&) {
    return "gospa_total,gospa_localization,gospa_false,gospa_missed,gospa_mean,amota,ids,frag,n_frames";
}

std::string csv_row(const EvalReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << r.gospa_total << ',' << r.gospa_localization << ',' << r.gospa_false << ',' << r.gospa_missed << ','
       << r.gospa_mean << ',' << r.amota << ',' << r.ids << ',' << r.frag << ',' << r.n_frames;
    return os.str();
}

}  // namespace nebp
