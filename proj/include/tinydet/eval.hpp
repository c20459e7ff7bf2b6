#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tinydet/boxes.hpp"
#include "tinydet/errors.hpp"

namespace tinydet {

struct GroundTruthBox {
    std::string image_id;
    int class_id = 0;
    BoxXYXY box;
};

struct DetRecord {
    std::string image_id;
    int class_id = 0;
    double score = 0.0;
    BoxXYXY box;
};

// Outcome of greedy matching: one (score, is_true_positive) flag per
// detection in processing order, plus the ground-truth total for recall.
struct MatchOutcome {
    std::vector<std::pair<double, bool>> flags;
    std::size_t total_gt = 0;

    // Counts over detections scoring strictly above c.
    void counts_above(double c, std::size_t& tp, std::size_t& fp) const {
        tp = fp = 0;
        for (const auto& [score, is_tp] : flags) {
            if (score > c) (is_tp ? tp : fp) += 1;
        }
    }
};

// Greedy one-to-one matching. Detections are processed globally by
// descending score (ties broken by image id, then input order); each claims
// the unmatched same-image same-class ground truth with the highest IOU,
// provided that IOU clears the target (strictly above by default, at-or-above
// when ge_threshold is set). Ties on IOU go to the earliest ground truth.
inline MatchOutcome match_detections(const std::vector<DetRecord>& dets,
                                     const std::vector<GroundTruthBox>& gts,
                                     double iou_target, bool ge_threshold = false) {
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> gt_index;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        gt_index[{gts[i].image_id, gts[i].class_id}].push_back(i);
    }
    std::vector<char> used(gts.size(), 0);

    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].image_id < dets[b].image_id;
    });

    MatchOutcome out;
    out.total_gt = gts.size();
    out.flags.reserve(dets.size());
    for (std::size_t idx : order) {
        const DetRecord& det = dets[idx];
        bool matched = false;
        auto it = gt_index.find({det.image_id, det.class_id});
        if (it != gt_index.end()) {
            double best_iou = 0.0;
            std::size_t best_gt = gts.size();
            for (std::size_t g : it->second) {
                if (used[g]) continue;
                const double iou = iou_boxes(det.box, gts[g].box);
                const bool clears = ge_threshold ? iou >= iou_target : iou > iou_target;
                if (clears && (best_gt == gts.size() || iou > best_iou)) {
                    best_iou = iou;
                    best_gt = g;
                }
            }
            if (best_gt < gts.size()) {
                used[best_gt] = 1;
                matched = true;
            }
        }
        out.flags.emplace_back(det.score, matched);
    }
    return out;
}

struct PRPoint {
    double confidence = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;    // one per distinct score, descending
    std::vector<double> smoothed;   // precision envelope max over points[i..]
    std::size_t total_gt = 0;
};

// Sweeps the confidence threshold over the distinct detection scores. Every
// detection at or above the breakpoint counts, so equal-scored detections
// collapse into one point.
inline PRCurve pr_curve(const MatchOutcome& outcome) {
    if (outcome.total_gt == 0) {
        throw NoGroundTruth("precision-recall curve needs at least one ground truth");
    }
    PRCurve curve;
    curve.total_gt = outcome.total_gt;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < outcome.flags.size(); ++i) {
        (outcome.flags[i].second ? tp : fp) += 1;
        const bool last_of_score = i + 1 == outcome.flags.size() ||
                                   outcome.flags[i + 1].first != outcome.flags[i].first;
        if (last_of_score) {
            PRPoint pt;
            pt.confidence = outcome.flags[i].first;
            pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            pt.recall = static_cast<double>(tp) / static_cast<double>(outcome.total_gt);
            curve.points.push_back(pt);
        }
    }
    curve.smoothed.resize(curve.points.size());
    double running = 0.0;
    for (std::size_t i = curve.points.size(); i-- > 0;) {
        running = std::max(running, curve.points[i].precision);
        curve.smoothed[i] = running;
    }
    return curve;
}

// Area under the smoothed curve: sum of recall increments times the
// precision envelope at each point.
inline double average_precision(const PRCurve& curve) {
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        ap += (curve.points[i].recall - prev_recall) * curve.smoothed[i];
        prev_recall = curve.points[i].recall;
    }
    return ap;
}

struct TargetReport {
    double iou_target = 0.0;
    std::vector<std::pair<int, double>> per_class_ap;  // sorted by class id
    double mean_ap = 0.0;
    double precision_at_c = 0.0;
    double recall_at_c = 0.0;
};

struct EvalReport {
    double confidence_threshold = 0.0;
    std::vector<TargetReport> targets;
};

// Full evaluation: per IOU target, average precision per ground-truth class
// plus the mean, and pooled precision/recall at the reporting confidence.
// Precision with nothing above the threshold is vacuously 1.
inline EvalReport evaluate(const std::vector<DetRecord>& dets,
                           const std::vector<GroundTruthBox>& gts,
                           const std::vector<double>& iou_targets, double confidence,
                           bool ge_threshold = false) {
    if (gts.empty()) {
        throw NoGroundTruth("evaluation needs at least one ground truth");
    }
    std::vector<int> classes;
    for (const GroundTruthBox& gt : gts) classes.push_back(gt.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    EvalReport report;
    report.confidence_threshold = confidence;
    for (double target : iou_targets) {
        TargetReport tr;
        tr.iou_target = target;
        double ap_sum = 0.0;
        for (int cls : classes) {
            std::vector<DetRecord> cls_dets;
            std::vector<GroundTruthBox> cls_gts;
            for (const DetRecord& d : dets) {
                if (d.class_id == cls) cls_dets.push_back(d);
            }
            for (const GroundTruthBox& g : gts) {
                if (g.class_id == cls) cls_gts.push_back(g);
            }
            const MatchOutcome outcome = match_detections(cls_dets, cls_gts, target,
                                                          ge_threshold);
            const double ap = cls_dets.empty() ? 0.0 : average_precision(pr_curve(outcome));
            tr.per_class_ap.emplace_back(cls, ap);
            ap_sum += ap;
        }
        tr.mean_ap = ap_sum / static_cast<double>(classes.size());

        const MatchOutcome pooled = match_detections(dets, gts, target, ge_threshold);
        std::size_t tp = 0, fp = 0;
        pooled.counts_above(confidence, tp, fp);
        tr.precision_at_c = (tp + fp) == 0
                                ? 1.0
                                : static_cast<double>(tp) / static_cast<double>(tp + fp);
        tr.recall_at_c = static_cast<double>(tp) / static_cast<double>(pooled.total_gt);
        report.targets.push_back(std::move(tr));
    }
    return report;
}

// CSV with a header row; one line per curve point, six decimal places.
inline std::string export_pr_curve(const PRCurve& curve) {
    std::string out = "confidence,precision,recall\n";
    char line[96];
    for (const PRPoint& pt : curve.points) {
        std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", pt.confidence, pt.precision,
                      pt.recall);
        out += line;
    }
    return out;
}

}  // namespace tinydet
