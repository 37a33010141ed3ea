#pragma once

#include <string>
#include <vector>

#include "gcnet/shape.hpp"

namespace gcnet {

struct EvalRecord {
    int gt_label = 0;
    Aabb gt_bbox;
    std::vector<double> scores;  // one per class
    Aabb pred_bbox;
};

// Intersection area / union area; 0 for disjoint or degenerate boxes.
double iou(const Aabb& b1, const Aabb& b2);

// 100 * fraction of records with iou(pred, gt) strictly above 0.5.
double corloc(const std::vector<EvalRecord>& records);

// A record is correct iff the gt label is among the k top scores AND its box
// IoU exceeds 0.5; returns 100 - correct%. Score ties go to the lower class
// index.
double loc_err_topk(const std::vector<EvalRecord>& records, int k);

// Classification-only variant of loc_err_topk.
double cls_err_topk(const std::vector<EvalRecord>& records, int k);

struct MetricsReport {
    double cls_err_top1 = 0.0;
    double cls_err_top5 = 0.0;
    double loc_err_top1 = 0.0;
    double loc_err_top5 = 0.0;
    double corloc = 0.0;
    double mean_iou = 0.0;

    std::string table() const;     // human-readable
    std::string key_line() const;  // single machine-readable key=value line
};

// top-5 columns fall back to k = class count when there are fewer than 5
// classes.
MetricsReport evaluate(const std::vector<EvalRecord>& records);

}  // namespace gcnet
