#include "gcnet/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

void check_records(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw UsageError("metrics need at least one record");
}

// True iff the gt label is among the k best scores, ties broken toward the
// lower class index: class i beats class j < i only with a strictly higher
// score.
bool label_in_topk(const EvalRecord& r, int k) {
    const int n = static_cast<int>(r.scores.size());
    if (k > n) throw UsageError("top-k exceeds class count");
    const double gt = r.scores[static_cast<std::size_t>(r.gt_label)];
    int better = 0;
    for (int i = 0; i < n; ++i) {
        if (i == r.gt_label) continue;
        const double s = r.scores[static_cast<std::size_t>(i)];
        if (s > gt || (s == gt && i < r.gt_label)) ++better;
    }
    return better < k;
}

}  // namespace

double iou(const Aabb& b1, const Aabb& b2) {
    const double ix = std::max(0.0, std::min(b1.x_max, b2.x_max) - std::max(b1.x_min, b2.x_min));
    const double iy = std::max(0.0, std::min(b1.y_max, b2.y_max) - std::max(b1.y_min, b2.y_min));
    const double inter = ix * iy;
    const double uni = b1.area() + b2.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double corloc(const std::vector<EvalRecord>& records) {
    check_records(records);
    int hit = 0;
    for (const EvalRecord& r : records)
        if (iou(r.pred_bbox, r.gt_bbox) > 0.5) ++hit;
    return 100.0 * hit / static_cast<double>(records.size());
}

double loc_err_topk(const std::vector<EvalRecord>& records, int k) {
    check_records(records);
    if (k < 1) throw UsageError("top-k needs k >= 1");
    int correct = 0;
    for (const EvalRecord& r : records)
        if (label_in_topk(r, k) && iou(r.pred_bbox, r.gt_bbox) > 0.5) ++correct;
    return 100.0 - 100.0 * correct / static_cast<double>(records.size());
}

double cls_err_topk(const std::vector<EvalRecord>& records, int k) {
    check_records(records);
    if (k < 1) throw UsageError("top-k needs k >= 1");
    int correct = 0;
    for (const EvalRecord& r : records)
        if (label_in_topk(r, k)) ++correct;
    return 100.0 - 100.0 * correct / static_cast<double>(records.size());
}

std::string MetricsReport::table() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "metric            value\n"
                  "----------------  ------\n"
                  "ClsErr top-1 (%%)  %6.2f\n"
                  "ClsErr top-5 (%%)  %6.2f\n"
                  "LocErr top-1 (%%)  %6.2f\n"
                  "LocErr top-5 (%%)  %6.2f\n"
                  "CorLoc (%%)        %6.2f\n"
                  "mean IoU          %6.4f\n",
                  cls_err_top1, cls_err_top5, loc_err_top1, loc_err_top5, corloc, mean_iou);
    return buf;
}

std::string MetricsReport::key_line() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "cls_err_top1=%.4f cls_err_top5=%.4f loc_err_top1=%.4f loc_err_top5=%.4f "
                  "corloc=%.4f mean_iou=%.6f",
                  cls_err_top1, cls_err_top5, loc_err_top1, loc_err_top5, corloc, mean_iou);
    return buf;
}

MetricsReport evaluate(const std::vector<EvalRecord>& records) {
    check_records(records);
    const int n = static_cast<int>(records.front().scores.size());
    const int k5 = std::min(5, n);
    MetricsReport rep;
    rep.cls_err_top1 = cls_err_topk(records, 1);
    rep.cls_err_top5 = cls_err_topk(records, k5);
    rep.loc_err_top1 = loc_err_topk(records, 1);
    rep.loc_err_top5 = loc_err_topk(records, k5);
    rep.corloc = corloc(records);
    double acc = 0.0;
    for (const EvalRecord& r : records) acc += iou(r.pred_bbox, r.gt_bbox);
    rep.mean_iou = acc / static_cast<double>(records.size());
    return rep;
}

}  // namespace gcnet
