#include "ron/eval.hpp"

#include <algorithm>
#include <numeric>

namespace ron {

std::optional<PRCurve> ap_for_class(std::vector<EvalDetection> detections,
                                    const std::vector<EvalGt>& gts, int class_id,
                                    double iou_thresh, bool eleven_point) {
    std::vector<const EvalGt*> class_gts;
    for (const EvalGt& g : gts)
        if (g.class_id == class_id && !g.difficult) class_gts.push_back(&g);
    if (class_gts.empty()) return std::nullopt;

    std::erase_if(detections, [&](const EvalDetection& d) { return d.class_id != class_id; });
    std::stable_sort(detections.begin(), detections.end(),
                     [](const EvalDetection& a, const EvalDetection& b) { return a.score > b.score; });

    std::vector<char> matched(class_gts.size(), 0);
    const double npos = static_cast<double>(class_gts.size());
    PRCurve curve;
    int tp = 0, fp = 0;
    for (const EvalDetection& d : detections) {
        int best = -1;
        double best_v = -1;
        for (size_t j = 0; j < class_gts.size(); ++j) {
            if (class_gts[j]->image != d.image) continue;
            const double v = iou(d.box, class_gts[j]->box);
            if (v >= iou_thresh && v > best_v) {
                best_v = v;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && !matched[best]) {
            matched[best] = 1;
            ++tp;
        } else {
            ++fp;
        }
        curve.points.push_back({tp / npos, static_cast<double>(tp) / (tp + fp)});
    }

    if (eleven_point) {
        double sum = 0;
        for (int i = 0; i <= 10; ++i) {
            const double r = i / 10.0;
            double pmax = 0;
            for (const PRPoint& p : curve.points)
                if (p.recall >= r) pmax = std::max(pmax, p.precision);
            sum += pmax;
        }
        curve.ap = sum / 11.0;
    } else {
        // all-point: area under the monotonically decreasing precision envelope
        double ap = 0, prev_r = 0;
        for (size_t i = 0; i < curve.points.size(); ++i) {
            double pmax = 0;
            for (size_t j = i; j < curve.points.size(); ++j)
                pmax = std::max(pmax, curve.points[j].precision);
            ap += (curve.points[i].recall - prev_r) * pmax;
            prev_r = curve.points[i].recall;
        }
        curve.ap = ap;
    }
    return curve;
}

std::map<int, double> per_class_ap(const std::vector<EvalDetection>& detections,
                                   const std::vector<EvalGt>& gts, int num_classes,
                                   double iou_thresh, bool eleven_point) {
    std::map<int, double> out;
    for (int c = 1; c <= num_classes; ++c)
        if (auto curve = ap_for_class(detections, gts, c, iou_thresh, eleven_point))
            out[c] = curve->ap;
    return out;
}

double mean_ap(const std::map<int, double>& aps) {
    if (aps.empty()) return 0.0;
    double sum = 0;
    for (const auto& [c, ap] : aps) sum += ap;
    return sum / static_cast<double>(aps.size());
}

double coco_style_ap(const std::vector<EvalDetection>& detections,
                     const std::vector<EvalGt>& gts, int num_classes, bool eleven_point) {
    double sum = 0;
    int count = 0;
    for (int i = 0; i < 10; ++i) {
        const double thresh = 0.5 + 0.05 * i;
        sum += mean_ap(per_class_ap(detections, gts, num_classes, thresh, eleven_point));
        ++count;
    }
    return sum / count;
}

double recall_at(const std::vector<std::vector<Detection>>& proposals_per_image,
                 const std::vector<std::vector<Box>>& gts_per_image, int n,
                 double iou_thresh) {
    if (proposals_per_image.size() != gts_per_image.size())
        throw DimensionError("recall_at: image count mismatch");
    int total = 0, covered = 0;
    for (size_t img = 0; img < gts_per_image.size(); ++img) {
        const auto& props = proposals_per_image[img];
        const int top = std::min<int>(n, static_cast<int>(props.size()));
        for (const Box& gt : gts_per_image[img]) {
            ++total;
            for (int i = 0; i < top; ++i)
                if (iou(props[i].box, gt) >= iou_thresh) {
                    ++covered;
                    break;
                }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / total;
}

}  // namespace ron
