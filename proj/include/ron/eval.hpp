#pragma once

#include <map>
#include <optional>

#include "ron/inference.hpp"

namespace ron {

// Detection/ground truth tagged with the image it belongs to.
struct EvalDetection {
    int image = 0;
    int class_id = 0;
    double score = 0;
    Box box;
};

struct EvalGt {
    int image = 0;
    int class_id = 0;
    Box box;
    bool difficult = false;
};

struct PRPoint {
    double recall = 0, precision = 0;
};

struct PRCurve {
    std::vector<PRPoint> points;  // recall non-decreasing
    double ap = 0;
};

// VOC-style AP for one class: greedy TP assignment (highest score first,
// each gt matched at most once, IoU >= thresh), then 11-point interpolation
// by default, all-point area when eleven_point is false. Difficult gts are
// neither matched nor counted. nullopt when the class has no gts.
std::optional<PRCurve> ap_for_class(std::vector<EvalDetection> detections,
                                    const std::vector<EvalGt>& gts, int class_id,
                                    double iou_thresh = 0.5, bool eleven_point = true);

// Per-class APs over all classes 1..K; undefined classes are excluded from
// the mean.
std::map<int, double> per_class_ap(const std::vector<EvalDetection>& detections,
                                   const std::vector<EvalGt>& gts, int num_classes,
                                   double iou_thresh = 0.5, bool eleven_point = true);

double mean_ap(const std::map<int, double>& aps);

// Mean of mAP over IoU thresholds 0.5:0.05:0.95.
double coco_style_ap(const std::vector<EvalDetection>& detections,
                     const std::vector<EvalGt>& gts, int num_classes,
                     bool eleven_point = true);

// Fraction of gts covered (IoU >= iou_thresh) by the top-N score-ordered
// proposals of their image.
double recall_at(const std::vector<std::vector<Detection>>& proposals_per_image,
                 const std::vector<std::vector<Box>>& gts_per_image, int n,
                 double iou_thresh = 0.5);

}  // namespace ron
