#pragma once

#include "ron/anchors.hpp"
#include "ron/data.hpp"
#include "ron/network.hpp"

namespace ron {

struct Detection {
    int class_id = 0;  // 1..K; 0 for class-agnostic proposals
    double score = 0;
    Box box;
};

struct DetectOptions {
    double conf_thresh = 0.01;
    double nms_thresh = 0.45;
    int top_k = 200;
    bool use_objectness = true;                        // false: score = p^cls|obj alone
    std::array<bool, kNumScales> scale_enabled{true, true, true, true};
    bool clip = true;
};

// Greedy descending-score suppression; score ties keep the lower original
// index. Returns kept indices in pick order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh);

// Full pipeline: forward, per-anchor class scores (objectness times
// class-conditional), decode, per-class NMS, global top-k. The objectness
// gate at test time is realized purely through the score product; heads are
// evaluated densely.
std::vector<Detection> detect(const Model<float>& model, const std::vector<uint8_t>& pixels,
                              int size, const DetectOptions& opt = {},
                              const AnchorSet* anchors = nullptr);

// Class-agnostic region proposals ranked by objectness alone, after
// regression decoding and NMS at 0.7. Output ordered by descending score.
std::vector<Detection> proposals(const Model<float>& model, const std::vector<uint8_t>& pixels,
                                 int size, int n, const AnchorSet* anchors = nullptr);

}  // namespace ron
