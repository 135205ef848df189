#include "ron/inference.hpp"

#include <algorithm>
#include <numeric>

#include "ron/loss.hpp"

namespace ron {

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh) {
    if (boxes.size() != scores.size()) throw DimensionError("nms: size mismatch");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<int> kept;
    std::vector<char> removed(boxes.size(), 0);
    for (size_t i = 0; i < order.size(); ++i) {
        const int a = order[i];
        if (removed[a]) continue;
        kept.push_back(a);
        for (size_t j = i + 1; j < order.size(); ++j) {
            const int b = order[j];
            if (!removed[b] && iou(boxes[a], boxes[b]) > iou_thresh) removed[b] = 1;
        }
    }
    return kept;
}

namespace {

struct RawScores {
    std::array<Tensor<float>, kNumScales> obj_probs, cls_probs;
    std::array<Tensor<float>, kNumScales> loc;
    AnchorSet anchors;
};

RawScores run_forward(const Model<float>& model, const std::vector<uint8_t>& pixels, int size,
                      const AnchorSet* anchors) {
    RawScores raw;
    Tensor<float> input = image_to_tensor(pixels, size);
    ScaleOutputs<float> out = model.forward(nullptr, input);
    softmax_heads<float>(nullptr, out, model.config.num_classes, raw.obj_probs, raw.cls_probs);
    raw.loc = out.loc_preds;
    for (int k = 0; k < kNumScales; ++k)
        if (!all_finite(raw.obj_probs[k]) || !all_finite(raw.cls_probs[k]) ||
            !all_finite(raw.loc[k]))
            throw NumericError("detect: non-finite network output");
    raw.anchors = anchors ? *anchors : generate_anchors(size);
    return raw;
}

Box decoded_box(const RawScores& raw, int flat, int size, bool clip) {
    const AnchorCoord c = anchor_coord(raw.anchors, flat);
    const Tensor<float>& l = raw.loc[c.k];
    const std::array<double, 4> t{l.at(0, 4 * c.a + 0, c.y, c.x), l.at(0, 4 * c.a + 1, c.y, c.x),
                                  l.at(0, 4 * c.a + 2, c.y, c.x), l.at(0, 4 * c.a + 3, c.y, c.x)};
    Box b = decode_box(raw.anchors.boxes[flat], t);
    return clip ? clip_box(b, size) : b;
}

}  // namespace

std::vector<Detection> detect(const Model<float>& model, const std::vector<uint8_t>& pixels,
                              int size, const DetectOptions& opt, const AnchorSet* anchors) {
    const RawScores raw = run_forward(model, pixels, size, anchors);
    const int K = model.config.num_classes;
    const int na = raw.anchors.size();

    // candidate boxes per class, then per-class NMS
    std::vector<Detection> result;
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<Box> cache(na);
    std::vector<char> cached(na, 0);
    for (int cls = 1; cls <= K; ++cls) {
        boxes.clear();
        scores.clear();
        for (int i = 0; i < na; ++i) {
            const AnchorCoord c = anchor_coord(raw.anchors, i);
            if (!opt.scale_enabled[c.k]) continue;
            const double p_cls = raw.cls_probs[c.k].at(0, (K + 1) * c.a + cls, c.y, c.x);
            const double p_obj = raw.obj_probs[c.k].at(0, 2 * c.a + 1, c.y, c.x);
            const double score = opt.use_objectness ? p_obj * p_cls : p_cls;
            if (score < opt.conf_thresh) continue;
            if (!cached[i]) {
                cache[i] = decoded_box(raw, i, size, opt.clip);
                cached[i] = 1;
            }
            boxes.push_back(cache[i]);
            scores.push_back(score);
        }
        for (int idx : nms(boxes, scores, opt.nms_thresh))
            result.push_back(Detection{cls, scores[idx], boxes[idx]});
    }
    std::stable_sort(result.begin(), result.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(result.size()) > opt.top_k) result.resize(opt.top_k);
    return result;
}

std::vector<Detection> proposals(const Model<float>& model, const std::vector<uint8_t>& pixels,
                                 int size, int n, const AnchorSet* anchors) {
    if (n <= 0) return {};
    const RawScores raw = run_forward(model, pixels, size, anchors);
    const int na = raw.anchors.size();

    std::vector<Box> boxes(na);
    std::vector<double> scores(na);
    for (int i = 0; i < na; ++i) {
        const AnchorCoord c = anchor_coord(raw.anchors, i);
        scores[i] = raw.obj_probs[c.k].at(0, 2 * c.a + 1, c.y, c.x);
        boxes[i] = decoded_box(raw, i, size, true);
    }
    std::vector<Detection> result;
    for (int idx : nms(boxes, scores, 0.7)) {
        result.push_back(Detection{0, scores[idx], boxes[idx]});
        if (static_cast<int>(result.size()) == n) break;
    }
    return result;
}

}  // namespace ron
