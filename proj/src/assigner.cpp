#include "ron/assigner.hpp"

#include <algorithm>

namespace ron {

Assignment match(const AnchorSet& anchors, const std::vector<GtObject>& gts) {
    const int na = anchors.size();
    const int ng = static_cast<int>(gts.size());

    Assignment out;
    out.labels.assign(na, AnchorLabel::Negative);
    out.gt_of.assign(na, -1);
    out.targets.assign(na, {0, 0, 0, 0});
    out.class_of.assign(na, 0);
    if (ng == 0) return out;

    std::vector<double> best_iou(na, 0.0);
    std::vector<int> best_gt(na, -1);
    std::vector<double> gt_best_iou(ng, -1.0);
    std::vector<int> gt_best_anchor(ng, -1);

    for (int i = 0; i < na; ++i) {
        for (int j = 0; j < ng; ++j) {
            const double v = iou(anchors.boxes[i], gts[j].box);
            if (v > best_iou[i]) {       // per-anchor argmax, lower gt index on ties
                best_iou[i] = v;
                best_gt[i] = j;
            }
            if (v > gt_best_iou[j]) {    // per-gt argmax, lower anchor index on ties
                gt_best_iou[j] = v;
                gt_best_anchor[j] = i;
            }
        }
    }

    // step (ii) and negatives
    for (int i = 0; i < na; ++i) {
        if (best_iou[i] > 0.5) {
            out.labels[i] = AnchorLabel::Positive;
            out.gt_of[i] = best_gt[i];
        } else if (best_iou[i] < 0.3) {
            out.labels[i] = AnchorLabel::Negative;
        } else {
            out.labels[i] = AnchorLabel::Ignore;
        }
    }

    // step (i): forced matches override; conflicts resolved by higher IoU,
    // then lower gt index
    std::vector<int> forced_gt(na, -1);
    std::vector<double> forced_iou(na, -1.0);
    for (int j = 0; j < ng; ++j) {
        const int i = gt_best_anchor[j];
        if (i < 0) continue;
        if (gt_best_iou[j] > forced_iou[i]) {
            forced_iou[i] = gt_best_iou[j];
            forced_gt[i] = j;
        }
    }
    for (int i = 0; i < na; ++i)
        if (forced_gt[i] >= 0) {
            out.labels[i] = AnchorLabel::Positive;
            out.gt_of[i] = forced_gt[i];
        }

    for (int i = 0; i < na; ++i)
        if (out.labels[i] == AnchorLabel::Positive) {
            const GtObject& gt = gts[out.gt_of[i]];
            out.targets[i] = encode_box(gt.box, anchors.boxes[i]);
            out.class_of[i] = gt.cls;
            ++out.num_positive;
        }
    return out;
}

std::vector<char> gate(const std::vector<double>& obj_p1, double o_p) {
    std::vector<char> mask(obj_p1.size());
    for (size_t i = 0; i < obj_p1.size(); ++i) mask[i] = obj_p1[i] >= o_p ? 1 : 0;
    return mask;
}

namespace {

// Uniform sample of `quota` indices from pool, without replacement.
// Partial Fisher-Yates so repeated draws from one rng stay deterministic.
std::vector<int> draw(std::vector<int> pool, size_t quota, std::mt19937_64& rng) {
    if (pool.size() <= quota) return pool;
    for (size_t i = 0; i < quota; ++i) {
        std::uniform_int_distribution<size_t> d(i, pool.size() - 1);
        std::swap(pool[i], pool[d(rng)]);
    }
    pool.resize(quota);
    return pool;
}

}  // namespace

SampleSelection sample(const Assignment& assignment, const std::vector<char>& gate_mask,
                       std::mt19937_64& rng) {
    SampleSelection sel;
    std::vector<int> neg_all, neg_gated;
    const int na = static_cast<int>(assignment.labels.size());
    for (int i = 0; i < na; ++i) {
        switch (assignment.labels[i]) {
            case AnchorLabel::Positive:
                sel.obj_pos.push_back(i);
                sel.det_pos.push_back(i);
                break;
            case AnchorLabel::Negative:
                neg_all.push_back(i);
                if (gate_mask[i]) neg_gated.push_back(i);
                break;
            case AnchorLabel::Ignore:
                break;
        }
    }
    const size_t quota = 3 * sel.obj_pos.size();
    sel.obj_neg = draw(std::move(neg_all), quota, rng);
    sel.det_neg = draw(std::move(neg_gated), quota, rng);
    std::sort(sel.obj_neg.begin(), sel.obj_neg.end());
    std::sort(sel.det_neg.begin(), sel.det_neg.end());
    return sel;
}

}  // namespace ron
