#pragma once

#include <optional>

#include "ron/assigner.hpp"
#include "ron/network.hpp"

namespace ron {

struct AnchorCoord {
    int k, y, x, a;
};

inline AnchorCoord anchor_coord(const AnchorSet& set, int flat) {
    int k = kNumScales - 1;
    while (k > 0 && flat < set.offset[k]) --k;
    const int rem = flat - set.offset[k];
    const int cell = rem / kAnchorsPerLoc;
    return AnchorCoord{k, cell / set.map_w[k], cell % set.map_w[k], rem % kAnchorsPerLoc};
}

struct LossReport {
    double l_obj = 0, l_loc = 0, l_cls = 0;  // normalized per-term values
    int n_obj = 0, n_loc = 0, n_cls = 0;
    double total = 0;
    bool obj_dropped = false, loc_dropped = false, cls_dropped = false;
};

template <typename T>
struct LossResult {
    Tensor<T> total;
    LossReport report;
    std::array<Tensor<T>, kNumScales> obj_probs;  // softmaxed, group 2
    std::array<Tensor<T>, kNumScales> cls_probs;  // softmaxed, group K+1
};

// Per-anchor objectness probability p1 for image n of the batch.
template <typename T>
std::vector<double> extract_obj_p1(const std::array<Tensor<T>, kNumScales>& obj_probs,
                                   const AnchorSet& anchors, int n) {
    std::vector<double> p1(anchors.size());
    for (int k = 0; k < kNumScales; ++k) {
        const Tensor<T>& t = obj_probs[k];
        for (int y = 0; y < anchors.map_h[k]; ++y)
            for (int x = 0; x < anchors.map_w[k]; ++x)
                for (int a = 0; a < kAnchorsPerLoc; ++a)
                    p1[anchors.flat_index(k, y, x, a)] = t.at(n, 2 * a + 1, y, x);
    }
    return p1;
}

// Softmax both classification-style heads; used by loss and inference.
template <typename T>
void softmax_heads(Graph<T>* g, const ScaleOutputs<T>& out, int num_classes,
                   std::array<Tensor<T>, kNumScales>& obj_probs,
                   std::array<Tensor<T>, kNumScales>& cls_probs) {
    for (int k = 0; k < kNumScales; ++k) {
        obj_probs[k] = softmax_groups(g, out.obj_logits[k], 2);
        cls_probs[k] = softmax_groups(g, out.cls_logits[k], num_classes + 1);
    }
}

// Multi-task objective:
//   L = alpha/N_obj * L_obj + beta/N_loc * L_loc + (1-alpha-beta)/N_cls * L_cls
// Terms with an empty selection are dropped (their weight is not
// redistributed). Counts aggregate over the whole batch.
template <typename T>
LossResult<T> multitask_loss(Graph<T>* g, const ScaleOutputs<T>& out,
                             const std::vector<Assignment>& assigns,
                             const std::vector<SampleSelection>& sels,
                             const AnchorSet& anchors, int num_classes,
                             double alpha = 1.0 / 3.0, double beta = 1.0 / 3.0) {
    const int batch = out.obj_logits[0].shape[0];
    if (static_cast<int>(assigns.size()) != batch || sels.size() != assigns.size())
        throw DimensionError("multitask_loss: batch size mismatch");

    LossResult<T> res;
    softmax_heads(g, out, num_classes, res.obj_probs, res.cls_probs);

    std::array<std::vector<CeTarget>, kNumScales> obj_t, cls_t;
    std::array<std::vector<LocTarget>, kNumScales> loc_t;
    int n_obj = 0, n_cls = 0, n_loc = 0;

    for (int n = 0; n < batch; ++n) {
        const Assignment& as = assigns[n];
        const SampleSelection& sel = sels[n];
        auto add_obj = [&](int flat) {
            const AnchorCoord c = anchor_coord(anchors, flat);
            const int pos = as.labels[flat] == AnchorLabel::Positive ? 1 : 0;
            obj_t[c.k].push_back({n, 2 * c.a + pos, c.y, c.x});
            ++n_obj;
        };
        auto add_cls = [&](int flat) {
            const AnchorCoord c = anchor_coord(anchors, flat);
            cls_t[c.k].push_back({n, (num_classes + 1) * c.a + as.class_of[flat], c.y, c.x});
            ++n_cls;
        };
        for (int i : sel.obj_pos) add_obj(i);
        for (int i : sel.obj_neg) add_obj(i);
        for (int i : sel.det_pos) add_cls(i);
        for (int i : sel.det_neg) add_cls(i);
        for (int i : sel.det_pos) {
            const AnchorCoord c = anchor_coord(anchors, i);
            loc_t[c.k].push_back({n, 4 * c.a, c.y, c.x, as.targets[i]});
            ++n_loc;
        }
    }

    std::vector<std::pair<T, Tensor<T>>> terms;
    double raw_obj = 0, raw_loc = 0, raw_cls = 0;
    const double gamma = 1.0 - alpha - beta;
    for (int k = 0; k < kNumScales; ++k) {
        if (!obj_t[k].empty()) {
            Tensor<T> s = cross_entropy_sum(g, res.obj_probs[k], obj_t[k]);
            raw_obj += static_cast<double>(s.scalar());
            terms.emplace_back(static_cast<T>(alpha / n_obj), s);
        }
        if (!cls_t[k].empty()) {
            Tensor<T> s = cross_entropy_sum(g, res.cls_probs[k], cls_t[k]);
            raw_cls += static_cast<double>(s.scalar());
            terms.emplace_back(static_cast<T>(gamma / n_cls), s);
        }
        if (!loc_t[k].empty()) {
            Tensor<T> s = smooth_l1_sum(g, out.loc_preds[k], loc_t[k]);
            raw_loc += static_cast<double>(s.scalar());
            terms.emplace_back(static_cast<T>(beta / n_loc), s);
        }
    }
    res.total = weighted_sum(g, terms);

    LossReport& r = res.report;
    r.n_obj = n_obj;
    r.n_loc = n_loc;
    r.n_cls = n_cls;
    r.obj_dropped = n_obj == 0;
    r.loc_dropped = n_loc == 0;
    r.cls_dropped = n_cls == 0;
    r.l_obj = n_obj ? raw_obj / n_obj : 0.0;
    r.l_loc = n_loc ? raw_loc / n_loc : 0.0;
    r.l_cls = n_cls ? raw_cls / n_cls : 0.0;
    r.total = static_cast<double>(res.total.scalar());
    if (!std::isfinite(r.total)) throw NumericError("multitask_loss: non-finite total loss");
    return res;
}

}  // namespace ron
