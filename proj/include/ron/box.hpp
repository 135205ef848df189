#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "ron/tensor.hpp"

namespace ron {

// Axis-aligned rectangle in image pixels, stored center-size. The corner
// view (l,t,r,b) is derived; both views are bijective for w,h > 0.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;

    static Box from_corners(double l, double t, double r, double b) {
        return Box{(l + r) / 2, (t + b) / 2, r - l, b - t};
    }

    double l() const { return cx - w / 2; }
    double t() const { return cy - h / 2; }
    double r() const { return cx + w / 2; }
    double b() const { return cy + h / 2; }
    double area() const { return w * h; }
};

inline double iou(const Box& a, const Box& b) {
    const double il = std::max(a.l(), b.l());
    const double it = std::max(a.t(), b.t());
    const double ir = std::min(a.r(), b.r());
    const double ib = std::min(a.b(), b.b());
    const double iw = ir - il, ih = ib - it;
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

// Regression offsets between a ground-truth box and its anchor:
// t_x=(cx_g-cx_a)/w_a, t_y=(cy_g-cy_a)/h_a, t_w=ln(w_g/w_a), t_h=ln(h_g/h_a).
inline std::array<double, 4> encode_box(const Box& gt, const Box& anchor) {
    if (gt.w <= 0 || gt.h <= 0)
        throw DimensionError("encode_box: non-positive ground-truth extent");
    return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
            std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

inline constexpr double kDecodeExpClamp = 4.0;

inline Box decode_box(const Box& anchor, const std::array<double, 4>& t) {
    const double tw = std::clamp(t[2], -kDecodeExpClamp, kDecodeExpClamp);
    const double th = std::clamp(t[3], -kDecodeExpClamp, kDecodeExpClamp);
    return Box{anchor.cx + t[0] * anchor.w, anchor.cy + t[1] * anchor.h,
               anchor.w * std::exp(tw), anchor.h * std::exp(th)};
}

inline Box clip_box(const Box& b, double size) {
    const double l = std::clamp(b.l(), 0.0, size);
    const double t = std::clamp(b.t(), 0.0, size);
    const double r = std::clamp(b.r(), 0.0, size);
    const double bb = std::clamp(b.b(), 0.0, size);
    return Box::from_corners(l, t, r, bb);
}

}  // namespace ron
