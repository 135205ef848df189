#pragma once

#include <vector>

#include "ron/box.hpp"

namespace ron {

inline constexpr int kNumScales = 4;
inline constexpr int kAnchorsPerLoc = 10;  // 2 scales x 5 aspect ratios
inline constexpr int kStrides[kNumScales] = {8, 16, 32, 64};
inline constexpr double kAspectRatios[5] = {1.0 / 3.0, 0.5, 1.0, 2.0, 3.0};

// The full default-box grid for one input size. Flat index is
// offset[k] + (y*W_k + x)*A + a with a = scale_idx*5 + ratio_idx.
struct AnchorSet {
    int input_size = 0;
    double s_min = 0;
    std::vector<Box> boxes;
    std::vector<int> scale_of;           // scale k in [0,4) per anchor
    int map_w[kNumScales] = {0, 0, 0, 0};
    int map_h[kNumScales] = {0, 0, 0, 0};
    int offset[kNumScales] = {0, 0, 0, 0};

    int size() const { return static_cast<int>(boxes.size()); }

    int flat_index(int k, int y, int x, int a) const {
        return offset[k] + (y * map_w[k] + x) * kAnchorsPerLoc + a;
    }

    // Per-scale box sizes of the grid: {(2k+1)*s_min, (2k+2)*s_min} for
    // zero-based k.
    std::array<double, 2> scale_sizes(int k) const {
        return {(2 * (k + 1) - 1) * s_min, 2.0 * (k + 1) * s_min};
    }
};

AnchorSet generate_anchors(int input_size, double s_min);

inline AnchorSet generate_anchors(int input_size) {
    return generate_anchors(input_size, input_size / 10.0);
}

}  // namespace ron
