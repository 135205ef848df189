#include "ron/anchors.hpp"

#include <cmath>

namespace ron {

AnchorSet generate_anchors(int input_size, double s_min) {
    AnchorSet set;
    set.input_size = input_size;
    set.s_min = s_min;

    int total = 0;
    for (int k = 0; k < kNumScales; ++k) {
        set.map_w[k] = input_size / kStrides[k];
        set.map_h[k] = input_size / kStrides[k];
        set.offset[k] = total;
        total += set.map_w[k] * set.map_h[k] * kAnchorsPerLoc;
    }
    set.boxes.reserve(total);
    set.scale_of.reserve(total);

    for (int k = 0; k < kNumScales; ++k) {
        const auto sizes = set.scale_sizes(k);
        const double stride = kStrides[k];
        for (int y = 0; y < set.map_h[k]; ++y)
            for (int x = 0; x < set.map_w[k]; ++x) {
                const double cx = (x + 0.5) * stride;
                const double cy = (y + 0.5) * stride;
                for (double s : sizes)
                    for (double r : kAspectRatios) {
                        const double sq = std::sqrt(r);
                        // area-preserving: w*h = s^2 for every ratio
                        set.boxes.push_back(Box{cx, cy, s * sq, s / sq});
                        set.scale_of.push_back(k);
                    }
            }
    }
    return set;
}

}  // namespace ron
