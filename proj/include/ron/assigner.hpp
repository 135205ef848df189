#pragma once

#include <random>
#include <vector>

#include "ron/anchors.hpp"

namespace ron {

struct GtObject {
    Box box;
    int cls = 0;  // 1..K
};

enum class AnchorLabel : unsigned char { Negative, Positive, Ignore };

// Per-anchor supervision from the two-step matching rule.
struct Assignment {
    std::vector<AnchorLabel> labels;
    std::vector<int> gt_of;                        // gt index for positives, -1 otherwise
    std::vector<std::array<double, 4>> targets;    // encoded offsets for positives
    std::vector<int> class_of;                     // class id for positives, 0 otherwise
    int num_positive = 0;
};

// Step (i): each gt's argmax-IoU anchor is forced positive (anchor-index
// ties to the lower index; an anchor claimed by several gts goes to the
// higher IoU, then the lower gt index). Step (ii): anchors with IoU > 0.5
// go positive to their argmax gt. Max-IoU < 0.3 is negative, the band in
// between is ignore. Empty gts mean all negative.
Assignment match(const AnchorSet& anchors, const std::vector<GtObject>& gts);

// mask[i] = (p1[i] >= o_p). Positives are re-included later at sampling.
std::vector<char> gate(const std::vector<double>& obj_p1, double o_p);

struct SampleSelection {
    std::vector<int> obj_pos, obj_neg;  // objectness branch
    std::vector<int> det_pos, det_neg;  // detection branch (gate-restricted negatives)
};

// All positives plus uniformly sampled negatives at a 1:3 cap per branch.
// Detection-branch negatives must pass the gate; positives bypass it so the
// classifier always sees every positive.
SampleSelection sample(const Assignment& assignment, const std::vector<char>& gate_mask,
                       std::mt19937_64& rng);

}  // namespace ron
