#include <random>

#include "doctest.h"
#include "ron/inference.hpp"

using namespace ron;

namespace {

// Quadratic reference: a box is kept iff no higher-ranked kept box overlaps it.
std::vector<int> nms_reference(const std::vector<Box>& boxes, const std::vector<double>& scores,
                               double thresh) {
    std::vector<int> order(boxes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<int> kept;
    for (int i : order) {
        bool ok = true;
        for (int j : kept)
            if (iou(boxes[i], boxes[j]) > thresh) {
                ok = false;
                break;
            }
        if (ok) kept.push_back(i);
    }
    return kept;
}

}  // namespace

TEST_SUITE_BEGIN("inference");

TEST_CASE("nms basics") {
    std::vector<Box> boxes{{10, 10, 8, 8}, {10, 10, 8, 8}};
    std::vector<double> scores{0.9, 0.8};
    CHECK(nms(boxes, scores, 0.45) == std::vector<int>{0});

    std::vector<Box> apart{{10, 10, 4, 4}, {50, 50, 4, 4}, {90, 90, 4, 4}};
    std::vector<double> s3{0.1, 0.9, 0.5};
    auto kept = nms(apart, s3, 0.45);
    CHECK(kept.size() == 3);
    CHECK(kept == std::vector<int>{1, 2, 0});  // pick order by score

    // score ties keep the lower original index
    std::vector<Box> tied{{10, 10, 8, 8}, {11, 10, 8, 8}};
    std::vector<double> st{0.5, 0.5};
    CHECK(nms(tied, st, 0.45) == std::vector<int>{0});
}

TEST_CASE("nms matches the quadratic oracle over 1000 seeds") {
    for (int seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> pos(0.0, 100.0), ext(5.0, 40.0), sc(0.0, 1.0);
        std::vector<Box> boxes;
        std::vector<double> scores;
        for (int i = 0; i < 100; ++i) {
            boxes.push_back(Box{pos(rng), pos(rng), ext(rng), ext(rng)});
            scores.push_back(sc(rng));
        }
        auto got = nms(boxes, scores, 0.45);
        auto ref = nms_reference(boxes, scores, 0.45);
        REQUIRE(got == ref);
        // suppression-free output
        for (size_t i = 0; i < got.size(); ++i)
            for (size_t j = i + 1; j < got.size(); ++j)
                REQUIRE(iou(boxes[got[i]], boxes[got[j]]) <= 0.45);
    }
}

TEST_CASE("detect respects thresholds and emits objectness-weighted scores") {
    ModelConfig cfg;
    cfg.input_size = 64;
    Model<float> m = build_model<float>(cfg, 11);
    std::mt19937_64 rng(1);
    std::vector<uint8_t> pixels(64 * 64 * 3);
    for (uint8_t& v : pixels) v = static_cast<uint8_t>(rng() % 256);

    DetectOptions opt;
    auto dets = detect(m, pixels, 64, opt);
    for (const Detection& d : dets) {
        CHECK(d.score >= opt.conf_thresh);
        CHECK(d.score <= 1.0);
        CHECK(d.class_id >= 1);
        CHECK(d.class_id <= cfg.num_classes);
        // clipped to image bounds
        CHECK(d.box.l() >= 0.0);
        CHECK(d.box.t() >= 0.0);
        CHECK(d.box.r() <= 64.0);
        CHECK(d.box.b() <= 64.0);
    }
    // sorted by descending score
    for (size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].score >= dets[i].score);
    CHECK(dets.size() <= static_cast<size_t>(opt.top_k));

    DetectOptions impossible = opt;
    impossible.conf_thresh = 1.01;
    CHECK(detect(m, pixels, 64, impossible).empty());

    DetectOptions one = opt;
    one.top_k = 1;
    CHECK(detect(m, pixels, 64, one).size() <= 1);
}

TEST_CASE("disabling the objectness factor changes the scoring") {
    ModelConfig cfg;
    cfg.input_size = 64;
    Model<float> m = build_model<float>(cfg, 12);
    std::mt19937_64 rng(2);
    std::vector<uint8_t> pixels(64 * 64 * 3);
    for (uint8_t& v : pixels) v = static_cast<uint8_t>(rng() % 256);

    DetectOptions with;
    DetectOptions without;
    without.use_objectness = false;
    auto a = detect(m, pixels, 64, with);
    auto b = detect(m, pixels, 64, without);
    REQUIRE(!b.empty());
    // without the p^obj product the top score can only grow (p^obj <= 1)
    if (!a.empty()) CHECK(b.front().score >= a.front().score - 1e-9);
}

TEST_CASE("detect is pure in weights, image and thresholds") {
    ModelConfig cfg;
    cfg.input_size = 64;
    Model<float> m = build_model<float>(cfg, 13);
    std::vector<uint8_t> pixels(64 * 64 * 3, 100);
    auto a = detect(m, pixels, 64);
    auto b = detect(m, pixels, 64);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].class_id == b[i].class_id);
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].box.cx == b[i].box.cx);
    }
}

TEST_CASE("detect rejects non-finite weights") {
    ModelConfig cfg;
    cfg.input_size = 64;
    Model<float> m = build_model<float>(cfg, 14);
    (*m.heads[0].obj.w.data)[0] = std::numeric_limits<float>::quiet_NaN();
    std::vector<uint8_t> pixels(64 * 64 * 3, 100);
    CHECK_THROWS_AS(detect(m, pixels, 64), NumericError);
}

TEST_CASE("proposals ordering and edge cases") {
    ModelConfig cfg;
    cfg.input_size = 64;
    Model<float> m = build_model<float>(cfg, 15);
    std::mt19937_64 rng(3);
    std::vector<uint8_t> pixels(64 * 64 * 3);
    for (uint8_t& v : pixels) v = static_cast<uint8_t>(rng() % 256);

    CHECK(proposals(m, pixels, 64, 0).empty());

    auto props = proposals(m, pixels, 64, 50);
    CHECK(props.size() <= 50);
    REQUIRE(!props.empty());
    for (size_t i = 1; i < props.size(); ++i) CHECK(props[i - 1].score >= props[i].score);
    for (const Detection& p : props) {
        CHECK(p.class_id == 0);
        CHECK(p.score >= 0.0);
        CHECK(p.score <= 1.0);
    }
}

TEST_SUITE_END();
