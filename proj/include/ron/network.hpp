#pragma once

#include <random>
#include <string>
#include <vector>

#include "ron/anchors.hpp"
#include "ron/ops.hpp"

namespace ron {

struct ModelConfig {
    int input_size = 128;                          // square, divisible by 64
    int num_classes = 3;                           // K, background excluded
    std::array<int, 4> backbone_channels{16, 32, 32, 32};  // C4..C7
    int rf_channels = 32;                          // R

    double s_min() const { return input_size / 10.0; }

    void validate() const {
        if (input_size <= 0 || input_size % 64 != 0)
            throw ConfigError("input_size must be a positive multiple of 64");
        if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
        if (rf_channels < 2 || rf_channels % 2 != 0)
            throw ConfigError("rf_channels must be even and >= 2");
    }
};

// Head outputs for the four detection scales (strides 8,16,32,64).
template <typename T>
struct ScaleOutputs {
    std::array<Tensor<T>, kNumScales> obj_logits;  // [N, 2A,  Hk, Wk]
    std::array<Tensor<T>, kNumScales> cls_logits;  // [N, (K+1)A, Hk, Wk]
    std::array<Tensor<T>, kNumScales> loc_preds;   // [N, 4A, Hk, Wk]
};

template <typename T>
struct ConvLayer {
    Tensor<T> w, b;
    int stride = 1, pad = 0;

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        return conv2d(g, x, w, b, stride, pad);
    }
};

template <typename T>
struct InceptionBlock {
    ConvLayer<T> branch1;  // 1x1, R -> R/2
    ConvLayer<T> branch3;  // 3x3 pad 1, R -> R/2

    Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
        Tensor<T> a = relu(g, branch1.forward(g, x));
        Tensor<T> b = relu(g, branch3.forward(g, x));
        return concat_channels(g, a, b);
    }
};

template <typename T>
struct ScaleHead {
    ConvLayer<T> obj;          // 3x3 -> 2A
    InceptionBlock<T> incep1, incep2;
    ConvLayer<T> cls;          // 3x3 -> (K+1)A
    ConvLayer<T> loc;          // 3x3 -> 4A
};

// TinyRON: stride-8/16/32/64 backbone, reverse-connection fusion, and three
// sibling heads per scale.
template <typename T>
struct Model {
    ModelConfig config;

    // backbone: three conv+pool stages to stride 8 (C4), conv+pool to C5 and
    // C6, then a 2x2 stride-2 conv to C7
    std::array<ConvLayer<T>, 6> backbone;

    ConvLayer<T> rf7;                              // 3x3, C7 -> R
    std::array<ConvLayer<T>, 3> lateral;           // 3x3, C_n -> R, n = 4,5,6
    std::array<Tensor<T>, 3> deconv_w;             // [R, R, 2, 2], rf n+1 -> n

    std::array<ScaleHead<T>, kNumScales> heads;

    std::vector<std::pair<std::string, Tensor<T>*>> named_params();
    std::vector<Tensor<T>*> params();

    std::array<Tensor<T>, kNumScales> backbone_forward(Graph<T>* g, const Tensor<T>& images) const;
    std::array<Tensor<T>, kNumScales> reverse_connect(Graph<T>* g,
                                                      const std::array<Tensor<T>, kNumScales>& c) const;
    ScaleOutputs<T> heads_forward(Graph<T>* g, const std::array<Tensor<T>, kNumScales>& rf) const;

    ScaleOutputs<T> forward(Graph<T>* g, const Tensor<T>& images) const {
        return heads_forward(g, reverse_connect(g, backbone_forward(g, images)));
    }
};

template <typename T>
Model<T> build_model(const ModelConfig& config, uint64_t seed);

// Copy parameters between precisions (64-bit gradient-check mode).
template <typename S, typename D>
void copy_params(Model<S>& src, Model<D>& dst) {
    auto a = src.params();
    auto b = dst.params();
    for (size_t i = 0; i < a.size(); ++i) {
        for (size_t j = 0; j < a[i]->size(); ++j)
            (*b[i]->data)[j] = static_cast<D>((*a[i]->data)[j]);
    }
}

// ---- implementation ----

namespace detail {

template <typename T>
ConvLayer<T> make_conv(int cout, int cin, int k, int stride, int pad, double wstd,
                       std::mt19937_64& rng) {
    ConvLayer<T> layer;
    layer.w = Tensor<T>(cout, cin, k, k, true);
    layer.b = Tensor<T>(1, cout, 1, 1, true);
    layer.stride = stride;
    layer.pad = pad;
    std::normal_distribution<double> dist(0.0, wstd);
    for (T& v : *layer.w.data) v = static_cast<T>(dist(rng));
    return layer;
}

inline double fan_in_std(int cin, int k) { return std::sqrt(2.0 / (cin * k * k)); }

}  // namespace detail

template <typename T>
Model<T> build_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    Model<T> m;
    m.config = config;

    const auto& bc = config.backbone_channels;
    const int R = config.rf_channels;
    const int K = config.num_classes;
    const int A = kAnchorsPerLoc;

    // Feature layers use fan-in-scaled init so activations survive the
    // depth at from-scratch toy scale; the three prediction convs per scale
    // keep the N(0, 0.01^2) init.
    auto feat = [&](int cout, int cin, int k, int stride, int pad) {
        return detail::make_conv<T>(cout, cin, k, stride, pad, detail::fan_in_std(cin, k), rng);
    };
    auto pred = [&](int cout, int cin) {
        return detail::make_conv<T>(cout, cin, 3, 1, 1, 0.01, rng);
    };

    m.backbone[0] = feat(bc[0], 3, 3, 1, 1);
    m.backbone[1] = feat(bc[0], bc[0], 3, 1, 1);
    m.backbone[2] = feat(bc[0], bc[0], 3, 1, 1);   // -> C4 after third pool
    m.backbone[3] = feat(bc[1], bc[0], 3, 1, 1);   // -> C5
    m.backbone[4] = feat(bc[2], bc[1], 3, 1, 1);   // -> C6
    m.backbone[5] = feat(bc[3], bc[2], 2, 2, 0);   // 2x2 stride-2 conv -> C7

    m.rf7 = feat(R, bc[3], 3, 1, 1);
    for (int i = 0; i < 3; ++i) {
        m.lateral[i] = feat(R, bc[i], 3, 1, 1);
        m.deconv_w[i] = Tensor<T>(R, R, 2, 2, true);
        std::normal_distribution<double> dist(0.0, detail::fan_in_std(R, 2));
        for (T& v : *m.deconv_w[i].data) v = static_cast<T>(dist(rng));
    }

    for (int k = 0; k < kNumScales; ++k) {
        ScaleHead<T>& h = m.heads[k];
        h.obj = pred(2 * A, R);
        h.incep1.branch1 = feat(R / 2, R, 1, 1, 0);
        h.incep1.branch3 = feat(R / 2, R, 3, 1, 1);
        h.incep2.branch1 = feat(R / 2, R, 1, 1, 0);
        h.incep2.branch3 = feat(R / 2, R, 3, 1, 1);
        h.cls = pred((K + 1) * A, R);
        h.loc = pred(4 * A, R);
    }
    return m;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::named_params() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    auto conv = [&](const std::string& name, ConvLayer<T>& l) {
        out.emplace_back(name + ".w", &l.w);
        out.emplace_back(name + ".b", &l.b);
    };
    for (int i = 0; i < 6; ++i) conv("backbone." + std::to_string(i), backbone[i]);
    conv("rf7", rf7);
    for (int i = 0; i < 3; ++i) {
        conv("lateral." + std::to_string(i), lateral[i]);
        out.emplace_back("deconv." + std::to_string(i) + ".w", &deconv_w[i]);
    }
    for (int k = 0; k < kNumScales; ++k) {
        const std::string p = "head." + std::to_string(k);
        conv(p + ".obj", heads[k].obj);
        conv(p + ".incep1.b1", heads[k].incep1.branch1);
        conv(p + ".incep1.b3", heads[k].incep1.branch3);
        conv(p + ".incep2.b1", heads[k].incep2.branch1);
        conv(p + ".incep2.b3", heads[k].incep2.branch3);
        conv(p + ".cls", heads[k].cls);
        conv(p + ".loc", heads[k].loc);
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>*> Model<T>::params() {
    std::vector<Tensor<T>*> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

template <typename T>
std::array<Tensor<T>, kNumScales> Model<T>::backbone_forward(Graph<T>* g,
                                                             const Tensor<T>& images) const {
    // Fully convolutional: any square input divisible by 64 is accepted
    // (multi-scale training feeds sizes other than config.input_size).
    if (images.shape[1] != 3 || images.shape[2] != images.shape[3] ||
        images.shape[2] % 64 != 0 || images.shape[2] == 0)
        throw DimensionError("backbone_forward: expected [N,3,S,S] input, S a multiple of 64");
    Tensor<T> x = images;
    for (int i = 0; i < 3; ++i) x = maxpool2(g, relu(g, backbone[i].forward(g, x)));
    std::array<Tensor<T>, kNumScales> c;
    c[0] = x;                                               // C4, stride 8
    c[1] = maxpool2(g, relu(g, backbone[3].forward(g, c[0])));  // C5, stride 16
    c[2] = maxpool2(g, relu(g, backbone[4].forward(g, c[1])));  // C6, stride 32
    c[3] = relu(g, backbone[5].forward(g, c[2]));               // C7, stride 64
    return c;
}

template <typename T>
std::array<Tensor<T>, kNumScales> Model<T>::reverse_connect(
    Graph<T>* g, const std::array<Tensor<T>, kNumScales>& c) const {
    std::array<Tensor<T>, kNumScales> rf;
    rf[3] = rf7.forward(g, c[3]);
    for (int n = 2; n >= 0; --n) {
        Tensor<T> up = deconv2d(g, rf[n + 1], deconv_w[n], 2);
        Tensor<T> lat = lateral[n].forward(g, c[n]);
        if (up.shape != lat.shape)
            throw DimensionError("reverse_connect: extent mismatch after deconv");
        rf[n] = add(g, lat, up);
    }
    return rf;
}

template <typename T>
ScaleOutputs<T> Model<T>::heads_forward(Graph<T>* g,
                                        const std::array<Tensor<T>, kNumScales>& rf) const {
    ScaleOutputs<T> out;
    for (int k = 0; k < kNumScales; ++k) {
        const ScaleHead<T>& h = heads[k];
        out.obj_logits[k] = h.obj.forward(g, rf[k]);
        Tensor<T> t = h.incep2.forward(g, h.incep1.forward(g, rf[k]));
        out.cls_logits[k] = h.cls.forward(g, t);
        out.loc_preds[k] = h.loc.forward(g, rf[k]);
    }
    return out;
}

}  // namespace ron
