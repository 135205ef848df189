#include "ron/gradcheck.hpp"

#include <functional>
#include <random>

#include "ron/loss.hpp"

namespace ron {

namespace {

using TensorD = Tensor<double>;
using GraphD = Graph<double>;

void fill_uniform(TensorD& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : *t.data) v = d(rng);
}

// Fixed-probe readout: scalar = sum_i probe_i * x_i. Turns any op output
// into a scalar that depends on every coordinate.
TensorD probe_sum(GraphD* g, const TensorD& x, const std::shared_ptr<std::vector<double>>& probe) {
    TensorD y(1, 1, 1, 1);
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i) s += (*probe)[i] * (*x.data)[i];
    (*y.data)[0] = s;
    if (g && x.requires_grad) {
        y.requires_grad = true;
        y.ensure_grad();
        TensorD xc = x, yc = y;
        xc.ensure_grad();
        g->record([xc, yc, probe]() mutable {
            const double go = (*yc.grad)[0];
            for (size_t i = 0; i < xc.size(); ++i) (*xc.grad)[i] += go * (*probe)[i];
        });
    }
    return y;
}

std::shared_ptr<std::vector<double>> make_probe(size_t n, std::mt19937_64& rng) {
    auto probe = std::make_shared<std::vector<double>>(n);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : *probe) v = d(rng);
    return probe;
}

// Central finite differences (h = 1e-5) against the analytic gradient over
// randomly sampled leaf coordinates.
double check(std::vector<TensorD*> leaves, const std::function<double(GraphD*)>& forward,
             int ncoords, std::mt19937_64& rng, int& checked, double h = 1e-5) {
    for (TensorD* t : leaves) {
        t->requires_grad = true;
        t->ensure_grad();
        t->zero_grad();
    }
    {
        GraphD g;
        forward(&g);
    }

    size_t total = 0;
    for (TensorD* t : leaves) total += t->size();
    std::uniform_int_distribution<size_t> pick(0, total - 1);

    double worst = 0;
    checked = 0;
    for (int i = 0; i < ncoords; ++i) {
        size_t flat = pick(rng);
        TensorD* t = nullptr;
        for (TensorD* cand : leaves) {
            if (flat < cand->size()) {
                t = cand;
                break;
            }
            flat -= cand->size();
        }
        const double orig = (*t->data)[flat];
        (*t->data)[flat] = orig + h;
        const double fp = forward(nullptr);
        (*t->data)[flat] = orig - h;
        const double fm = forward(nullptr);
        (*t->data)[flat] = orig;

        const double numeric = (fp - fm) / (2 * h);
        const double analytic = (*t->grad)[flat];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
        ++checked;
    }
    return worst;
}

GradCheckReport report(const std::string& name, double err, int coords) {
    return {name, err, coords, err < kGradCheckTol};
}

double run_probe_loss(GraphD* g, TensorD out, const std::shared_ptr<std::vector<double>>& probe) {
    TensorD loss = probe_sum(g, out, probe);
    if (g) g->backward(loss);
    return loss.scalar();
}

GradCheckReport check_conv2d(std::mt19937_64& rng) {
    TensorD x(2, 3, 8, 8), w(4, 3, 3, 3), b(1, 4, 1, 1);
    fill_uniform(x, rng);
    fill_uniform(w, rng);
    fill_uniform(b, rng);
    auto probe = make_probe(2 * 4 * 8 * 8, rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, conv2d(g, x, w, b, 1, 1), probe); };
    int coords = 0;
    const double err = check({&x, &w, &b}, fwd, 150, rng, coords);
    return report("conv2d", err, coords);
}

GradCheckReport check_conv2d_strided(std::mt19937_64& rng) {
    TensorD x(1, 2, 8, 8), w(3, 2, 2, 2), b(1, 3, 1, 1);
    fill_uniform(x, rng);
    fill_uniform(w, rng);
    fill_uniform(b, rng);
    auto probe = make_probe(1 * 3 * 4 * 4, rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, conv2d(g, x, w, b, 2, 0), probe); };
    int coords = 0;
    const double err = check({&x, &w, &b}, fwd, 100, rng, coords);
    return report("conv2d_strided", err, coords);
}

GradCheckReport check_deconv2d(std::mt19937_64& rng) {
    TensorD x(2, 3, 4, 4), w(3, 5, 2, 2);
    fill_uniform(x, rng);
    fill_uniform(w, rng);
    auto probe = make_probe(2 * 5 * 8 * 8, rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, deconv2d(g, x, w, 2), probe); };
    int coords = 0;
    const double err = check({&x, &w}, fwd, 120, rng, coords);
    return report("deconv2d", err, coords);
}

GradCheckReport check_maxpool2(std::mt19937_64& rng) {
    TensorD x(1, 2, 6, 6);
    fill_uniform(x, rng);  // ties have measure zero under the uniform fill
    auto probe = make_probe(1 * 2 * 3 * 3, rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, maxpool2(g, x), probe); };
    int coords = 0;
    const double err = check({&x}, fwd, 100, rng, coords);
    return report("maxpool2", err, coords);
}

GradCheckReport check_relu(std::mt19937_64& rng) {
    TensorD x(1, 4, 6, 6);
    // keep values away from the kink so finite differences are clean
    std::uniform_real_distribution<double> d(0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (double& v : *x.data) v = d(rng) * (sign(rng) ? 1.0 : -1.0);
    auto probe = make_probe(x.size(), rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, relu(g, x), probe); };
    int coords = 0;
    const double err = check({&x}, fwd, 100, rng, coords);
    return report("relu", err, coords);
}

GradCheckReport check_add(std::mt19937_64& rng) {
    TensorD a(2, 3, 4, 4), b(2, 3, 4, 4);
    fill_uniform(a, rng);
    fill_uniform(b, rng);
    auto probe = make_probe(a.size(), rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, add(g, a, b), probe); };
    int coords = 0;
    const double err = check({&a, &b}, fwd, 100, rng, coords);
    return report("add", err, coords);
}

GradCheckReport check_concat(std::mt19937_64& rng) {
    TensorD a(1, 3, 4, 4), b(1, 5, 4, 4);
    fill_uniform(a, rng);
    fill_uniform(b, rng);
    auto probe = make_probe(1 * 8 * 4 * 4, rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, concat_channels(g, a, b), probe); };
    int coords = 0;
    const double err = check({&a, &b}, fwd, 100, rng, coords);
    return report("concat_channels", err, coords);
}

GradCheckReport check_softmax_groups(std::mt19937_64& rng) {
    TensorD x(1, 12, 4, 4);
    fill_uniform(x, rng, -2.0, 2.0);
    auto probe = make_probe(x.size(), rng);
    auto fwd = [&](GraphD* g) { return run_probe_loss(g, softmax_groups(g, x, 4), probe); };
    int coords = 0;
    const double err = check({&x}, fwd, 100, rng, coords);
    return report("softmax_groups", err, coords);
}

GradCheckReport check_cross_entropy(std::mt19937_64& rng) {
    // checked through the softmax so the probability simplex is preserved
    TensorD x(2, 8, 3, 3);
    fill_uniform(x, rng, -2.0, 2.0);
    std::vector<CeTarget> targets;
    std::uniform_int_distribution<int> cls(0, 3);
    for (int n = 0; n < 2; ++n)
        for (int y = 0; y < 3; ++y)
            for (int xx = 0; xx < 3; ++xx)
                for (int grp = 0; grp < 2; ++grp)
                    targets.push_back({n, 4 * grp + cls(rng), y, xx});
    auto fwd = [&](GraphD* g) {
        TensorD probs = softmax_groups(g, x, 4);
        TensorD loss = cross_entropy_sum(g, probs, targets);
        if (g) g->backward(loss);
        return loss.scalar();
    };
    int coords = 0;
    const double err = check({&x}, fwd, 120, rng, coords);
    return report("cross_entropy", err, coords);
}

GradCheckReport check_smooth_l1(std::mt19937_64& rng) {
    TensorD x(1, 8, 4, 4);
    fill_uniform(x, rng, -2.0, 2.0);
    std::vector<LocTarget> items;
    std::uniform_real_distribution<double> td(-1.0, 1.0);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx)
            for (int a = 0; a < 2; ++a) {
                LocTarget it{0, 4 * a, y, xx, {td(rng), td(rng), td(rng), td(rng)}};
                // keep every residual away from the |d| = 1 kink
                for (int j = 0; j < 4; ++j) {
                    const double d = (*x.data)[x.index(0, it.c0 + j, y, xx)] - it.t[j];
                    if (std::abs(std::abs(d) - 1.0) < 1e-3) it.t[j] += 0.01;
                }
                items.push_back(it);
            }
    auto fwd = [&](GraphD* g) {
        TensorD loss = smooth_l1_sum(g, x, items);
        if (g) g->backward(loss);
        return loss.scalar();
    };
    int coords = 0;
    const double err = check({&x}, fwd, 120, rng, coords);
    return report("smooth_l1", err, coords);
}

// Full Eq-style multi-task loss through a small end-to-end model; leaves
// are the model parameters, selections frozen at the base point.
GradCheckReport check_multitask_loss(std::mt19937_64& rng) {
    ModelConfig cfg;
    cfg.input_size = 64;
    cfg.num_classes = 2;
    Model<double> model = build_model<double>(cfg, 99);

    TensorD input(1, 3, 64, 64);
    fill_uniform(input, rng, -0.5, 0.5);

    AnchorSet anchors = generate_anchors(64);
    std::vector<GtObject> gts = {
        {Box{20, 20, 14, 14}, 1},
        {Box{44, 40, 24, 30}, 2},
    };
    std::vector<Assignment> assigns = {match(anchors, gts)};
    std::mt19937_64 sel_rng(7);
    std::vector<char> mask(anchors.size(), 1);
    std::vector<SampleSelection> sels = {sample(assigns[0], mask, sel_rng)};

    auto params = model.params();
    std::vector<TensorD*> leaves(params.begin(), params.end());

    auto fwd = [&](GraphD* g) {
        ScaleOutputs<double> out = model.forward(g, input);
        LossResult<double> res =
            multitask_loss(g, out, assigns, sels, anchors, cfg.num_classes);
        if (g) g->backward(res.total);
        return res.total.scalar();
    };
    int coords = 0;
    const double err = check(leaves, fwd, 100, rng, coords);
    return report("multitask_loss", err, coords);
}

using CheckFn = GradCheckReport (*)(std::mt19937_64&);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> ops = {
        {"conv2d", check_conv2d},
        {"conv2d_strided", check_conv2d_strided},
        {"deconv2d", check_deconv2d},
        {"maxpool2", check_maxpool2},
        {"relu", check_relu},
        {"add", check_add},
        {"concat_channels", check_concat},
        {"softmax_groups", check_softmax_groups},
        {"cross_entropy", check_cross_entropy},
        {"smooth_l1", check_smooth_l1},
        {"multitask_loss", check_multitask_loss},
    };
    return ops;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck(uint64_t seed) {
    std::vector<GradCheckReport> out;
    for (const auto& [name, fn] : registry()) {
        std::mt19937_64 rng(seed ^ std::hash<std::string>{}(name));
        out.push_back(fn(rng));
    }
    return out;
}

std::vector<GradCheckReport> run_gradcheck(const std::string& op_name, uint64_t seed) {
    std::vector<GradCheckReport> out;
    for (const auto& [name, fn] : registry())
        if (name == op_name) {
            std::mt19937_64 rng(seed ^ std::hash<std::string>{}(name));
            out.push_back(fn(rng));
        }
    return out;
}

std::vector<std::string> gradcheck_op_names() {
    std::vector<std::string> names;
    for (const auto& [name, fn] : registry()) names.push_back(name);
    return names;
}

}  // namespace ron
