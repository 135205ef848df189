#include "ron/trainer.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace ron {

void TrainConfig::validate() const {
    model.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (base_lr <= 0) throw ConfigError("base_lr must be positive");
    if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (sizes.empty()) throw ConfigError("sizes must be nonempty");
    for (int s : sizes)
        if (s <= 0 || s % 64 != 0)
            throw ConfigError("training size " + std::to_string(s) + " not divisible by 64");
    int prev = -1;
    for (const auto& [it, lr] : lr_schedule) {
        if (it <= prev) throw ConfigError("lr schedule iterations must be strictly increasing");
        if (lr <= 0) throw ConfigError("lr schedule values must be positive");
        prev = it;
    }
}

double TrainConfig::lr_at(int iter) const {
    double lr = base_lr;
    for (const auto& [it, v] : lr_schedule)
        if (iter >= it) lr = v;
    return lr;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

void set_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "input_size") cfg.model.input_size = std::stoi(value);
        else if (key == "num_classes") cfg.model.num_classes = std::stoi(value);
        else if (key == "rf_channels") cfg.model.rf_channels = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "base_lr") cfg.base_lr = std::stod(value);
        else if (key == "momentum") cfg.momentum = std::stod(value);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
        else if (key == "total_iters") cfg.total_iters = std::stoi(value);
        else if (key == "o_p") cfg.o_p = std::stod(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
        else if (key == "use_objectness") cfg.use_objectness = std::stoi(value) != 0;
        else if (key == "sizes") {
            cfg.sizes.clear();
            for (const std::string& s : split(value, ',')) cfg.sizes.push_back(std::stoi(s));
        } else if (key == "schedule") {
            // e.g. schedule=1500:1e-4,1800:1e-5
            cfg.lr_schedule.clear();
            for (const std::string& s : split(value, ',')) {
                const auto parts = split(s, ':');
                if (parts.size() != 2) throw ConfigError("bad schedule entry '" + s + "'");
                cfg.lr_schedule.emplace_back(std::stoi(parts[0]), std::stod(parts[1]));
            }
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value for config key '" + key + "': '" + value + "'");
    }
}

}  // namespace

TrainConfig parse_train_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const size_t end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value");
        set_key(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

void apply_override(TrainConfig& cfg, const std::string& key_value) {
    const size_t eq = key_value.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value");
    set_key(cfg, key_value.substr(0, eq), key_value.substr(eq + 1));
}

Augmented augment(const Sample& sample, int out_size, std::mt19937_64& rng) {
    const int S = sample.size;
    enum { kOriginal, kFlip, kCrop };
    const int choice = std::uniform_int_distribution<int>(0, 2)(rng);

    Augmented out;
    if (choice == kFlip) {
        out.pixels.resize(sample.pixels.size());
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                for (int c = 0; c < 3; ++c)
                    out.pixels[(static_cast<size_t>(y) * S + x) * 3 + c] =
                        sample.pixels[(static_cast<size_t>(y) * S + (S - 1 - x)) * 3 + c];
        for (const GtObject& obj : sample.objects) {
            GtObject f = obj;
            f.box = Box::from_corners(S - obj.box.r(), obj.box.t(), S - obj.box.l(), obj.box.b());
            out.objects.push_back(f);
        }
        if (S != out_size) {
            const double sc = static_cast<double>(out_size) / S;
            out.pixels = resize_rgb(out.pixels, S, S, out_size, out_size);
            for (GtObject& obj : out.objects)
                obj.box = Box{obj.box.cx * sc, obj.box.cy * sc, obj.box.w * sc, obj.box.h * sc};
        }
        return out;
    }

    if (choice == kCrop && !sample.objects.empty()) {
        static constexpr double kFractions[6] = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        const double frac =
            kFractions[std::uniform_int_distribution<int>(0, 5)(rng)];
        const int p = std::max(1, static_cast<int>(std::lround(frac * S)));
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int l = std::uniform_int_distribution<int>(0, S - p)(rng);
            const int t = std::uniform_int_distribution<int>(0, S - p)(rng);
            std::vector<GtObject> kept;
            for (const GtObject& obj : sample.objects) {
                if (obj.box.cx < l || obj.box.cx >= l + p || obj.box.cy < t ||
                    obj.box.cy >= t + p)
                    continue;
                const double cl = std::max(obj.box.l(), static_cast<double>(l));
                const double ct = std::max(obj.box.t(), static_cast<double>(t));
                const double cr = std::min(obj.box.r(), static_cast<double>(l + p));
                const double cb = std::min(obj.box.b(), static_cast<double>(t + p));
                Box clipped = Box::from_corners(cl - l, ct - t, cr - l, cb - t);
                if (clipped.area() < 0.25 * obj.box.area()) continue;  // degenerate sliver
                kept.push_back(GtObject{clipped, obj.cls});
            }
            if (kept.empty()) continue;
            std::vector<uint8_t> patch(static_cast<size_t>(p) * p * 3);
            for (int y = 0; y < p; ++y)
                std::copy_n(sample.pixels.data() + ((static_cast<size_t>(t) + y) * S + l) * 3,
                            static_cast<size_t>(p) * 3,
                            patch.data() + static_cast<size_t>(y) * p * 3);
            out.pixels = resize_rgb(patch, p, p, out_size, out_size);
            const double sc = static_cast<double>(out_size) / p;
            for (GtObject& obj : kept)
                obj.box = Box{obj.box.cx * sc, obj.box.cy * sc, obj.box.w * sc, obj.box.h * sc};
            out.objects = std::move(kept);
            return out;
        }
        // fall through to original
    }

    out.pixels = sample.pixels;
    out.objects = sample.objects;
    if (S != out_size) {
        const double sc = static_cast<double>(out_size) / S;
        out.pixels = resize_rgb(out.pixels, S, S, out_size, out_size);
        for (GtObject& obj : out.objects)
            obj.box = Box{obj.box.cx * sc, obj.box.cy * sc, obj.box.w * sc, obj.box.h * sc};
    }
    return out;
}

int multiscale_sample(const TrainConfig& cfg, std::mt19937_64& rng) {
    for (int s : cfg.sizes)
        if (s % 64 != 0) throw ConfigError("training size not divisible by 64");
    const size_t i =
        std::uniform_int_distribution<size_t>(0, cfg.sizes.size() - 1)(rng);
    return cfg.sizes[i];
}

TrainResult train(Model<float>& model, const Dataset& dataset, const TrainConfig& cfg,
                  const fs::path& out_dir) {
    cfg.validate();
    if (dataset.samples.empty()) throw ConfigError("train: empty dataset");
    fs::create_directories(out_dir);

    std::mt19937_64 rng(cfg.seed);
    auto params = model.params();
    std::vector<std::vector<float>> velocity(params.size());

    // anchors cached per training size
    std::map<int, AnchorSet> anchor_cache;
    for (int s : cfg.sizes) anchor_cache.emplace(s, generate_anchors(s));

    std::ofstream log_csv(out_dir / "log.csv");
    if (!log_csv) throw IoError("train: cannot write log.csv");
    log_csv << "iter,L_obj,L_loc,L_cls,total,lr\n";

    TrainResult result;
    const double alpha = cfg.use_objectness ? 1.0 / 3.0 : 0.0;
    const double beta = cfg.use_objectness ? 1.0 / 3.0 : 0.5;

    for (int iter = 0; iter < cfg.total_iters; ++iter) {
        const int size = multiscale_sample(cfg, rng);
        const AnchorSet& anchors = anchor_cache.at(size);

        std::vector<Augmented> batch;
        batch.reserve(cfg.batch_size);
        std::uniform_int_distribution<size_t> pick(0, dataset.samples.size() - 1);
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(augment(dataset.samples[pick(rng)], size, rng));

        std::vector<const std::vector<uint8_t>*> pixels;
        for (const Augmented& a : batch) pixels.push_back(&a.pixels);
        Tensor<float> input = images_to_tensor(pixels, size);

        try {
            for (Tensor<float>* p : params) p->zero_grad();
            Graph<float> graph;
            ScaleOutputs<float> out = model.forward(&graph, input);

            // gate with the current objectness outputs
            std::array<Tensor<float>, kNumScales> obj_probs, cls_probs;
            softmax_heads<float>(nullptr, out, cfg.model.num_classes, obj_probs, cls_probs);

            std::vector<Assignment> assigns;
            std::vector<SampleSelection> sels;
            for (int b = 0; b < cfg.batch_size; ++b) {
                Assignment as = match(anchors, batch[b].objects);
                std::vector<char> mask;
                if (cfg.use_objectness) {
                    mask = gate(extract_obj_p1(obj_probs, anchors, b), cfg.o_p);
                } else {
                    mask.assign(anchors.size(), 1);
                }
                SampleSelection sel = sample(as, mask, rng);
                if (!cfg.use_objectness) {
                    sel.obj_pos.clear();
                    sel.obj_neg.clear();
                }
                assigns.push_back(std::move(as));
                sels.push_back(std::move(sel));
            }

            LossResult<float> loss =
                multitask_loss(&graph, out, assigns, sels, anchors, cfg.model.num_classes,
                               alpha, beta);
            graph.backward(loss.total);

            const double lr = cfg.lr_at(iter);
            sgd_update(params, velocity, static_cast<float>(lr),
                       static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));

            const LossReport& r = loss.report;
            log_csv << iter << "," << r.l_obj << "," << r.l_loc << "," << r.l_cls << ","
                    << r.total << "," << lr << "\n";
            result.log.push_back({iter, r, lr});
        } catch (const NumericError& e) {
            save_weights(out_dir / "abort_dump.ronw", model);
            throw NumericError("iteration " + std::to_string(iter) + ": " + e.what() +
                               " (weights dumped to abort_dump.ronw)");
        }

        if ((iter + 1) % cfg.checkpoint_every == 0)
            save_weights(out_dir / ("checkpoint_" + std::to_string(iter + 1) + ".ronw"), model);
    }

    save_weights(out_dir / "weights.ronw", model);
    return result;
}

}  // namespace ron
