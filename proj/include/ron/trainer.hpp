#pragma once

#include <filesystem>

#include "ron/data.hpp"
#include "ron/loss.hpp"

namespace ron {

struct TrainConfig {
    int batch_size = 8;
    double base_lr = 1e-3;
    std::vector<std::pair<int, double>> lr_schedule;  // (iteration, lr) drops
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int total_iters = 2000;
    double o_p = 0.03;
    uint64_t seed = 1;
    int checkpoint_every = 500;
    std::vector<int> sizes = {128, 192};  // multi-scale training set
    bool use_objectness = true;           // false: objectness branch ablated
    ModelConfig model;

    void validate() const;
    double lr_at(int iter) const;
};

// Plain key=value config file; '#' starts a comment. Unknown keys are
// rejected.
TrainConfig parse_train_config(const std::filesystem::path& path);
void apply_override(TrainConfig& cfg, const std::string& key_value);

struct Augmented {
    std::vector<uint8_t> pixels;  // out_size x out_size RGB
    std::vector<GtObject> objects;
};

// Uniform choice among {original, horizontal flip, patch-crop}; the crop
// keeps only boxes whose center lies inside the patch, clips them, and
// rescales the patch to out_size. Falls back to the original after 50
// rejected crop positions.
Augmented augment(const Sample& sample, int out_size, std::mt19937_64& rng);

// Per-iteration input size, uniform over cfg.sizes.
int multiscale_sample(const TrainConfig& cfg, std::mt19937_64& rng);

struct TrainLogRow {
    int iter = 0;
    LossReport loss;
    double lr = 0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
};

// End-to-end joint training. Writes checkpoints and log.csv under out_dir;
// the final weights land in out_dir/weights.ronw. Deterministic per
// seed/config. A NaN loss or gradient dumps the current weights to
// out_dir/abort_dump.ronw and rethrows.
TrainResult train(Model<float>& model, const Dataset& dataset, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

}  // namespace ron
