#pragma once

#include <filesystem>
#include <optional>

#include "f3kit/data.hpp"
#include "f3kit/loss.hpp"
#include "f3kit/model.hpp"

namespace f3kit {

// linear warm-up to max_lr, then linear decay to zero at total_steps
struct Schedule {
    double max_lr_encoder = 0.005;
    double max_lr_rest = 0.05;
    int warmup_steps = 1;
    int total_steps = 1;
};

double lr_at(const Schedule& s, int step, ParamGroup group);

// SGD with momentum; weight decay applies only to parameters flagged decay
struct SgdState {
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::vector<std::vector<double>> velocity;  // parallel to the param list
};

SgdState make_sgd_state(const std::vector<ParamRef>& params, double momentum,
                        double weight_decay);

// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
void sgd_step(std::vector<ParamRef>& params, SgdState& state, double lr_encoder, double lr_rest);

struct TrainConfig {
    int size = 96;
    int batch = 8;
    int epochs = 20;
    uint64_t seed = 1;
    double gamma = 5.0;
    int k = 9;
    int decoders = 2;
    LossMode loss = LossMode::ppa;
    bool mls = true;
    FusionMode fusion = FusionMode::cross;
    bool share_decoders = false;
    bool augment = true;
    int channels = 64;
    // the maxima target batch 32; they are scaled by batch/32 internally
    double max_lr_encoder = 0.005;
    double max_lr_rest = 0.05;
    double warmup_frac = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

struct TrainResult {
    int steps = 0;
    double final_loss = 0.0;
    double val_mae = 0.0, val_mf = 0.0;  // NaN when no validation set given
};

// Shuffled mini-batch SGD over the manifest; logs one CSV row per epoch
// (epoch, step, loss, val_mae, val_mf, lr) and writes a final checkpoint.
// Deterministic given the seed. Aborts on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& train_data,
                  const std::optional<DatasetManifest>& val_data,
                  const std::filesystem::path& checkpoint_path,
                  const std::filesystem::path& log_path);

}  // namespace f3kit
