#pragma once

#include "pcdnf/dataset.hpp"
#include "pcdnf/losses.hpp"
#include "pcdnf/network.hpp"

#include <optional>

namespace pcdnf {

struct TrainConfig {
    int epochs = 10;
    double lr_start = 1e-4;
    double lr_end = 1e-8;
    double momentum = 0.9;
    int batch_size = 64;
    int centers_per_cloud = 256;  // patch centers sampled per cloud per epoch
    uint64_t seed = 0;
    int checkpoint_every = 0;     // epochs between checkpoints, 0 = final only
    std::string checkpoint_path;  // empty = no checkpoints written
    int workers = 0;              // 0 = hardware concurrency
    double patch_radius_frac = 0.05;  // r as a fraction of the noisy cloud diagonal
    int patch_rows = 512;             // M

    // When set, every step trains on exactly these (sample, center) pairs;
    // used by overfitting micro-benchmarks.
    std::vector<std::pair<int, int>> fixed_centers;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double loss = 0;
    double loss_point = 0;
    double loss_normal = 0;
    double loss_ortho = 0;
};

struct StepStats {
    double loss = 0, loss_point = 0, loss_normal = 0, loss_ortho = 0;
};

struct TrainResult {
    ParamSet params;
    std::vector<EpochStats> history;
    std::vector<StepStats> steps;
};

// Geometric interpolation between lr_start and lr_end across epochs.
double lr_schedule(int epoch, const TrainConfig& cfg);

// Momentum SGD: velocity = momentum * velocity + gradient;
//               param    -= lr * velocity.
void sgd_momentum_step(std::vector<Mat>& params_flat, std::vector<Mat>& velocity,
                       const std::vector<Mat>& grads, double lr, double momentum);

TrainResult train(const std::vector<NoisySample>& dataset, const TrainConfig& cfg,
                  const NetConfig& net_cfg, const LossConfig& loss_cfg,
                  std::optional<ParamSet> initial = std::nullopt);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace pcdnf
