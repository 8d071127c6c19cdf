#pragma once

#include "din/frame.hpp"
#include "din/interlace.hpp"
#include "din/model.hpp"
#include "din/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace din {

struct TrainConfig {
    int patch_size = 32;
    int batch_size = 8;
    int epochs = 100;
    int steps_per_epoch = 0;      // 0: derived from the dataset (see steps_per_epoch())
    int max_steps_per_epoch = 0;  // 0: no cap
    double lr0 = 1e-4;
    int lr_decay_every = 20;
    double lr_decay_factor = 10.0;
    double lambda_start = 0.5;
    double lambda_end = 0.1;
    bool hflip = true;
    bool vflip = true;
    bool channel_shuffle = false;  // random RGB permutation per sample
    std::uint64_t seed = 0;

    void validate() const;
};

/// Weight of the intermediate-output term. Constant lambda_start for
/// epoch < E/2, then linear from lambda_start at epoch E/2 - 1 down to
/// lambda_end at epoch E - 1.
double lambda_schedule(int epoch, int total_epochs, const TrainConfig& cfg);

/// lr0 / decay_factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const TrainConfig& cfg);

template <typename T>
struct LossTerms {
    Tensor<T> total;
    double intermediate = 0;  // L1 of the intermediate output
    double final = 0;         // L1 of the final output
};

/// lambda * L1(intermediate, target) + (1 - lambda) * L1(final, target).
template <typename T>
LossTerms<T> total_loss(const Tensor<T>& intermediate, const Tensor<T>& final,
                        const Tensor<T>& target, double lambda);

struct TrainPair {
    Frame input;   // degraded interlaced frame
    Frame target;  // ground truth at the top field's instant
};

struct TrainSample {
    FieldPair input_fields;
    Frame target;
};

/// Loads a manifest in unit range. Pairs smaller than `min_size` in either
/// dimension are skipped with a warning.
std::vector<TrainPair> load_pairs(const Manifest& manifest, int min_size);

/// Random aligned crops. Row offsets are even so the crop keeps field parity.
std::vector<TrainSample> sample_patches(const std::vector<TrainPair>& pairs, int patch_size,
                                        int batch_size, std::mt19937_64& rng);

/// Left-right mirror of both fields and the target.
TrainSample hflip(const TrainSample& sample);

/// Upside-down mirror. The fields are re-derived from the flipped interlaced
/// patch, so for even heights the old bottom field becomes the top field.
TrainSample vflip(const TrainSample& sample);

/// Reorders the colour channels of both fields and the target:
/// output channel c is input channel order[c].
TrainSample permute_channels(const TrainSample& sample, std::span<const int> order);

/// Applies hflip and/or vflip with probability 1/2 each (when enabled), then
/// a uniformly drawn channel permutation when channel_shuffle is set.
TrainSample augment_flip(const TrainSample& sample, std::mt19937_64& rng, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double loss_total = 0;
    double loss_inter = 0;
    double loss_final = 0;
    double lambda = 0;
    double lr = 0;
};

struct StepRecord {
    int epoch = 0;
    std::int64_t step = 0;  // global, 1-based (equals the Adam step)
    double loss_total = 0;
    double loss_inter = 0;
    double loss_final = 0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;

    /// "epoch,loss_total,loss_inter,loss_final,lambda,lr"
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    static TrainLog read_csv(const std::filesystem::path& path);
};

struct TrainOptions {
    /// Where epoch checkpoints, final.din and train_log.csv go. Empty: nothing is written.
    std::filesystem::path out_dir;
    /// Write epoch_NNNN.din every this many epochs (the last epoch is always written).
    int checkpoint_every = 1;
    /// Continue from a checkpoint written by a previous run (needs its .state file).
    std::optional<std::filesystem::path> resume_from;
    std::function<void(const StepRecord&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    DinParams<float> params;
    TrainLog log;
};

/// Optimiser state saved next to each checkpoint as <checkpoint>.state.
struct TrainState {
    int epoch = -1;  // last completed epoch
    AdamState<float> adam;
};

void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path);

/// Steps per epoch: ceil(sum over pairs of ceil(area / patch area) / batch),
/// unless fixed in the config; then capped by max_steps_per_epoch.
int steps_per_epoch(const std::vector<TrainPair>& pairs, const TrainConfig& cfg);

/// Adam training on single-precision parameters. Deterministic in cfg.seed.
TrainResult train(const std::vector<TrainPair>& pairs, const DinConfig& model_cfg,
                  const TrainConfig& cfg, const TrainOptions& options = {});

TrainResult train(const Manifest& manifest, const DinConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace din
