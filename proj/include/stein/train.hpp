#pragma once

#include "stein/dataset.hpp"
#include "stein/loss.hpp"
#include "stein/metrics.hpp"
#include "stein/model.hpp"
#include "stein/optim.hpp"
#include "stein/serialize.hpp"

namespace stein::harness {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    double lr = 1e-4;
    double lr_gamma = 0.94;  // per-epoch multistep decay
    double weight_decay = 1e-5;
    uint64_t seed = 0;
    bool augment = true;
    int max_steps = 0;  // 0 = no cap
    std::string out_dir;  // empty = no checkpoints/logs on disk

    void validate() const;
};

struct TrainState {
    int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    uint64_t rng_seed = 0;
    double best_val_f1 = 0.0;

    std::string to_json() const;
    static TrainState from_json_file(const std::string& path);
};

struct TrainResult {
    TrainState state;
    std::vector<double> loss_history;  // per step
    MetricsReport final_val;
    std::string best_path, last_path, log_path;
};

/// Argmax predictions of the model on one sample (eval mode).
std::vector<uint8_t> predict_mask(model::SteinFormer& m, const BitemporalSample& s);

/// Micro-averaged metrics of the model over a sample list (eval mode).
MetricsReport evaluate_model(model::SteinFormer& m, const std::vector<BitemporalSample>& data);

/**
 * Seeded training: shuffled mini-batches, optional dihedral augmentation,
 * Adam with decoupled weight decay and per-epoch lr decay, per-epoch
 * validation, best-F1 and last checkpoints, and a CSV step log. A non-finite
 * loss aborts with a numeric error naming the step.
 */
TrainResult train_loop(model::SteinFormer& m, const model::LossConfig& loss_cfg,
                       const std::vector<BitemporalSample>& train_data,
                       const std::vector<BitemporalSample>& val_data, const TrainConfig& cfg);

/// Builds an NxCxHxW batch plus the matching label tensor.
void make_batch(const std::vector<BitemporalSample>& data, const std::vector<size_t>& indices,
                Tensor& t1, Tensor& t2, Tensor& labels);

/// Data-driven importance map for dynamic frequency assignment: mean absolute
/// p x p DCT spectrum of the training images pushed through a seeded 3x3
/// convolution and a sigmoid.
std::vector<double> importance_from_dataset(const std::vector<BitemporalSample>& data, int p,
                                            uint64_t seed);

/// Writes the prediction (0/255 gray) and, when a label is present, the
/// four-color error map next to it.
void predict_export(model::SteinFormer& m, const BitemporalSample& s,
                    const std::string& out_prefix, bool has_label);

}  // namespace stein::harness
