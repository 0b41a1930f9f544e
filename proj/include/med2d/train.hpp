#pragma once

#include <functional>
#include <string>
#include <vector>

#include "med2d/arch.hpp"
#include "med2d/data.hpp"

// Training: Adam on Dice/cross-entropy losses with seeded shuffling and
// augmentation, epoch-level metric stream, best-validation checkpointing, and
// exact resume (all randomness derives from (seed, epoch, step, sample), never
// from call order).

namespace med2d::train {

enum class LossKind { auto_select, dice, bce, dice_plus_bce, ce, dice_plus_ce };

LossKind loss_from_string(const std::string& s);
std::string to_string(LossKind k);

struct AugmentFlags {
    bool hflip = true, vflip = true, rot90 = true;

    bool any() const { return hflip || vflip || rot90; }
};

struct TrainConfig {
    int batch_size = 8;              // desk-scale default; the reference recipe uses 128
    float learning_rate = 0.0175f;
    int epochs = 100;
    float dropout_rate = 0.5f;
    LossKind loss = LossKind::auto_select;  // dice+bce binary, dice+ce multiclass
    uint64_t seed = 0;
    float adam_beta1 = 0.9f, adam_beta2 = 0.999f, adam_eps = 1e-8f;
    AugmentFlags augment;
    float clip_norm = 0.0f;            // global L2 gradient clip; 0 = off
    float early_stop_train_dsc = 0.0f; // stop once both thresholds are met; 0 = off
    float early_stop_val_dsc = 0.0f;
};

void validate_train_config(const TrainConfig& cfg);

// --- optimizer --------------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m, v;  // aligned with the weight set's item order
    int64_t t = 0;             // completed steps
};

AdamState make_adam_state(const arch::WeightSet<float>& weights);

// One Adam update with bias correction. Rejects non-finite gradients
// (gradient explosion signal) without touching weights or moments.
void adam_step(arch::WeightSet<float>& weights, const std::vector<Tensor>& grads, AdamState& st,
               const TrainConfig& cfg);

// --- augmentation ------------------------------------------------------------------

data::SegmentationSample hflip(const data::SegmentationSample& s);
data::SegmentationSample vflip(const data::SegmentationSample& s);
data::SegmentationSample rot90(const data::SegmentationSample& s, int quarter_turns);

// Applies the enabled transforms with rng-drawn parameters; image and mask get
// the identical geometric transform, labels untouched.
data::SegmentationSample augment(const data::SegmentationSample& s, const AugmentFlags& flags,
                                 Rng& rng);

// --- checkpoints -----------------------------------------------------------------------

struct Checkpoint {
    arch::ModelConfig model_cfg;
    TrainConfig train_cfg;
    arch::WeightSet<float> weights;
    AdamState adam;
    int epochs_done = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint64_t weight_hash(const arch::WeightSet<float>& weights);

// --- training loop ------------------------------------------------------------------------

struct MetricRecord {
    int epoch = 0;
    std::string split;  // "train" | "val"
    double loss = 0;
    double dsc = 0;
    double lr = 0;
    int64_t wall_ms = 0;
};

using MetricSink = std::function<void(const MetricRecord&)>;

struct TrainResult {
    Checkpoint best;  // highest validation DSC
    Checkpoint last;
    std::vector<MetricRecord> records;
    double best_val_dsc = 0;
    int epochs_run = 0;
};

// Trains from scratch, or continues from *resume (same seed schedule, so a
// resumed run reproduces the uninterrupted one bitwise). Emits one train and
// one val record per epoch.
TrainResult train(const arch::ModelConfig& model_cfg, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& cfg,
                  const MetricSink& sink = {}, const Checkpoint* resume = nullptr);

// Loss + DSC of a model over a dataset (inference mode).
struct EvalScore {
    double loss = 0;
    double dsc = 0;
};

EvalScore evaluate(const arch::Model& model, const data::Dataset& ds, LossKind loss,
                   int batch_size);

// number of output channels for a dataset label count (binary -> 1 sigmoid)
int output_channels(int dataset_num_classes);

// N x H x W x K training target from integer label masks
Tensor batch_targets(const std::vector<const data::SegmentationSample*>& batch, int channels);
Tensor batch_images(const std::vector<const data::SegmentationSample*>& batch);

}  // namespace med2d::train
