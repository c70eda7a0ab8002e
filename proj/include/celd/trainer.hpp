#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "celd/datahub.hpp"
#include "celd/nnmodel.hpp"
#include "celd/tensor.hpp"
#include "celd/types.hpp"

namespace celd::trainer {

struct TrainConfig {
    double learning_rate = 1e-5;
    int batch_size = 8;
    int max_epochs = 100;
    int early_stop_patience = 10;
    double weight_decay = 1e-2;
    std::uint64_t seed = 0;
    std::vector<double> class_weights;  // optional per-class loss weights, empty = uniform
    double source_subsample = 1.0;      // stage-2 knob: fraction of source-class samples kept
};

void validate(const TrainConfig& cfg);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int stopped_epoch = 0;
    int best_epoch = 0;
};

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path);

/// Mean over the batch of -sum_c y_c log(p_c), with log clamped at 1e-12.
/// Probability rows must sum to 1; onehot rows must contain exactly one 1.
double cross_entropy(const Matrix& probabilities, const Matrix& onehot);

/// Decoupled-weight-decay adaptive-moment optimizer. Decay applies only to
/// parameters flagged for it (conv and head weights).
class AdamW {
public:
    AdamW(std::vector<nn::Param*> params, double lr, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);
    void step();

private:
    std::vector<nn::Param*> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
};

struct TrainResult {
    nnmodel::Checkpoint checkpoint;  // best-validation-loss parameters
    TrainHistory history;
};

/// Seeded mini-batch optimization with early stopping on validation loss.
/// Returns the best epoch's parameter snapshot, not the last.
TrainResult train(nnmodel::Classifier model, const std::vector<ImageRecord>& train_records,
                  const std::vector<ImageRecord>& val_records, const TrainConfig& cfg);

struct CeldResult {
    nnmodel::Checkpoint source;
    nnmodel::Checkpoint target;
    TrainHistory source_history;
    TrainHistory target_history;
};

/// Deterministically drops a (1 - fraction) share of the records whose label
/// lies in `source_space`; records of new classes always survive. Used by the
/// fine-tuning stage to probe retention under source-class scarcity.
std::vector<ImageRecord> subsample_source_classes(const std::vector<ImageRecord>& records,
                                                  const LabelSpace& source_space, double fraction,
                                                  std::uint64_t seed);

/// Both stages: trains the source-space classifier from scratch, transplants
/// its weights into a wider-head model, fine-tunes every parameter on the
/// full target split. `source_split` must equal
/// restrict_to_source(target_split, source_space).
CeldResult run_celd(const datahub::SplitManifest& source_split,
                    const datahub::SplitManifest& target_split, const LabelSpace& source_space,
                    const LabelSpace& target_space, nnmodel::ClassifierConfig arch,
                    const TrainConfig& cfg_source, const TrainConfig& cfg_target);

/// Batch assembly helper shared with the evaluator: stacks preloaded images
/// into an (N,3,side,side) tensor.
Tensor4 stack_batch(const std::vector<const ImageTensor*>& images);

}  // namespace celd::trainer
