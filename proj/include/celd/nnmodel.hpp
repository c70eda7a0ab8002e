#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "celd/layers.hpp"
#include "celd/tensor.hpp"
#include "celd/types.hpp"

namespace celd::nnmodel {

struct ClassifierConfig {
    int input_side = 256;
    int growth_rate = 12;
    std::vector<int> block_layout = {2, 2, 2, 2};  // [6,12,24,16] is the full-scale layout
    int num_classes = 2;
    std::uint64_t init_seed = 0;
};

bool operator==(const ClassifierConfig& a, const ClassifierConfig& b);

/// Channel schedule derived from a config: entry/exit widths per dense block
/// and per transition. Within a block, channel count after k layers is
/// entry + k * growth_rate.
struct StagePlan {
    int stem_channels = 0;
    std::vector<int> block_in;
    std::vector<int> block_out;
    std::vector<int> trans_out;
    int feature_width = 0;
};

StagePlan plan_stages(const ClassifierConfig& cfg);

/// Convolutional and fully connected layers in the usual counting convention
/// (stem conv + two convs per dense layer + one conv per transition + head).
int count_weighted_layers(const ClassifierConfig& cfg);

/// Densely connected classifier: stem (7x7/2 conv, norm, 3x3/2 max pool),
/// dense blocks whose layers each see the concatenation of everything before
/// them, norm + 1x1 conv + 2x avg pool transitions, then global average
/// pooling and a linear head.
class Classifier {
public:
    Classifier(const ClassifierConfig& cfg, LabelSpace labels);

    const ClassifierConfig& config() const { return cfg_; }
    const LabelSpace& labelspace() const { return labels_; }
    const StagePlan& plan() const { return plan_; }

    /// Eval-mode pass; rows are raw class scores.
    Matrix forward_logits(const Tensor4& batch) const;
    /// Eval-mode pass; rows are softmax probabilities (sum to 1).
    Matrix forward(const Tensor4& batch) const;
    std::vector<int> predict(const Tensor4& batch) const;

    struct LayerTrace {
        Tensor4 a1;
        nn::BnCache c1;
        Tensor4 a2;
        nn::BnCache c2;
    };
    struct BlockTrace {
        std::vector<LayerTrace> layers;
    };
    struct TransTrace {
        Tensor4 act;
        nn::BnCache cache;
    };
    struct Trace {
        Tensor4 stem_act;
        nn::BnCache stem_cache;
        nn::MaxPoolCache pool_cache;
        std::vector<Tensor4> feat;
        std::vector<BlockTrace> blocks;
        std::vector<TransTrace> trans;
        Tensor4 final_act;
        nn::BnCache final_cache;
        Matrix feats;
    };

    /// Train-mode pass: batch statistics for normalization, running stats
    /// updated, intermediates cached for backward. Returns logits.
    Matrix forward_train(const Tensor4& batch, Trace& trace);

    /// Accumulates parameter gradients for d(loss)/d(logits).
    void backward(const Tensor4& batch, const Trace& trace, const Matrix& dlogits);

    void zero_grad();

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
    std::vector<nn::Buffer*> buffers();
    std::vector<const nn::Buffer*> buffers() const;

    int count_weighted_layers() const { return nnmodel::count_weighted_layers(cfg_); }

private:
    struct DenseLayer {
        nn::Param bn1_gamma, bn1_beta;
        nn::Buffer bn1_rmean, bn1_rvar;
        nn::Param conv1_w;  // 1x1 to bottleneck width
        nn::Param bn2_gamma, bn2_beta;
        nn::Buffer bn2_rmean, bn2_rvar;
        nn::Param conv2_w;  // 3x3 to growth_rate channels
        int in_ch = 0, mid_ch = 0;
    };
    struct Transition {
        nn::Param bn_gamma, bn_beta;
        nn::Buffer bn_rmean, bn_rvar;
        nn::Param conv_w;  // 1x1
        int in_ch = 0, out_ch = 0;
    };

    Matrix run(const Tensor4& batch, bool training, Trace& trace) const;
    void init_params();

    ClassifierConfig cfg_;
    LabelSpace labels_;
    StagePlan plan_;

    nn::Param stem_conv_w_;
    nn::Param stem_bn_gamma_, stem_bn_beta_;
    nn::Buffer stem_bn_rmean_, stem_bn_rvar_;
    std::vector<std::vector<DenseLayer>> blocks_;
    std::vector<Transition> transitions_;
    nn::Param final_bn_gamma_, final_bn_beta_;
    nn::Buffer final_bn_rmean_, final_bn_rvar_;
    nn::Param head_w_, head_b_;
};

struct TrainMeta {
    int epochs_run = 0;
    double best_val_loss = 0.0;
    std::uint64_t seed = 0;
};

struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

/// Serialized classifier: every parameter and running-stat buffer by name,
/// plus the config and label space it was trained under.
struct Checkpoint {
    ClassifierConfig config;
    LabelSpace labels;
    TrainMeta meta;
    std::vector<NamedTensor> tensors;
};

Checkpoint make_checkpoint(const Classifier& model, const TrainMeta& meta);
Classifier restore(const Checkpoint& ckpt);

/// Writes `path` (binary tensor container) and `path + ".json"` (metadata).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a classifier for `target_space` from a narrower checkpoint: every
/// backbone tensor and the head rows of shared classes are copied bitwise;
/// head rows for the new classes are freshly initialized from `seed`.
Classifier extend_head(const Checkpoint& src, const LabelSpace& target_space, std::uint64_t seed);

}  // namespace celd::nnmodel
