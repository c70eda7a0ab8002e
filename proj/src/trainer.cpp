#include "celd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace celd::trainer {

void validate(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (cfg.max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (cfg.early_stop_patience < 1)
        throw std::invalid_argument("TrainConfig: early_stop_patience must be >= 1");
    if (cfg.early_stop_patience > cfg.max_epochs)
        throw std::invalid_argument("TrainConfig: patience must not exceed max_epochs");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (cfg.source_subsample <= 0.0 || cfg.source_subsample > 1.0)
        throw std::invalid_argument("TrainConfig: source_subsample must lie in (0,1]");
}

void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write history: " + path.string());
    f << "epoch,train_loss,val_loss,val_acc\n";
    char buf[128];
    for (const auto& e : history.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss,
                      e.val_acc);
        f << buf;
    }
}

double cross_entropy(const Matrix& probabilities, const Matrix& onehot) {
    if (probabilities.rows != onehot.rows || probabilities.cols != onehot.cols)
        throw std::invalid_argument("cross_entropy: shape mismatch");
    if (probabilities.rows == 0) throw std::invalid_argument("cross_entropy: empty batch");
    double total = 0.0;
    for (int i = 0; i < probabilities.rows; ++i) {
        double prob_sum = 0.0;
        int ones = 0;
        double row_loss = 0.0;
        for (int j = 0; j < probabilities.cols; ++j) {
            const double p = probabilities.at(i, j);
            const double y = onehot.at(i, j);
            prob_sum += p;
            if (y == 1.0)
                ++ones;
            else if (y != 0.0)
                throw std::invalid_argument("cross_entropy: row " + std::to_string(i) +
                                            " is not one-hot");
            if (y == 1.0) row_loss -= std::log(std::max(p, 1e-12));
        }
        if (ones != 1)
            throw std::invalid_argument("cross_entropy: row " + std::to_string(i) + " is not one-hot");
        if (std::abs(prob_sum - 1.0) > 1e-6)
            throw std::invalid_argument("cross_entropy: probability row " + std::to_string(i) +
                                        " does not sum to 1");
        total += row_loss;
    }
    return total / probabilities.rows;
}

AdamW::AdamW(std::vector<nn::Param*> params, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const nn::Param* p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        nn::Param& p = *params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        const double decay = p.decay ? lr_ * wd_ : 0.0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            m[i] = b1_ * m[i] + (1.0 - b1_) * g;
            v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_) + decay * p.data[i];
        }
    }
}

Tensor4 stack_batch(const std::vector<const ImageTensor*>& images) {
    if (images.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const int side = images.front()->side;
    Tensor4 out(static_cast<int>(images.size()), 3, side, side);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageTensor& img = *images[i];
        if (img.side != side) throw std::invalid_argument("stack_batch: mixed image sides");
        double* dst = out.sample(static_cast<int>(i));
        for (std::size_t j = 0; j < img.data.size(); ++j) dst[j] = img.data[j];
    }
    return out;
}

namespace {

struct LoadedSet {
    std::vector<ImageTensor> images;
    std::vector<int> targets;
};

LoadedSet preload(const std::vector<ImageRecord>& records, int side, const LabelSpace& space) {
    LoadedSet out;
    out.images.reserve(records.size());
    out.targets.reserve(records.size());
    for (const auto& r : records) {
        const int t = space.index_of(r.label);
        if (t < 0)
            throw std::invalid_argument("train: label '" + r.label +
                                        "' is outside the model's label space");
        out.images.push_back(datahub::load_image(r, side).image);
        out.targets.push_back(t);
    }
    return out;
}

struct EvalStats {
    double loss = 0.0;
    double acc = 0.0;
};

EvalStats evaluate_set(const nnmodel::Classifier& model, const LoadedSet& set,
                       const std::vector<double>& class_weights) {
    EvalStats st;
    const std::size_t n = set.images.size();
    std::size_t correct = 0;
    double loss_sum = 0.0, wsum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += 32) {
        const std::size_t end = std::min(n, begin + 32);
        std::vector<const ImageTensor*> ptrs;
        for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&set.images[i]);
        const Matrix logits = model.forward_logits(stack_batch(ptrs));
        const Matrix probs = nn::softmax(logits);
        for (std::size_t i = begin; i < end; ++i) {
            const int row = static_cast<int>(i - begin);
            const int t = set.targets[i];
            const double w = class_weights.empty() ? 1.0 : class_weights.at(t);
            loss_sum += -w * std::log(std::max(probs.at(row, t), 1e-12));
            wsum += w;
            const double* lr = logits.row(row);
            const int pred = static_cast<int>(std::max_element(lr, lr + logits.cols) - lr);
            if (pred == t) ++correct;
        }
    }
    st.loss = loss_sum / wsum;
    st.acc = n == 0 ? 0.0 : static_cast<double>(correct) / n;
    return st;
}

struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
};

Snapshot take_snapshot(nnmodel::Classifier& model) {
    Snapshot s;
    for (nn::Param* p : model.params()) s.params.push_back(p->data);
    for (nn::Buffer* b : model.buffers()) s.buffers.push_back(b->data);
    return s;
}

void restore_snapshot(nnmodel::Classifier& model, const Snapshot& s) {
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->data = s.params[i];
    auto buffers = model.buffers();
    for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i]->data = s.buffers[i];
}

}  // namespace

TrainResult train(nnmodel::Classifier model, const std::vector<ImageRecord>& train_records,
                  const std::vector<ImageRecord>& val_records, const TrainConfig& cfg) {
    validate(cfg);
    if (train_records.empty()) throw std::invalid_argument("train: empty training set");
    if (val_records.empty()) throw std::invalid_argument("train: empty validation set");
    if (!cfg.class_weights.empty() &&
        cfg.class_weights.size() != static_cast<std::size_t>(model.config().num_classes))
        throw std::invalid_argument("train: class_weights size must match num_classes");

    const int side = model.config().input_side;
    const LabelSpace& space = model.labelspace();
    const LoadedSet train_set = preload(train_records, side, space);
    const LoadedSet val_set = preload(val_records, side, space);

    AdamW opt(model.params(), cfg.learning_rate, cfg.weight_decay);
    std::mt19937_64 rng(cfg.seed);

    TrainHistory history;
    double best_loss = std::numeric_limits<double>::infinity();
    Snapshot best;
    int best_epoch = 0;

    std::vector<std::size_t> order(train_set.images.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<const ImageTensor*> ptrs;
            std::vector<int> targets;
            for (std::size_t i = begin; i < end; ++i) {
                ptrs.push_back(&train_set.images[order[i]]);
                targets.push_back(train_set.targets[order[i]]);
            }
            const Tensor4 batch = stack_batch(ptrs);
            model.zero_grad();
            nnmodel::Classifier::Trace trace;
            const Matrix logits = model.forward_train(batch, trace);
            Matrix dlogits;
            const double loss = nn::softmax_xent(logits, targets, cfg.class_weights, dlogits);
            model.backward(batch, trace, dlogits);
            opt.step();
            loss_sum += loss * static_cast<double>(end - begin);
        }
        const double train_loss = loss_sum / static_cast<double>(order.size());
        const EvalStats val = evaluate_set(model, val_set, cfg.class_weights);
        history.epochs.push_back({epoch, train_loss, val.loss, val.acc});
        history.stopped_epoch = epoch;

        if (val.loss < best_loss) {
            best_loss = val.loss;
            best_epoch = epoch;
            best = take_snapshot(model);
        }
        if (epoch - best_epoch >= cfg.early_stop_patience) break;
    }

    history.best_epoch = best_epoch;
    restore_snapshot(model, best);
    nnmodel::TrainMeta meta{history.stopped_epoch, best_loss, cfg.seed};
    return {nnmodel::make_checkpoint(model, meta), std::move(history)};
}

std::vector<ImageRecord> subsample_source_classes(const std::vector<ImageRecord>& records,
                                                  const LabelSpace& source_space, double fraction,
                                                  std::uint64_t seed) {
    if (fraction >= 1.0) return records;
    std::vector<std::size_t> source_idx;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (source_space.contains(records[i].label)) source_idx.push_back(i);
    std::mt19937_64 rng(seed ^ 0x5eed5eedull);
    std::shuffle(source_idx.begin(), source_idx.end(), rng);
    const std::size_t keep =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(source_idx.size())));
    std::vector<bool> drop(records.size(), false);
    for (std::size_t k = keep; k < source_idx.size(); ++k) drop[source_idx[k]] = true;
    std::vector<ImageRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (!drop[i]) out.push_back(records[i]);
    return out;
}

CeldResult run_celd(const datahub::SplitManifest& source_split,
                    const datahub::SplitManifest& target_split, const LabelSpace& source_space,
                    const LabelSpace& target_space, nnmodel::ClassifierConfig arch,
                    const TrainConfig& cfg_source, const TrainConfig& cfg_target) {
    if (!source_space.is_prefix_of(target_space))
        throw std::invalid_argument("run_celd: source space is not a prefix of the target space");
    if (!(source_split == datahub::restrict_to_source(target_split, source_space)))
        throw std::invalid_argument(
            "run_celd: source split is not the source-class restriction of the target split");

    CeldResult result;

    arch.num_classes = static_cast<int>(source_space.size());
    nnmodel::Classifier c_s(arch, source_space);
    TrainResult stage1 = train(std::move(c_s), source_split.train, source_split.val, cfg_source);
    result.source = std::move(stage1.checkpoint);
    result.source_history = std::move(stage1.history);

    nnmodel::Classifier c_t = nnmodel::extend_head(result.source, target_space, cfg_target.seed);
    std::vector<ImageRecord> stage2_train = subsample_source_classes(
        target_split.train, source_space, cfg_target.source_subsample, cfg_target.seed);
    TrainResult stage2 = train(std::move(c_t), stage2_train, target_split.val, cfg_target);
    result.target = std::move(stage2.checkpoint);
    result.target_history = std::move(stage2.history);
    return result;
}

}  // namespace celd::trainer
