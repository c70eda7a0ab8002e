#include "celd/nnmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

namespace celd::nnmodel {

using nlohmann::json;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr char kCkptMagic[8] = {'C', 'E', 'L', 'D', 'C', 'K', 'P', '1'};

void validate_config(const ClassifierConfig& cfg) {
    if (cfg.num_classes < 2) throw std::invalid_argument("ClassifierConfig: num_classes must be >= 2");
    if (cfg.block_layout.empty()) throw std::invalid_argument("ClassifierConfig: block_layout is empty");
    if (cfg.growth_rate < 1) throw std::invalid_argument("ClassifierConfig: growth_rate must be >= 1");
    for (int L : cfg.block_layout)
        if (L < 1) throw std::invalid_argument("ClassifierConfig: block sizes must be >= 1");
    // Walk the spatial schedule so bad input sides fail at build, not mid-forward.
    int side = nn::conv_out_dim(cfg.input_side, 7, 2, 3);
    if (side < 1) throw std::invalid_argument("ClassifierConfig: input_side too small for the stem");
    side = nn::conv_out_dim(side, 3, 2, 1);
    for (std::size_t b = 0; b + 1 < cfg.block_layout.size(); ++b) {
        if (side < 2)
            throw std::invalid_argument("ClassifierConfig: input_side too small for transition pooling");
        side /= 2;
    }
    if (side < 1) throw std::invalid_argument("ClassifierConfig: input_side too small");
}

nn::Param make_param(std::string name, std::vector<int> shape, bool decay) {
    nn::Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    p.data.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.decay = decay;
    return p;
}

nn::Buffer make_buffer(std::string name, int ch, double fill) {
    nn::Buffer b;
    b.name = std::move(name);
    b.data.assign(ch, fill);
    return b;
}

Tensor4 slice_channels(const Tensor4& t, int begin, int count) {
    Tensor4 out(t.n, count, t.h, t.w);
    for (int i = 0; i < t.n; ++i) {
        std::memcpy(out.sample(i), t.sample(i) + begin * t.plane(),
                    sizeof(double) * count * t.plane());
    }
    return out;
}

void copy_into_channels(Tensor4& dst, int begin, const Tensor4& src) {
    for (int i = 0; i < src.n; ++i) {
        std::memcpy(dst.sample(i) + begin * dst.plane(), src.sample(i),
                    sizeof(double) * src.c * src.plane());
    }
}

json config_to_json(const ClassifierConfig& c) {
    return json{{"input_side", c.input_side},
                {"growth_rate", c.growth_rate},
                {"block_layout", c.block_layout},
                {"num_classes", c.num_classes},
                {"init_seed", c.init_seed}};
}

ClassifierConfig config_from_json(const json& j) {
    ClassifierConfig c;
    c.input_side = j.at("input_side").get<int>();
    c.growth_rate = j.at("growth_rate").get<int>();
    c.block_layout = j.at("block_layout").get<std::vector<int>>();
    c.num_classes = j.at("num_classes").get<int>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

}  // namespace

bool operator==(const ClassifierConfig& a, const ClassifierConfig& b) {
    return a.input_side == b.input_side && a.growth_rate == b.growth_rate &&
           a.block_layout == b.block_layout && a.num_classes == b.num_classes &&
           a.init_seed == b.init_seed;
}

StagePlan plan_stages(const ClassifierConfig& cfg) {
    StagePlan p;
    p.stem_channels = 2 * cfg.growth_rate;
    int ch = p.stem_channels;
    for (std::size_t b = 0; b < cfg.block_layout.size(); ++b) {
        p.block_in.push_back(ch);
        ch += cfg.block_layout[b] * cfg.growth_rate;
        p.block_out.push_back(ch);
        if (b + 1 < cfg.block_layout.size()) {
            ch /= 2;  // compression factor 0.5
            p.trans_out.push_back(ch);
        }
    }
    p.feature_width = p.block_out.back();
    return p;
}

int count_weighted_layers(const ClassifierConfig& cfg) {
    int n = 1;  // stem conv
    for (int L : cfg.block_layout) n += 2 * L;
    n += static_cast<int>(cfg.block_layout.size()) - 1;  // transition convs
    n += 1;                                              // head
    return n;
}

Classifier::Classifier(const ClassifierConfig& cfg, LabelSpace labels)
    : cfg_(cfg), labels_(std::move(labels)) {
    validate_config(cfg_);
    if (static_cast<int>(labels_.size()) != cfg_.num_classes)
        throw std::invalid_argument("Classifier: label space size does not match num_classes");
    plan_ = plan_stages(cfg_);
    const int g = cfg_.growth_rate;
    const int mid = 4 * g;

    stem_conv_w_ = make_param("stem.conv.w", {plan_.stem_channels, 3, 7, 7}, true);
    stem_bn_gamma_ = make_param("stem.bn.gamma", {plan_.stem_channels}, false);
    stem_bn_beta_ = make_param("stem.bn.beta", {plan_.stem_channels}, false);
    stem_bn_rmean_ = make_buffer("stem.bn.rmean", plan_.stem_channels, 0.0);
    stem_bn_rvar_ = make_buffer("stem.bn.rvar", plan_.stem_channels, 1.0);

    blocks_.resize(cfg_.block_layout.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        blocks_[b].resize(cfg_.block_layout[b]);
        for (int l = 0; l < cfg_.block_layout[b]; ++l) {
            DenseLayer& dl = blocks_[b][l];
            dl.in_ch = plan_.block_in[b] + l * g;
            dl.mid_ch = mid;
            std::string base = "b" + std::to_string(b) + ".l" + std::to_string(l) + ".";
            dl.bn1_gamma = make_param(base + "bn1.gamma", {dl.in_ch}, false);
            dl.bn1_beta = make_param(base + "bn1.beta", {dl.in_ch}, false);
            dl.bn1_rmean = make_buffer(base + "bn1.rmean", dl.in_ch, 0.0);
            dl.bn1_rvar = make_buffer(base + "bn1.rvar", dl.in_ch, 1.0);
            dl.conv1_w = make_param(base + "conv1.w", {mid, dl.in_ch, 1, 1}, true);
            dl.bn2_gamma = make_param(base + "bn2.gamma", {mid}, false);
            dl.bn2_beta = make_param(base + "bn2.beta", {mid}, false);
            dl.bn2_rmean = make_buffer(base + "bn2.rmean", mid, 0.0);
            dl.bn2_rvar = make_buffer(base + "bn2.rvar", mid, 1.0);
            dl.conv2_w = make_param(base + "conv2.w", {g, mid, 3, 3}, true);
        }
    }

    transitions_.resize(cfg_.block_layout.size() - 1);
    for (std::size_t t = 0; t < transitions_.size(); ++t) {
        Transition& tr = transitions_[t];
        tr.in_ch = plan_.block_out[t];
        tr.out_ch = plan_.trans_out[t];
        std::string base = "t" + std::to_string(t) + ".";
        tr.bn_gamma = make_param(base + "bn.gamma", {tr.in_ch}, false);
        tr.bn_beta = make_param(base + "bn.beta", {tr.in_ch}, false);
        tr.bn_rmean = make_buffer(base + "bn.rmean", tr.in_ch, 0.0);
        tr.bn_rvar = make_buffer(base + "bn.rvar", tr.in_ch, 1.0);
        tr.conv_w = make_param(base + "conv.w", {tr.out_ch, tr.in_ch, 1, 1}, true);
    }

    final_bn_gamma_ = make_param("final_bn.gamma", {plan_.feature_width}, false);
    final_bn_beta_ = make_param("final_bn.beta", {plan_.feature_width}, false);
    final_bn_rmean_ = make_buffer("final_bn.rmean", plan_.feature_width, 0.0);
    final_bn_rvar_ = make_buffer("final_bn.rvar", plan_.feature_width, 1.0);
    head_w_ = make_param("head.w", {cfg_.num_classes, plan_.feature_width}, true);
    head_b_ = make_param("head.b", {cfg_.num_classes}, false);

    init_params();
}

void Classifier::init_params() {
    // Deterministic draw order: the canonical params() order. Convolutions get
    // fan-in-scaled normals, the head a 1/sqrt(F) normal, norms (1, 0), biases 0.
    std::mt19937_64 rng(cfg_.init_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (nn::Param* p : params()) {
        if (p->name.ends_with("conv.w") || p->name.ends_with("conv1.w") ||
            p->name.ends_with("conv2.w")) {
            const int fan_in = p->shape[1] * p->shape[2] * p->shape[3];
            const double std = std::sqrt(2.0 / fan_in);
            for (double& v : p->data) v = normal(rng) * std;
        } else if (p->name == "head.w") {
            const double std = std::sqrt(1.0 / p->shape[1]);
            for (double& v : p->data) v = normal(rng) * std;
        } else if (p->name.ends_with("gamma")) {
            std::fill(p->data.begin(), p->data.end(), 1.0);
        } else {
            std::fill(p->data.begin(), p->data.end(), 0.0);
        }
    }
}

std::vector<nn::Param*> Classifier::params() {
    std::vector<nn::Param*> out;
    out.push_back(&stem_conv_w_);
    out.push_back(&stem_bn_gamma_);
    out.push_back(&stem_bn_beta_);
    for (auto& block : blocks_) {
        for (auto& dl : block) {
            out.push_back(&dl.bn1_gamma);
            out.push_back(&dl.bn1_beta);
            out.push_back(&dl.conv1_w);
            out.push_back(&dl.bn2_gamma);
            out.push_back(&dl.bn2_beta);
            out.push_back(&dl.conv2_w);
        }
    }
    for (auto& tr : transitions_) {
        out.push_back(&tr.bn_gamma);
        out.push_back(&tr.bn_beta);
        out.push_back(&tr.conv_w);
    }
    out.push_back(&final_bn_gamma_);
    out.push_back(&final_bn_beta_);
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
}

std::vector<const nn::Param*> Classifier::params() const {
    auto mut = const_cast<Classifier*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::vector<nn::Buffer*> Classifier::buffers() {
    std::vector<nn::Buffer*> out;
    out.push_back(&stem_bn_rmean_);
    out.push_back(&stem_bn_rvar_);
    for (auto& block : blocks_) {
        for (auto& dl : block) {
            out.push_back(&dl.bn1_rmean);
            out.push_back(&dl.bn1_rvar);
            out.push_back(&dl.bn2_rmean);
            out.push_back(&dl.bn2_rvar);
        }
    }
    for (auto& tr : transitions_) {
        out.push_back(&tr.bn_rmean);
        out.push_back(&tr.bn_rvar);
    }
    out.push_back(&final_bn_rmean_);
    out.push_back(&final_bn_rvar_);
    return out;
}

std::vector<const nn::Buffer*> Classifier::buffers() const {
    auto mut = const_cast<Classifier*>(this)->buffers();
    return {mut.begin(), mut.end()};
}

void Classifier::zero_grad() {
    for (nn::Param* p : params()) p->zero_grad();
}

Matrix Classifier::run(const Tensor4& batch, bool training, Trace& tr) const {
    if (batch.c != 3 || batch.h != cfg_.input_side || batch.w != cfg_.input_side)
        throw std::invalid_argument("Classifier: batch shape does not match config input_side");
    auto* self = const_cast<Classifier*>(this);  // buffers mutate in training mode only
    const int g = cfg_.growth_rate;
    const int nblocks = static_cast<int>(blocks_.size());

    Tensor4 stem_out;
    conv_forward(batch, 0, {3, plan_.stem_channels, 7, 2, 3}, stem_conv_w_, stem_out);
    nn::bn_relu_forward(stem_out, 0, plan_.stem_channels, stem_bn_gamma_, stem_bn_beta_,
                        self->stem_bn_rmean_, self->stem_bn_rvar_, training, kBnMomentum, kBnEps,
                        tr.stem_act, training ? &tr.stem_cache : nullptr);
    Tensor4 pooled;
    nn::maxpool_forward(tr.stem_act, 3, 2, 1, pooled, training ? &tr.pool_cache : nullptr);

    tr.feat.assign(nblocks, Tensor4());
    tr.blocks.assign(nblocks, BlockTrace());
    tr.trans.assign(transitions_.size(), TransTrace());

    Tensor4 incoming = std::move(pooled);
    for (int b = 0; b < nblocks; ++b) {
        Tensor4& feat = tr.feat[b];
        feat = Tensor4(batch.n, plan_.block_out[b], incoming.h, incoming.w);
        copy_into_channels(feat, 0, incoming);
        tr.blocks[b].layers.resize(blocks_[b].size());
        for (std::size_t l = 0; l < blocks_[b].size(); ++l) {
            const DenseLayer& dl = blocks_[b][l];
            LayerTrace& lt = tr.blocks[b].layers[l];
            nn::bn_relu_forward(feat, 0, dl.in_ch, dl.bn1_gamma, dl.bn1_beta,
                                const_cast<nn::Buffer&>(dl.bn1_rmean),
                                const_cast<nn::Buffer&>(dl.bn1_rvar), training, kBnMomentum, kBnEps,
                                lt.a1, training ? &lt.c1 : nullptr);
            Tensor4 z1;
            conv_forward(lt.a1, 0, {dl.in_ch, dl.mid_ch, 1, 1, 0}, dl.conv1_w, z1);
            nn::bn_relu_forward(z1, 0, dl.mid_ch, dl.bn2_gamma, dl.bn2_beta,
                                const_cast<nn::Buffer&>(dl.bn2_rmean),
                                const_cast<nn::Buffer&>(dl.bn2_rvar), training, kBnMomentum, kBnEps,
                                lt.a2, training ? &lt.c2 : nullptr);
            Tensor4 z2;
            conv_forward(lt.a2, 0, {dl.mid_ch, g, 3, 1, 1}, dl.conv2_w, z2);
            copy_into_channels(feat, dl.in_ch, z2);
            if (!training) {
                lt.a1 = Tensor4();
                lt.a2 = Tensor4();
            }
        }
        if (b + 1 < nblocks) {
            const Transition& t = transitions_[b];
            TransTrace& tt = tr.trans[b];
            nn::bn_relu_forward(feat, 0, t.in_ch, t.bn_gamma, t.bn_beta,
                                const_cast<nn::Buffer&>(t.bn_rmean),
                                const_cast<nn::Buffer&>(t.bn_rvar), training, kBnMomentum, kBnEps,
                                tt.act, training ? &tt.cache : nullptr);
            Tensor4 tc;
            conv_forward(tt.act, 0, {t.in_ch, t.out_ch, 1, 1, 0}, t.conv_w, tc);
            nn::avgpool2_forward(tc, incoming);
            if (!training) {
                tt.act = Tensor4();
                tr.feat[b] = Tensor4();
            }
        }
    }

    nn::bn_relu_forward(tr.feat.back(), 0, plan_.feature_width, final_bn_gamma_, final_bn_beta_,
                        self->final_bn_rmean_, self->final_bn_rvar_, training, kBnMomentum, kBnEps,
                        tr.final_act, training ? &tr.final_cache : nullptr);
    nn::gap_forward(tr.final_act, tr.feats);
    Matrix logits;
    nn::linear_forward(tr.feats, head_w_, head_b_, logits);
    return logits;
}

Matrix Classifier::forward_logits(const Tensor4& batch) const {
    Trace tr;
    return run(batch, false, tr);
}

Matrix Classifier::forward(const Tensor4& batch) const { return nn::softmax(forward_logits(batch)); }

std::vector<int> Classifier::predict(const Tensor4& batch) const {
    Matrix logits = forward_logits(batch);
    std::vector<int> out(logits.rows);
    for (int i = 0; i < logits.rows; ++i) {
        const double* row = logits.row(i);
        out[i] = static_cast<int>(std::max_element(row, row + logits.cols) - row);
    }
    return out;
}

Matrix Classifier::forward_train(const Tensor4& batch, Trace& trace) {
    return run(batch, true, trace);
}

void Classifier::backward(const Tensor4& batch, const Trace& tr, const Matrix& dlogits) {
    const int g = cfg_.growth_rate;
    const int nblocks = static_cast<int>(blocks_.size());

    Matrix dfeats;
    nn::linear_backward(tr.feats, head_w_, head_b_, dlogits, dfeats);
    Tensor4 dfinal(tr.final_act.n, tr.final_act.c, tr.final_act.h, tr.final_act.w);
    nn::gap_backward(dfeats, dfinal);

    std::vector<Tensor4> dfeat(nblocks);
    for (int b = 0; b < nblocks; ++b) {
        dfeat[b] = Tensor4(tr.feat[b].n, tr.feat[b].c, tr.feat[b].h, tr.feat[b].w);
    }
    nn::bn_relu_backward(tr.final_act, tr.final_cache, final_bn_gamma_, final_bn_beta_, dfinal,
                         &dfeat[nblocks - 1], 0);

    for (int b = nblocks - 1; b >= 0; --b) {
        if (b + 1 < nblocks) {
            // Gradient entering block b+1's concat prefix came through this transition.
            const Transition& t = transitions_[b];
            const TransTrace& tt = tr.trans[b];
            Tensor4 dtp = slice_channels(dfeat[b + 1], 0, t.out_ch);
            Tensor4 dtc(batch.n, t.out_ch, tt.act.h, tt.act.w);
            nn::avgpool2_backward(dtp, dtc);
            Tensor4 dact(batch.n, t.in_ch, tt.act.h, tt.act.w);
            nn::conv_backward(tt.act, 0, {t.in_ch, t.out_ch, 1, 1, 0},
                              const_cast<nn::Param&>(t.conv_w), dtc, &dact);
            nn::bn_relu_backward(tt.act, tt.cache, const_cast<nn::Param&>(t.bn_gamma),
                                 const_cast<nn::Param&>(t.bn_beta), dact, &dfeat[b], 0);
        }
        for (int l = static_cast<int>(blocks_[b].size()) - 1; l >= 0; --l) {
            const DenseLayer& dl = blocks_[b][l];
            const LayerTrace& lt = tr.blocks[b].layers[l];
            Tensor4 dz2 = slice_channels(dfeat[b], dl.in_ch, g);
            Tensor4 da2(batch.n, dl.mid_ch, lt.a2.h, lt.a2.w);
            nn::conv_backward(lt.a2, 0, {dl.mid_ch, g, 3, 1, 1}, const_cast<nn::Param&>(dl.conv2_w),
                              dz2, &da2);
            Tensor4 dz1(batch.n, dl.mid_ch, lt.a2.h, lt.a2.w);
            nn::bn_relu_backward(lt.a2, lt.c2, const_cast<nn::Param&>(dl.bn2_gamma),
                                 const_cast<nn::Param&>(dl.bn2_beta), da2, &dz1, 0);
            Tensor4 da1(batch.n, dl.in_ch, lt.a1.h, lt.a1.w);
            nn::conv_backward(lt.a1, 0, {dl.in_ch, dl.mid_ch, 1, 1, 0},
                              const_cast<nn::Param&>(dl.conv1_w), dz1, &da1);
            nn::bn_relu_backward(lt.a1, lt.c1, const_cast<nn::Param&>(dl.bn1_gamma),
                                 const_cast<nn::Param&>(dl.bn1_beta), da1, &dfeat[b], 0);
        }
    }

    Tensor4 dpool = slice_channels(dfeat[0], 0, plan_.stem_channels);
    Tensor4 dact(batch.n, plan_.stem_channels, tr.stem_act.h, tr.stem_act.w);
    nn::maxpool_backward(tr.pool_cache, dpool, dact);
    Tensor4 dconv(batch.n, plan_.stem_channels, tr.stem_act.h, tr.stem_act.w);
    nn::bn_relu_backward(tr.stem_act, tr.stem_cache, stem_bn_gamma_, stem_bn_beta_, dact, &dconv, 0);
    nn::conv_backward(batch, 0, {3, plan_.stem_channels, 7, 2, 3}, stem_conv_w_, dconv, nullptr);
}

Checkpoint make_checkpoint(const Classifier& model, const TrainMeta& meta) {
    Checkpoint ck;
    ck.config = model.config();
    ck.labels = model.labelspace();
    ck.meta = meta;
    for (const nn::Param* p : model.params()) ck.tensors.push_back({p->name, p->shape, p->data});
    for (const nn::Buffer* b : model.buffers())
        ck.tensors.push_back({b->name, {static_cast<int>(b->data.size())}, b->data});
    return ck;
}

Classifier restore(const Checkpoint& ckpt) {
    Classifier model(ckpt.config, ckpt.labels);
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
    auto fetch = [&](const std::string& name, std::size_t want) -> const std::vector<double>& {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        if (it->second->data.size() != want)
            throw std::runtime_error("checkpoint: tensor '" + name + "' has wrong size");
        return it->second->data;
    };
    for (nn::Param* p : model.params()) p->data = fetch(p->name, p->data.size());
    for (nn::Buffer* b : model.buffers()) b->data = fetch(b->name, b->data.size());
    return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
    f.write(kCkptMagic, sizeof(kCkptMagic));
    std::uint32_t count = static_cast<std::uint32_t>(ckpt.tensors.size());
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& t : ckpt.tensors) {
        std::uint32_t nlen = static_cast<std::uint32_t>(t.name.size());
        f.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
        f.write(t.name.data(), nlen);
        std::uint32_t ndim = static_cast<std::uint32_t>(t.shape.size());
        f.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
        for (int d : t.shape) {
            std::int64_t d64 = d;
            f.write(reinterpret_cast<const char*>(&d64), sizeof(d64));
        }
        std::uint64_t n = t.data.size();
        f.write(reinterpret_cast<const char*>(&n), sizeof(n));
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());

    json meta{{"format_version", 1},
              {"config", config_to_json(ckpt.config)},
              {"labelspace", ckpt.labels.classes()},
              {"meta",
               {{"epochs_run", ckpt.meta.epochs_run},
                {"best_val_loss", ckpt.meta.best_val_loss},
                {"seed", ckpt.meta.seed}}}};
    std::ofstream mf(path.string() + ".json");
    if (!mf) throw std::runtime_error("cannot write checkpoint sidecar: " + path.string() + ".json");
    mf << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint not found: " + path.string());
    auto fail = [&] { throw std::runtime_error("corrupt checkpoint: " + path.string()); };
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) fail();
    std::uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!f) fail();
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        std::uint32_t nlen = 0;
        f.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
        if (!f || nlen > 4096) fail();
        t.name.resize(nlen);
        f.read(t.name.data(), nlen);
        std::uint32_t ndim = 0;
        f.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
        if (!f || ndim > 8) fail();
        for (std::uint32_t d = 0; d < ndim; ++d) {
            std::int64_t d64 = 0;
            f.read(reinterpret_cast<char*>(&d64), sizeof(d64));
            if (!f) fail();
            t.shape.push_back(static_cast<int>(d64));
        }
        std::uint64_t n = 0;
        f.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!f || n > (1ull << 32)) fail();
        t.data.resize(n);
        f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!f) fail();
        ck.tensors.push_back(std::move(t));
    }

    std::ifstream mf(path.string() + ".json");
    if (!mf) throw std::runtime_error("checkpoint sidecar not found: " + path.string() + ".json");
    json meta;
    try {
        mf >> meta;
        ck.config = config_from_json(meta.at("config"));
        ck.labels = LabelSpace(meta.at("labelspace").get<std::vector<std::string>>());
        ck.meta.epochs_run = meta.at("meta").at("epochs_run").get<int>();
        ck.meta.best_val_loss = meta.at("meta").at("best_val_loss").get<double>();
        ck.meta.seed = meta.at("meta").at("seed").get<std::uint64_t>();
        if (meta.at("format_version").get<int>() != 1)
            throw std::runtime_error("unsupported checkpoint version");
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt checkpoint sidecar: " + std::string(e.what()));
    }
    return ck;
}

Classifier extend_head(const Checkpoint& src, const LabelSpace& target_space, std::uint64_t seed) {
    if (!src.labels.is_prefix_of(target_space))
        throw std::invalid_argument("extend_head: source label space is not a prefix of the target");
    Classifier source = restore(src);

    ClassifierConfig tcfg = src.config;
    tcfg.num_classes = static_cast<int>(target_space.size());
    Classifier target(tcfg, target_space);

    auto src_params = source.params();
    auto dst_params = target.params();
    for (std::size_t i = 0; i < dst_params.size(); ++i) {
        nn::Param* dst = dst_params[i];
        const nn::Param* from = src_params[i];
        if (dst->name == "head.w") {
            const int F = dst->shape[1];
            std::copy(from->data.begin(), from->data.end(), dst->data.begin());
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            const double std = std::sqrt(1.0 / F);
            for (std::size_t j = from->data.size(); j < dst->data.size(); ++j)
                dst->data[j] = normal(rng) * std;
        } else if (dst->name == "head.b") {
            std::copy(from->data.begin(), from->data.end(), dst->data.begin());
            std::fill(dst->data.begin() + from->data.size(), dst->data.end(), 0.0);
        } else {
            dst->data = from->data;
        }
    }
    auto src_buf = source.buffers();
    auto dst_buf = target.buffers();
    for (std::size_t i = 0; i < dst_buf.size(); ++i) dst_buf[i]->data = src_buf[i]->data;
    return target;
}

}  // namespace celd::nnmodel
