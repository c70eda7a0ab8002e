// Acceptance suite: one pass/fail line per criterion, exit code = failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "celd/datahub.hpp"
#include "celd/evaluator.hpp"
#include "celd/nnmodel.hpp"
#include "celd/perturb.hpp"
#include "celd/synthgen.hpp"
#include "celd/trainer.hpp"

using namespace celd;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int number;
    std::string description;
    bool pass = true;
    double seconds = 0.0;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("FAILED: " + what);
        }
    }
    void note(const std::string& what) { notes.push_back(what); }
};

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Metric oracle

void criterion1(Criterion& c) {
    Timer t;
    c.require(std::abs(evaluator::f1_score(0.9027, 0.8947) - 0.8987) <= 1e-4,
              "F1(0.9027, 0.8947) != 0.8987 +- 1e-4");
    c.require(std::abs(evaluator::f1_score(0.8235, 0.8358) - 0.8296) <= 1e-4,
              "F1(0.8235, 0.8358) != 0.8296 +- 1e-4");

    const LabelSpace space = LabelSpace::target();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20 + static_cast<int>(rng() % 200);
        std::vector<std::string> truth, preds;
        for (int i = 0; i < n; ++i) {
            truth.push_back(space.name(rng() % 3));
            preds.push_back(space.name(rng() % 3));
        }
        const auto cm = evaluator::confusion(preds, truth, space);
        const auto metrics = evaluator::per_class_metrics(cm);

        int correct = 0;
        for (int i = 0; i < n; ++i)
            if (preds[i] == truth[i]) ++correct;
        c.require(evaluator::accuracy(cm) == static_cast<double>(correct) / n,
                  "accuracy disagrees with recount");
        for (const auto& cls : space.classes()) {
            long long tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < n; ++i) {
                if (preds[i] == cls && truth[i] == cls) ++tp;
                if (preds[i] == cls && truth[i] != cls) ++fp;
                if (preds[i] != cls && truth[i] == cls) ++fn;
            }
            const auto& m = metrics.at(cls);
            const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
            const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
            c.require(m.precision == p && m.recall == r, "per-class metrics disagree with recount");
        }
    }
    c.seconds = t.seconds();
    c.require(c.seconds < 1.0, "runtime exceeded 1 s");
}

// ---------------------------------------------------------------------------
// 2. Transplant invariants

void criterion2(Criterion& c) {
    Timer t;
    nnmodel::ClassifierConfig arch;
    arch.input_side = 64;
    arch.growth_rate = 8;
    arch.block_layout = {2, 2, 2, 2};
    arch.num_classes = 2;
    arch.init_seed = 21;
    nnmodel::Classifier src(arch, LabelSpace::source());
    const auto ckpt = nnmodel::make_checkpoint(src, {});
    nnmodel::Classifier tgt = nnmodel::extend_head(ckpt, LabelSpace::target(), 77);

    auto sp = src.params();
    auto tp = tgt.params();
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (sp[i]->name == "head.w" || sp[i]->name == "head.b") continue;
        c.require(tp[i]->data == sp[i]->data, "backbone tensor " + sp[i]->name + " not bitwise equal");
    }
    auto sb = src.buffers();
    auto tb = tgt.buffers();
    for (std::size_t i = 0; i < sb.size(); ++i)
        c.require(tb[i]->data == sb[i]->data, "buffer " + sb[i]->name + " not bitwise equal");

    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double max_diff = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor4 x(1, 3, 64, 64);
        for (double& v : x.v) v = u(rng);
        const Matrix ls = src.forward_logits(x);
        const Matrix lt = tgt.forward_logits(x);
        max_diff = std::max(max_diff, std::abs(lt.at(0, 0) - ls.at(0, 0)));
        max_diff = std::max(max_diff, std::abs(lt.at(0, 1) - ls.at(0, 1)));
    }
    c.require(max_diff == 0.0, "shared-class logits differ (max abs diff " + fmt(max_diff) + ")");
    c.note("max shared-logit diff " + fmt(max_diff));
    c.seconds = t.seconds();
    c.require(c.seconds < 10.0, "runtime exceeded 10 s");
}

// ---------------------------------------------------------------------------
// 3. Loss and gradient correctness

void criterion3(Criterion& c) {
    Timer t;
    // Hand-summed loss values.
    Matrix p1(1, 2), y1(1, 2);
    p1.at(0, 0) = 0.5;
    p1.at(0, 1) = 0.5;
    y1.at(0, 0) = 1.0;
    c.require(std::abs(trainer::cross_entropy(p1, y1) - std::log(2.0)) <= 1e-10,
              "single-sample loss != ln 2");
    Matrix p2(2, 2), y2(2, 2);
    p2.at(0, 0) = 0.5;
    p2.at(0, 1) = 0.5;
    p2.at(1, 0) = 0.25;
    p2.at(1, 1) = 0.75;
    y2.at(0, 0) = 1.0;
    y2.at(1, 0) = 1.0;
    c.require(std::abs(trainer::cross_entropy(p2, y2) - 1.0397207708399179) <= 1e-10,
              "two-sample loss != (ln2 + ln4)/2");

    // Random batches against a long-double summation oracle.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const int B = 1 + static_cast<int>(rng() % 12), C = 2 + static_cast<int>(rng() % 3);
        Matrix p(B, C), y(B, C);
        for (int i = 0; i < B; ++i) {
            double sum = 0.0;
            for (int j = 0; j < C; ++j) sum += (p.at(i, j) = u(rng));
            for (int j = 0; j < C; ++j) p.at(i, j) /= sum;
            y.at(i, static_cast<int>(rng() % C)) = 1.0;
        }
        long double oracle = 0.0L;
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < C; ++j)
                if (y.at(i, j) == 1.0) oracle -= std::log(static_cast<long double>(p.at(i, j)));
        oracle /= B;
        c.require(std::abs(trainer::cross_entropy(p, y) - static_cast<double>(oracle)) <= 1e-10,
                  "loss differs from summation oracle beyond 1e-10");
    }

    // Finite differences on a micro model.
    nnmodel::ClassifierConfig arch;
    arch.input_side = 16;
    arch.growth_rate = 1;
    arch.block_layout = {1, 1};
    arch.num_classes = 2;
    arch.init_seed = 3;
    nnmodel::Classifier model(arch, LabelSpace::source());
    std::size_t n_params = 0;
    for (const auto* prm : model.params()) n_params += prm->size();
    c.require(n_params <= 500, "micro model exceeds 500 parameters");
    c.note("micro model has " + std::to_string(n_params) + " parameters");

    Tensor4 x(3, 3, 16, 16);
    for (double& v : x.v) v = u(rng);
    const std::vector<int> targets = {0, 1, 0};
    auto loss_at = [&](nnmodel::Classifier& m) {
        nnmodel::Classifier::Trace tr;
        Matrix dl;
        return nn::softmax_xent(m.forward_train(x, tr), targets, {}, dl);
    };
    model.zero_grad();
    nnmodel::Classifier::Trace tr;
    const Matrix logits = model.forward_train(x, tr);
    Matrix dlogits;
    nn::softmax_xent(logits, targets, {}, dlogits);
    model.backward(x, tr, dlogits);

    std::vector<std::vector<double>> analytic;
    for (nn::Param* prm : model.params()) analytic.push_back(prm->grad);
    const double h = 1e-5;
    double worst = 0.0;
    auto params = model.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k]->data.size(); ++i) {
            const double orig = params[k]->data[i];
            params[k]->data[i] = orig + h;
            const double lp = loss_at(model);
            params[k]->data[i] = orig - h;
            const double lm = loss_at(model);
            params[k]->data[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[k][i];
            worst = std::max(worst,
                             std::abs(a - numeric) / std::max(1e-3, std::abs(a) + std::abs(numeric)));
        }
    }
    c.note("worst relative gradient error " + fmt(worst));
    c.require(worst <= 1e-4, "gradient error exceeds 1e-4");
    c.seconds = t.seconds();
    c.require(c.seconds < 30.0, "runtime exceeded 30 s");
}

// ---------------------------------------------------------------------------
// 5. Perturbation identities and purity

void criterion5(Criterion& c) {
    Timer t;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> uf(0.0f, 1.0f);
    ImageTensor img(256);
    for (float& v : img.data) v = uf(rng);

    using namespace perturb;
    c.require(reduce_green(img, 1.0) == img, "RG alpha=1 not identity");
    c.require(random_green_removal(img, 32, 0, 9) == img, "RGR n=0 not identity");
    c.require(reduce_contrast(img, 1.0) == img, "RC beta=1 not identity");
    c.require(add_gaussian_noise(img, 0.0, 9) == img, "GN sigma=0 not identity");
    c.require(sharpen_edges(img, 0.0, 2.0) == img, "ES lam=0 not identity");
    c.require(apply(PerturbationSpec{}, img) == img, "NONE not identity");

    const std::vector<std::string> kinds = {"RG", "RGR", "RC", "GN", "ES", "ODC"};
    for (const auto& k : kinds) {
        PerturbationSpec spec = parse_spec(k);
        spec.seed = 77;
        const ImageTensor before = img;
        const ImageTensor out1 = apply(spec, img);
        const ImageTensor out2 = apply(spec, img);
        c.require(img == before, k + " mutated its input");
        c.require(out1 == out2, k + " not deterministic");
        c.require(out1.side == img.side, k + " changed shape");
        bool in_range = true;
        for (float v : out1.data) in_range &= (v >= 0.0f && v <= 1.0f);
        c.require(in_range, k + " left the [0,1] range");
    }
    // Channel-untouched property for the green-channel operators.
    auto channel_equal = [&](const ImageTensor& a, const ImageTensor& b, int ch) {
        return std::equal(a.data.begin() + ch * a.plane(), a.data.begin() + (ch + 1) * a.plane(),
                          b.data.begin() + ch * b.plane());
    };
    const ImageTensor rg = reduce_green(img, 0.2);
    const ImageTensor rgr = random_green_removal(img, 32, 12, 5);
    c.require(channel_equal(rg, img, 0) && channel_equal(rg, img, 2), "RG touched red/blue");
    c.require(channel_equal(rgr, img, 0) && channel_equal(rgr, img, 2), "RGR touched red/blue");

    // Seed sensitivity.
    c.require(!(random_green_removal(img, 32, 12, 5) == random_green_removal(img, 32, 12, 6)),
              "RGR insensitive to seed");
    c.require(!(add_gaussian_noise(img, 0.05, 5) == add_gaussian_noise(img, 0.05, 6)),
              "GN insensitive to seed");

    // ODC zeroed-pixel count against the lattice-point oracle.
    ImageTensor solid(256);
    for (float& v : solid.data) v = 0.5f;
    const ImageTensor occluded = occlude_optic_disc(solid, {128, 128}, 30.0);
    std::size_t zeroed = 0;
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            if (occluded.at(0, y, x) == 0.0f) ++zeroed;
    std::size_t lattice = 0;
    for (int y = -31; y <= 31; ++y)
        for (int x = -31; x <= 31; ++x)
            if (x * x + y * y <= 900) ++lattice;
    c.require(zeroed == lattice,
              "ODC zeroed " + std::to_string(zeroed) + " pixels, lattice oracle says " +
                  std::to_string(lattice));
    c.seconds = t.seconds();
    c.require(c.seconds < 30.0, "runtime exceeded 30 s");
}

// ---------------------------------------------------------------------------
// 7. Split protocol on the reference pooled counts

void criterion7(Criterion& c) {
    Timer t;
    datahub::PooledDataset pooled;
    pooled.labelspace = LabelSpace::target();
    auto add = [&](const std::string& src, const std::string& label, int n) {
        for (int i = 0; i < n; ++i)
            pooled.records.push_back(
                {"images/" + src + "_" + label + "_" + std::to_string(i) + ".png", label, src,
                 std::nullopt});
        pooled.per_source_counts[{src, label}] = static_cast<std::size_t>(n);
    };
    add("messidor2", "DR", 727);
    add("messidor2", "Healthy", 1017);
    add("lesav", "Healthy", 11);
    add("lesav", "Glaucoma", 11);
    add("chaksu", "Healthy", 1157);
    add("chaksu", "Glaucoma", 188);

    const auto split = datahub::stratified_split(pooled, {0.8, 0.1, 0.1}, 99);
    c.require(split.train.size() + split.val.size() + split.test.size() == 3111,
              "partition sizes do not sum to the corpus");

    auto count = [&](const std::vector<ImageRecord>& part, const std::string& src,
                     const std::string& label) {
        long long n = 0;
        for (const auto& r : part) n += (r.source == src && r.label == label);
        return n;
    };
    const double ratios[3] = {0.8, 0.1, 0.1};
    for (const auto& [key, n] : pooled.per_source_counts) {
        const long long parts[3] = {count(split.train, key.first, key.second),
                                    count(split.val, key.first, key.second),
                                    count(split.test, key.first, key.second)};
        c.require(parts[0] + parts[1] + parts[2] == static_cast<long long>(n),
                  "stratum " + key.first + "/" + key.second + " not exhaustive");
        for (int i = 0; i < 3; ++i) {
            const double dev = std::abs(parts[i] - ratios[i] * static_cast<double>(n));
            c.require(dev <= 1.0, "stratum " + key.first + "/" + key.second +
                                      " deviates by more than one sample");
        }
    }
    std::set<std::string> seen;
    std::size_t dup = 0;
    for (const auto* part : {&split.train, &split.val, &split.test})
        for (const auto& r : *part)
            if (!seen.insert(r.image_path).second) ++dup;
    c.require(dup == 0, "partitions overlap");
    c.seconds = t.seconds();
    c.require(c.seconds < 5.0, "runtime exceeded 5 s");
}

// ---------------------------------------------------------------------------
// 4 + 6. Desk-scale run and directional perturbation effects

struct DeskRun {
    double stage1_val_acc = 0.0;
    evaluator::EvalReport clean, rg, odc, retention;
};

DeskRun desk_run(Criterion& c4) {
    const fs::path dir = fs::temp_directory_path() / "celd_acceptance_corpus";
    fs::remove_all(dir);
    synthgen::SynthConfig sc;
    sc.side = 128;
    sc.n_healthy = 300;
    sc.n_dr = 150;
    sc.n_glaucoma = 60;
    sc.seed = 11;
    const auto ds = synthgen::generate(sc, dir);

    const auto split = datahub::stratified_split(ds, {0.8, 0.1, 0.1}, 13);
    const auto source = datahub::restrict_to_source(split, LabelSpace::source());

    nnmodel::ClassifierConfig arch;
    arch.input_side = 128;
    arch.growth_rate = 8;
    arch.block_layout = {2, 2, 2, 2};
    arch.init_seed = 5;

    trainer::TrainConfig cs;
    cs.learning_rate = 2e-3;
    cs.batch_size = 8;
    cs.max_epochs = 15;
    cs.early_stop_patience = 6;
    cs.weight_decay = 1e-2;
    cs.seed = 101;
    trainer::TrainConfig ct = cs;
    ct.learning_rate = 1e-3;
    ct.max_epochs = 20;
    ct.seed = 202;

    const auto result = trainer::run_celd(source, split, LabelSpace::source(), LabelSpace::target(),
                                          arch, cs, ct);

    DeskRun run;
    for (const auto& e : result.source_history.epochs)
        if (e.epoch == result.source_history.best_epoch) run.stage1_val_acc = e.val_acc;
    c4.note("stage-1 stopped at epoch " + std::to_string(result.source_history.stopped_epoch) +
            ", stage-2 at " + std::to_string(result.target_history.stopped_epoch));

    const auto model = nnmodel::restore(result.target);
    const auto pred = evaluator::make_predictor(model);
    run.clean = evaluator::evaluate(pred, split.test, {}, 128, LabelSpace::target());
    run.rg = evaluator::evaluate(pred, split.test, perturb::parse_spec("RG:alpha=0.2"), 128,
                                 LabelSpace::target());
    run.odc =
        evaluator::evaluate(pred, split.test, perturb::parse_spec("ODC"), 128, LabelSpace::target());

    std::vector<ImageRecord> source_test;
    for (const auto& r : split.test)
        if (LabelSpace::source().contains(r.label)) source_test.push_back(r);
    run.retention = evaluator::evaluate(pred, source_test, {}, 128, LabelSpace::target());
    return run;
}

void criterion4(Criterion& c, const DeskRun& run) {
    c.note("stage-1 val acc " + fmt(run.stage1_val_acc));
    c.note("stage-2 test acc " + fmt(run.clean.accuracy));
    c.note("retention acc " + fmt(run.retention.accuracy));
    c.require(run.stage1_val_acc >= 0.95, "stage-1 validation accuracy below 0.95");
    c.require(run.clean.accuracy >= 0.90, "stage-2 test accuracy below 0.90");
    c.require(run.retention.accuracy >= 0.90, "retention accuracy below 0.90");
    c.require(c.seconds <= 900.0, "runtime exceeded 15 minutes");
}

void criterion6(Criterion& c, const DeskRun& run) {
    const double clean_dr = run.clean.per_class.at("DR").recall;
    const double rg_dr = run.rg.per_class.at("DR").recall;
    const double clean_g = run.clean.per_class.at("Glaucoma").recall;
    const double odc_g = run.odc.per_class.at("Glaucoma").recall;
    const double clean_h_f1 = run.clean.per_class.at("Healthy").f1;
    const double rg_dr_f1 = run.rg.per_class.at("DR").f1;
    c.note("DR recall clean " + fmt(clean_dr) + " vs RG " + fmt(rg_dr));
    c.note("Glaucoma recall clean " + fmt(clean_g) + " vs ODC " + fmt(odc_g));
    c.note("Healthy F1 clean " + fmt(clean_h_f1) + " vs RG DR F1 " + fmt(rg_dr_f1));
    c.require(rg_dr < clean_dr, "RG did not strictly reduce DR recall");
    c.require(odc_g < clean_g, "ODC did not strictly reduce Glaucoma recall");
    c.require(clean_h_f1 > rg_dr_f1, "clean Healthy F1 not above RG DR F1");
}

}  // namespace

int main() {
    std::vector<Criterion> criteria;
    criteria.push_back({1, "metric oracle (F1 pairs + randomized confusion recount)"});
    criterion1(criteria.back());
    criteria.push_back({2, "transplant invariants (bitwise backbone + shared logits)"});
    criterion2(criteria.back());
    criteria.push_back({3, "loss hand-sum oracle + finite-difference gradients"});
    criterion3(criteria.back());
    criteria.push_back({5, "perturbation identities, purity, determinism, ODC lattice count"});
    criterion5(criteria.back());
    criteria.push_back({7, "stratified split protocol on the reference pooled counts"});
    criterion7(criteria.back());

    Criterion c4{4, "desk-scale two-stage run (accuracy + retention)"};
    Criterion c6{6, "directional perturbation effects (RG vs DR, ODC vs Glaucoma)"};
    {
        Timer t;
        const DeskRun run = desk_run(c4);
        c4.seconds = t.seconds();
        criterion4(c4, run);
        Timer t6;
        criterion6(c6, run);
        c6.seconds = c4.seconds + t6.seconds();
    }
    criteria.push_back(c4);
    criteria.push_back(c6);

    std::sort(criteria.begin(), criteria.end(),
              [](const Criterion& a, const Criterion& b) { return a.number < b.number; });

    int failures = 0;
    for (const auto& c : criteria) {
        std::printf("[criterion %d] %s  %s (%.1f s)\n", c.number, c.pass ? "PASS" : "FAIL",
                    c.description.c_str(), c.seconds);
        for (const auto& n : c.notes) std::printf("              %s\n", n.c_str());
        if (!c.pass) ++failures;
    }
    std::printf("%d/7 criteria passed\n", 7 - failures);
    return failures;
}
