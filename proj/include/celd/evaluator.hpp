#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "celd/nnmodel.hpp"
#include "celd/perturb.hpp"
#include "celd/tensor.hpp"
#include "celd/types.hpp"

namespace celd::evaluator {

/// counts[true][pred], row/column order given by the label space.
struct ConfusionMatrix {
    LabelSpace labelspace;
    std::vector<std::vector<long long>> counts;

    long long total() const;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Harmonic mean 2PR/(P+R); 0 when both are 0.
double f1_score(double precision, double recall);

struct EvalReport {
    ConfusionMatrix confusion;
    std::map<std::string, ClassMetrics> per_class;
    double accuracy = 0.0;
    perturb::PerturbationSpec perturbation;
    std::vector<std::string> warnings;
};

ConfusionMatrix confusion(const std::vector<std::string>& preds,
                          const std::vector<std::string>& truth, const LabelSpace& space);

/// One-vs-rest precision/recall/F1 per class. Zero-denominator cases yield 0
/// and append a warning.
std::map<std::string, ClassMetrics> per_class_metrics(const ConfusionMatrix& cm,
                                                      std::vector<std::string>* warnings = nullptr);

/// trace / total; errors on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// Batch-in, class-indices-out. The record pointers let test stubs cheat;
/// real models ignore them.
using PredictFn =
    std::function<std::vector<int>(const Tensor4&, const std::vector<const ImageRecord*>&)>;

PredictFn make_predictor(const nnmodel::Classifier& model);

/// Loads every test image at `side`, perturbs it per `spec` (per-image seed =
/// spec.seed + record index), classifies by argmax, and assembles the report.
EvalReport evaluate(const PredictFn& predict, const std::vector<ImageRecord>& test,
                    const perturb::PerturbationSpec& spec, int side, const LabelSpace& space);

void save_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report_json(const std::filesystem::path& path);

/// Emits metrics.csv (perturbation,class,precision,recall,f1,accuracy_overall),
/// one cm_<kind>.png confusion panel per report, and a grouped F1 bar chart.
/// Returns the written paths.
std::vector<std::filesystem::path> comparison_report(const std::vector<EvalReport>& reports,
                                                     const std::filesystem::path& out_dir);

}  // namespace celd::evaluator
