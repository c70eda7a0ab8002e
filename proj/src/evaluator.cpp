#include "celd/evaluator.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "celd/datahub.hpp"
#include "celd/trainer.hpp"

namespace celd::evaluator {

namespace fs = std::filesystem;
using nlohmann::json;

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (const auto& row : counts)
        for (long long v : row) t += v;
    return t;
}

ConfusionMatrix confusion(const std::vector<std::string>& preds,
                          const std::vector<std::string>& truth, const LabelSpace& space) {
    if (preds.size() != truth.size())
        throw std::invalid_argument("confusion: prediction/truth length mismatch");
    ConfusionMatrix cm;
    cm.labelspace = space;
    cm.counts.assign(space.size(), std::vector<long long>(space.size(), 0));
    for (std::size_t k = 0; k < preds.size(); ++k) {
        const int t = space.index_of(truth[k]);
        const int p = space.index_of(preds[k]);
        if (t < 0) throw std::invalid_argument("confusion: truth label '" + truth[k] + "' not in space");
        if (p < 0) throw std::invalid_argument("confusion: predicted label '" + preds[k] + "' not in space");
        cm.counts[t][p]++;
    }
    return cm;
}

double f1_score(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::map<std::string, ClassMetrics> per_class_metrics(const ConfusionMatrix& cm,
                                                      std::vector<std::string>* warnings) {
    const std::size_t C = cm.labelspace.size();
    std::map<std::string, ClassMetrics> out;
    for (std::size_t c = 0; c < C; ++c) {
        long long tp = cm.counts[c][c], fp = 0, fn = 0;
        for (std::size_t k = 0; k < C; ++k) {
            if (k == c) continue;
            fp += cm.counts[k][c];
            fn += cm.counts[c][k];
        }
        ClassMetrics m;
        const std::string& name = cm.labelspace.name(c);
        if (tp + fp > 0) {
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        } else if (warnings) {
            warnings->push_back("class '" + name + "': no predictions, precision set to 0");
        }
        if (tp + fn > 0) {
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        } else if (warnings) {
            warnings->push_back("class '" + name + "': no samples, recall set to 0");
        }
        if (m.precision + m.recall > 0.0) {
            m.f1 = f1_score(m.precision, m.recall);
        } else if (warnings) {
            warnings->push_back("class '" + name + "': degenerate F1 set to 0");
        }
        out[name] = m;
    }
    return out;
}

double accuracy(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total == 0) throw std::invalid_argument("accuracy: no samples");
    long long diag = 0;
    for (std::size_t c = 0; c < cm.labelspace.size(); ++c) diag += cm.counts[c][c];
    return static_cast<double>(diag) / static_cast<double>(total);
}

PredictFn make_predictor(const nnmodel::Classifier& model) {
    return [&model](const Tensor4& batch, const std::vector<const ImageRecord*>&) {
        return model.predict(batch);
    };
}

EvalReport evaluate(const PredictFn& predict, const std::vector<ImageRecord>& test,
                    const perturb::PerturbationSpec& spec, int side, const LabelSpace& space) {
    std::vector<ImageTensor> images;
    images.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto loaded = datahub::load_image(test[i], side);
        perturb::PerturbationSpec per_image = spec;
        per_image.seed = spec.seed + i;
        images.push_back(perturb::apply(per_image, loaded.image, loaded.disc_center));
    }

    std::vector<std::string> preds, truth;
    preds.reserve(test.size());
    truth.reserve(test.size());
    for (std::size_t begin = 0; begin < test.size(); begin += 16) {
        const std::size_t end = std::min(test.size(), begin + 16);
        std::vector<const ImageTensor*> ptrs;
        std::vector<const ImageRecord*> recs;
        for (std::size_t i = begin; i < end; ++i) {
            ptrs.push_back(&images[i]);
            recs.push_back(&test[i]);
        }
        const std::vector<int> cls = predict(trainer::stack_batch(ptrs), recs);
        if (cls.size() != ptrs.size())
            throw std::runtime_error("evaluate: predictor returned wrong batch size");
        for (std::size_t i = begin; i < end; ++i) {
            preds.push_back(space.name(cls[i - begin]));
            truth.push_back(test[i].label);
        }
    }

    EvalReport report;
    report.perturbation = spec;
    report.confusion = confusion(preds, truth, space);
    report.per_class = per_class_metrics(report.confusion, &report.warnings);
    report.accuracy = accuracy(report.confusion);
    return report;
}

void save_report_json(const EvalReport& report, const fs::path& path) {
    json j;
    j["perturbation"] = {{"kind", perturb::kind_name(report.perturbation.kind)},
                         {"params", report.perturbation.params},
                         {"seed", report.perturbation.seed}};
    j["labelspace"] = report.confusion.labelspace.classes();
    j["confusion"] = report.confusion.counts;
    j["accuracy"] = report.accuracy;
    json pc;
    for (const auto& [name, m] : report.per_class)
        pc[name] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    j["per_class"] = pc;
    j["warnings"] = report.warnings;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path.string());
    f << j.dump(2) << "\n";
}

EvalReport load_report_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("report not found: " + path.string());
    json j;
    try {
        f >> j;
        EvalReport r;
        r.perturbation.kind = perturb::kind_from_name(j.at("perturbation").at("kind"));
        r.perturbation.params =
            j.at("perturbation").at("params").get<std::map<std::string, double>>();
        r.perturbation.seed = j.at("perturbation").at("seed").get<std::uint64_t>();
        r.confusion.labelspace = LabelSpace(j.at("labelspace").get<std::vector<std::string>>());
        r.confusion.counts = j.at("confusion").get<std::vector<std::vector<long long>>>();
        r.accuracy = j.at("accuracy").get<double>();
        for (const auto& [name, m] : j.at("per_class").items()) {
            r.per_class[name] = {m.at("precision").get<double>(), m.at("recall").get<double>(),
                                 m.at("f1").get<double>()};
        }
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        return r;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed report " + path.string() + ": " + e.what());
    }
}

namespace {

const std::vector<cv::Scalar>& palette() {
    static const std::vector<cv::Scalar> p = {
        cv::Scalar(90, 90, 90),   cv::Scalar(180, 119, 31),  cv::Scalar(14, 127, 255),
        cv::Scalar(44, 160, 44),  cv::Scalar(40, 39, 214),   cv::Scalar(189, 103, 148),
        cv::Scalar(75, 86, 140)};
    return p;
}

fs::path render_confusion_panel(const EvalReport& report, const fs::path& out_dir) {
    const auto& cm = report.confusion;
    const int C = static_cast<int>(cm.labelspace.size());
    const int cell = 90, left = 110, top = 70, pad = 20;
    cv::Mat img(top + C * cell + pad, left + C * cell + pad, CV_8UC3, cv::Scalar(255, 255, 255));

    long long maxc = 1;
    for (const auto& row : cm.counts)
        for (long long v : row) maxc = std::max(maxc, v);

    const std::string title = perturb::kind_name(report.perturbation.kind);
    cv::putText(img, "perturbation: " + title, {left, 28}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                {0, 0, 0}, 1, cv::LINE_AA);
    for (int t = 0; t < C; ++t) {
        cv::putText(img, cm.labelspace.name(t), {8, top + t * cell + cell / 2 + 5},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1, cv::LINE_AA);
        cv::putText(img, cm.labelspace.name(t), {left + t * cell + 6, top - 10},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1, cv::LINE_AA);
        for (int p = 0; p < C; ++p) {
            const double frac = static_cast<double>(cm.counts[t][p]) / static_cast<double>(maxc);
            const int shade = static_cast<int>(255 - 175 * frac);
            cv::Rect rect(left + p * cell, top + t * cell, cell, cell);
            cv::rectangle(img, rect, cv::Scalar(shade, std::min(255, shade + 30), 255), cv::FILLED);
            cv::rectangle(img, rect, cv::Scalar(120, 120, 120), 1);
            cv::putText(img, std::to_string(cm.counts[t][p]),
                        {rect.x + 12, rect.y + cell / 2 + 6}, cv::FONT_HERSHEY_SIMPLEX, 0.55,
                        {0, 0, 0}, 1, cv::LINE_AA);
        }
    }
    cv::putText(img, "rows: true, cols: predicted", {left, img.rows - 6},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, {90, 90, 90}, 1, cv::LINE_AA);
    const fs::path file = out_dir / ("cm_" + title + ".png");
    if (!cv::imwrite(file.string(), img))
        throw std::runtime_error("cannot write confusion panel: " + file.string());
    return file;
}

fs::path render_f1_bars(const std::vector<EvalReport>& reports, const fs::path& out_dir) {
    const auto& space = reports.front().confusion.labelspace;
    const int C = static_cast<int>(space.size());
    const int R = static_cast<int>(reports.size());
    const int bar = 18, gap = 6, group_gap = 50;
    const int plot_h = 320, left = 60, top = 60;
    const int group_w = R * (bar + gap) + group_gap;
    cv::Mat img(top + plot_h + 60, left + C * group_w + 40, CV_8UC3, cv::Scalar(255, 255, 255));

    cv::putText(img, "per-class F1 by perturbation", {left, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                {0, 0, 0}, 1, cv::LINE_AA);
    for (int ticks = 0; ticks <= 5; ++ticks) {
        const int y = top + plot_h - ticks * plot_h / 5;
        char lbl[16];
        std::snprintf(lbl, sizeof(lbl), "%.1f", ticks / 5.0);
        cv::putText(img, lbl, {10, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1, cv::LINE_AA);
        cv::line(img, {left - 6, y}, {img.cols - 20, y}, cv::Scalar(230, 230, 230), 1);
    }
    for (int c = 0; c < C; ++c) {
        const int gx = left + c * group_w;
        cv::putText(img, space.name(c), {gx, top + plot_h + 28}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
                    {0, 0, 0}, 1, cv::LINE_AA);
        for (int r = 0; r < R; ++r) {
            const auto it = reports[r].per_class.find(space.name(c));
            const double f1 = it == reports[r].per_class.end() ? 0.0 : it->second.f1;
            const int h = static_cast<int>(f1 * plot_h);
            const int x = gx + r * (bar + gap);
            cv::rectangle(img, cv::Rect(x, top + plot_h - h, bar, h), palette()[r % palette().size()],
                          cv::FILLED);
        }
    }
    for (int r = 0; r < R; ++r) {
        const int x = left + r * 110;
        cv::rectangle(img, cv::Rect(x, 40, 12, 12), palette()[r % palette().size()], cv::FILLED);
        cv::putText(img, perturb::kind_name(reports[r].perturbation.kind), {x + 16, 51},
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1, cv::LINE_AA);
    }
    const fs::path file = out_dir / "f1_bars.png";
    if (!cv::imwrite(file.string(), img))
        throw std::runtime_error("cannot write bar chart: " + file.string());
    return file;
}

}  // namespace

std::vector<fs::path> comparison_report(const std::vector<EvalReport>& reports,
                                        const fs::path& out_dir) {
    if (reports.empty()) throw std::invalid_argument("comparison_report: no reports");
    fs::create_directories(out_dir);

    std::vector<fs::path> written;
    const fs::path csv = out_dir / "metrics.csv";
    {
        std::ofstream f(csv);
        if (!f) throw std::runtime_error("cannot write metrics.csv: " + csv.string());
        f << "perturbation,class,precision,recall,f1,accuracy_overall\n";
        char buf[256];
        for (const auto& r : reports) {
            for (const auto& cls : r.confusion.labelspace.classes()) {
                const auto& m = r.per_class.at(cls);
                std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g\n",
                              perturb::kind_name(r.perturbation.kind).c_str(), cls.c_str(),
                              m.precision, m.recall, m.f1, r.accuracy);
                f << buf;
            }
        }
    }
    written.push_back(csv);
    for (const auto& r : reports) written.push_back(render_confusion_panel(r, out_dir));
    written.push_back(render_f1_bars(reports, out_dir));
    return written;
}

}  // namespace celd::evaluator
