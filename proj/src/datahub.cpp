#include "celd/datahub.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace celd::datahub {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string portable_path(const fs::path& p, const fs::path& base_dir) {
    fs::path rel = p.lexically_relative(base_dir);
    if (rel.empty() || rel == fs::path(".")) return p.generic_string();
    return rel.generic_string();
}

fs::path resolve_path(const std::string& stored, const fs::path& base_dir) {
    fs::path p(stored);
    if (p.is_absolute()) return p.lexically_normal();
    return (base_dir / p).lexically_normal();
}

json record_to_json(const ImageRecord& r, const fs::path& base_dir) {
    json j{{"path", portable_path(r.image_path, base_dir)}, {"label", r.label}, {"source", r.source}};
    if (r.disc_center)
        j["disc"] = {r.disc_center->x, r.disc_center->y};
    else
        j["disc"] = nullptr;
    return j;
}

ImageRecord record_from_json(const json& j, const fs::path& base_dir) {
    ImageRecord r;
    r.image_path = resolve_path(j.at("path").get<std::string>(), base_dir).string();
    r.label = j.at("label").get<std::string>();
    r.source = j.at("source").get<std::string>();
    if (!j.at("disc").is_null()) {
        r.disc_center = Point2{j.at("disc").at(0).get<double>(), j.at("disc").at(1).get<double>()};
    }
    return r;
}

}  // namespace

bool operator==(const SplitManifest& a, const SplitManifest& b) {
    return a.train == b.train && a.val == b.val && a.test == b.test && a.ratios == b.ratios &&
           a.seed == b.seed;
}

PooledDataset load_manifest(const fs::path& path, const LabelSpace& space) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest not found: " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    PooledDataset ds;
    ds.labelspace = space;

    std::string line;
    if (!std::getline(f, line))
        throw std::runtime_error("manifest is empty (no header): " + path.string());
    line = strip_cr(line);
    bool with_disc;
    if (line == "image_path,label,source")
        with_disc = false;
    else if (line == "image_path,label,source,disc_cx,disc_cy")
        with_disc = true;
    else
        throw std::runtime_error("manifest " + path.string() + ": unexpected header '" + line + "'");

    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        const std::size_t want = with_disc ? 5 : 3;
        if (fields.size() != want) {
            throw std::runtime_error("manifest " + path.string() + " row " + std::to_string(lineno) +
                                     ": expected " + std::to_string(want) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        ImageRecord r;
        r.image_path = resolve_path(fields[0], base).string();
        r.label = fields[1];
        r.source = fields[2];
        if (r.image_path.empty() || r.source.empty()) {
            throw std::runtime_error("manifest " + path.string() + " row " + std::to_string(lineno) +
                                     ": empty path or source");
        }
        if (!space.contains(r.label)) {
            throw std::runtime_error("manifest " + path.string() + " row " + std::to_string(lineno) +
                                     ": label '" + r.label + "' is not in the label space");
        }
        if (with_disc && !(fields[3].empty() && fields[4].empty())) {
            try {
                r.disc_center = Point2{std::stod(fields[3]), std::stod(fields[4])};
            } catch (const std::exception&) {
                throw std::runtime_error("manifest " + path.string() + " row " +
                                         std::to_string(lineno) + ": bad disc coordinates");
            }
        }
        ds.per_source_counts[{r.source, r.label}]++;
        ds.records.push_back(std::move(r));
    }
    return ds;
}

void save_manifest(const PooledDataset& ds, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    f << "image_path,label,source,disc_cx,disc_cy\n";
    char buf[64];
    for (const auto& r : ds.records) {
        f << portable_path(r.image_path, base) << ',' << r.label << ',' << r.source << ',';
        if (r.disc_center) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g", r.disc_center->x, r.disc_center->y);
            f << buf;
        } else {
            f << ',';
        }
        f << '\n';
    }
    if (!f) throw std::runtime_error("manifest write failed: " + path.string());
}

PooledDataset pool(const std::vector<PooledDataset>& datasets) {
    if (datasets.empty()) throw std::invalid_argument("pool: no datasets");
    // Widest label space wins; all others must be prefixes of it.
    const LabelSpace* widest = &datasets.front().labelspace;
    for (const auto& d : datasets)
        if (d.labelspace.size() > widest->size()) widest = &d.labelspace;
    for (const auto& d : datasets) {
        if (!d.labelspace.is_prefix_of(*widest))
            throw std::invalid_argument("pool: incompatible label spaces");
    }
    PooledDataset out;
    out.labelspace = *widest;
    for (const auto& d : datasets) {
        out.records.insert(out.records.end(), d.records.begin(), d.records.end());
        for (const auto& [key, n] : d.per_source_counts) out.per_source_counts[key] += n;
    }
    return out;
}

SplitManifest stratified_split(const PooledDataset& pooled, const std::array<double, 3>& ratios,
                               std::uint64_t seed) {
    if (pooled.records.empty()) throw std::invalid_argument("stratified_split: empty dataset");
    double sum = 0.0;
    for (double r : ratios) {
        if (r <= 0.0) throw std::invalid_argument("stratified_split: ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("stratified_split: ratios must sum to 1");

    // Group by (source, class); ordered keys keep the walk deterministic.
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < pooled.records.size(); ++i) {
        const auto& r = pooled.records[i];
        strata[{r.source, r.label}].push_back(i);
    }

    SplitManifest out;
    out.ratios = ratios;
    out.seed = seed;
    for (auto& [key, members] : strata) {
        // Sorting by path first makes the split independent of input order.
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            const auto& ra = pooled.records[a];
            const auto& rb = pooled.records[b];
            return ra.image_path != rb.image_path ? ra.image_path < rb.image_path : a < b;
        });
        std::mt19937_64 rng(seed ^ fnv1a(key.first + "\x1f" + key.second));
        std::shuffle(members.begin(), members.end(), rng);

        const std::size_t n = members.size();
        std::array<double, 3> quota{};
        std::array<std::size_t, 3> alloc{};
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            quota[p] = n * ratios[p];
            alloc[p] = static_cast<std::size_t>(std::floor(quota[p]));
            assigned += alloc[p];
        }
        std::array<int, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
        });
        for (std::size_t k = 0; k < n - assigned; ++k) alloc[order[k % 3]]++;

        std::size_t pos = 0;
        for (std::size_t k = 0; k < alloc[0]; ++k) out.train.push_back(pooled.records[members[pos++]]);
        for (std::size_t k = 0; k < alloc[1]; ++k) out.val.push_back(pooled.records[members[pos++]]);
        for (std::size_t k = 0; k < alloc[2]; ++k) out.test.push_back(pooled.records[members[pos++]]);
    }
    return out;
}

SplitManifest restrict_to_source(const SplitManifest& split, const LabelSpace& source_space) {
    SplitManifest out;
    out.ratios = split.ratios;
    out.seed = split.seed;
    auto keep = [&](const std::vector<ImageRecord>& in, std::vector<ImageRecord>& to) {
        for (const auto& r : in)
            if (source_space.contains(r.label)) to.push_back(r);
    };
    keep(split.train, out.train);
    keep(split.val, out.val);
    keep(split.test, out.test);
    return out;
}

void save_split(const SplitManifest& split, const fs::path& path) {
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    json j;
    j["ratios"] = split.ratios;
    j["seed"] = split.seed;
    auto dump = [&](const std::vector<ImageRecord>& part) {
        json arr = json::array();
        for (const auto& r : part) arr.push_back(record_to_json(r, base));
        return arr;
    };
    j["train"] = dump(split.train);
    j["val"] = dump(split.val);
    j["test"] = dump(split.test);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write split manifest: " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("split manifest write failed: " + path.string());
}

SplitManifest load_split(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("split manifest not found: " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    json j;
    try {
        f >> j;
        SplitManifest out;
        auto r = j.at("ratios");
        out.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        out.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("train")) out.train.push_back(record_from_json(e, base));
        for (const auto& e : j.at("val")) out.val.push_back(record_from_json(e, base));
        for (const auto& e : j.at("test")) out.test.push_back(record_from_json(e, base));
        return out;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed split manifest " + path.string() + ": " + e.what());
    }
}

LoadedImage load_image(const ImageRecord& record, int side) {
    if (side < 1) throw std::invalid_argument("load_image: side must be positive");
    cv::Mat bgr = cv::imread(record.image_path, cv::IMREAD_COLOR);
    if (bgr.empty())
        throw std::runtime_error("cannot decode image: " + record.image_path);
    const int orig_w = bgr.cols, orig_h = bgr.rows;
    if (record.disc_center) {
        const auto& d = *record.disc_center;
        if (d.x < 0 || d.y < 0 || d.x >= orig_w || d.y >= orig_h)
            throw std::runtime_error("disc_center outside image bounds: " + record.image_path);
    }
    if (bgr.cols != side || bgr.rows != side)
        cv::resize(bgr, bgr, cv::Size(side, side), 0.0, 0.0, cv::INTER_LINEAR);

    LoadedImage out;
    out.image = ImageTensor(side);
    const float inv = 1.0f / 255.0f;
    for (int y = 0; y < side; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < side; ++x) {
            out.image.at(0, y, x) = row[x][2] * inv;
            out.image.at(1, y, x) = row[x][1] * inv;
            out.image.at(2, y, x) = row[x][0] * inv;
        }
    }
    if (record.disc_center) {
        out.disc_center = Point2{record.disc_center->x * side / orig_w,
                                 record.disc_center->y * side / orig_h};
    }
    return out;
}

}  // namespace celd::datahub
