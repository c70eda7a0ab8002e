#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "celd/types.hpp"

namespace celd::datahub {

/// Pooled corpus: records from one or more source datasets under one label space.
struct PooledDataset {
    std::vector<ImageRecord> records;
    LabelSpace labelspace;
    std::map<std::pair<std::string, std::string>, std::size_t> per_source_counts;  // (source, class)
};

/// Disjoint train/val/test partition of a pooled corpus.
struct SplitManifest {
    std::vector<ImageRecord> train, val, test;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};  // train, val, test
    std::uint64_t seed = 0;
};

bool operator==(const SplitManifest& a, const SplitManifest& b);

/// Reads a manifest CSV (`image_path,label,source[,disc_cx,disc_cy]`, header
/// required). Relative image paths are resolved against the CSV's directory.
/// Rows with labels outside `space` are rejected with the offending row number.
PooledDataset load_manifest(const std::filesystem::path& path,
                            const LabelSpace& space = LabelSpace::target());

void save_manifest(const PooledDataset& ds, const std::filesystem::path& path);

/// Concatenates record lists and merges counts. Every input label space must
/// be a prefix of the target space; the pooled set carries the widest one.
PooledDataset pool(const std::vector<PooledDataset>& datasets);

/// Shuffles and allocates independently inside every (source, class) stratum,
/// with largest-remainder rounding (ties favor train, then val). Pure function
/// of (records, ratios, seed).
SplitManifest stratified_split(const PooledDataset& pooled, const std::array<double, 3>& ratios,
                               std::uint64_t seed);

/// Filters every partition to records whose label lies in `source_space`
/// (which must be a prefix of the full space). Partition membership of the
/// surviving records is unchanged.
SplitManifest restrict_to_source(const SplitManifest& split, const LabelSpace& source_space);

/// JSON persistence; image paths are stored relative to the JSON's directory
/// when possible. Round-trips bit-exactly.
void save_split(const SplitManifest& split, const std::filesystem::path& path);
SplitManifest load_split(const std::filesystem::path& path);

struct LoadedImage {
    ImageTensor image;
    std::optional<Point2> disc_center;  // rescaled to the loaded resolution
};

/// Decodes, bilinearly resizes to side x side, scales intensities to [0,1].
/// Grayscale inputs are replicated to three channels.
LoadedImage load_image(const ImageRecord& record, int side);

}  // namespace celd::datahub
