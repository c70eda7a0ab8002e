#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace celd {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline bool operator==(const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }

/// Ordered class vocabulary. The two-class source space is always a prefix
/// of the three-class target space.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(std::vector<std::string> classes);

    static LabelSpace target();  // [Healthy, DR, Glaucoma]
    static LabelSpace source();  // [Healthy, DR]

    const std::vector<std::string>& classes() const { return classes_; }
    std::size_t size() const { return classes_.size(); }
    const std::string& name(std::size_t idx) const { return classes_.at(idx); }

    bool contains(const std::string& label) const;
    int index_of(const std::string& label) const;  // -1 when absent
    bool is_prefix_of(const LabelSpace& other) const;

    friend bool operator==(const LabelSpace& a, const LabelSpace& b) {
        return a.classes_ == b.classes_;
    }

private:
    std::vector<std::string> classes_;
};

/// One fundus sample: where the pixels live, what it is, where it came from.
struct ImageRecord {
    std::string image_path;
    std::string label;
    std::string source;
    std::optional<Point2> disc_center;  // (column, row) in original-image space
};

inline bool operator==(const ImageRecord& a, const ImageRecord& b) {
    return a.image_path == b.image_path && a.label == b.label && a.source == b.source &&
           a.disc_center.has_value() == b.disc_center.has_value() &&
           (!a.disc_center || (*a.disc_center == *b.disc_center));
}

/// Square RGB image, planar channel layout, intensities in [0,1].
/// data[c*side*side + y*side + x], c in {0:R, 1:G, 2:B}.
struct ImageTensor {
    int side = 0;
    std::vector<float> data;

    ImageTensor() = default;
    explicit ImageTensor(int s) : side(s), data(static_cast<std::size_t>(3) * s * s, 0.0f) {}

    std::size_t plane() const { return static_cast<std::size_t>(side) * side; }
    float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * side + x]; }
    float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * side + x]; }
};

inline bool operator==(const ImageTensor& a, const ImageTensor& b) {
    return a.side == b.side && a.data == b.data;
}

}  // namespace celd
