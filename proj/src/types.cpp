#include "celd/types.hpp"

#include <algorithm>
#include <unordered_set>

namespace celd {

LabelSpace::LabelSpace(std::vector<std::string> classes) : classes_(std::move(classes)) {
    std::unordered_set<std::string> seen;
    for (const auto& c : classes_) {
        if (c.empty()) throw std::invalid_argument("LabelSpace: empty class name");
        if (!seen.insert(c).second) throw std::invalid_argument("LabelSpace: duplicate class '" + c + "'");
    }
}

LabelSpace LabelSpace::target() { return LabelSpace({"Healthy", "DR", "Glaucoma"}); }
LabelSpace LabelSpace::source() { return LabelSpace({"Healthy", "DR"}); }

bool LabelSpace::contains(const std::string& label) const {
    return std::find(classes_.begin(), classes_.end(), label) != classes_.end();
}

int LabelSpace::index_of(const std::string& label) const {
    auto it = std::find(classes_.begin(), classes_.end(), label);
    return it == classes_.end() ? -1 : static_cast<int>(it - classes_.begin());
}

bool LabelSpace::is_prefix_of(const LabelSpace& other) const {
    if (classes_.size() > other.classes_.size()) return false;
    return std::equal(classes_.begin(), classes_.end(), other.classes_.begin());
}

}  // namespace celd
