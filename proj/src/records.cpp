#include "collapse_lab/records.hpp"

namespace clab {

std::vector<std::string> texts_of(const std::vector<TextRecord>& records) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.text);
    return out;
}

} // namespace clab
