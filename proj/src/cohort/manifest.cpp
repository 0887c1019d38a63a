#include "cohort/manifest.hpp"

namespace lvo::cohort {

std::vector<std::string> level_columns(int level) {
    std::vector<std::string> out;
    for (const auto& col : kManifest) {
        if (col.level == 1 || (level >= 2 && col.level == 2))
            out.emplace_back(col.name);
    }
    return out;
}

int manifest_index(std::string_view name) {
    for (size_t i = 0; i < kManifest.size(); ++i)
        if (kManifest[i].name == name) return static_cast<int>(i);
    return -1;
}

}  // namespace lvo::cohort
