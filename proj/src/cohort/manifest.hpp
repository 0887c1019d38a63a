#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lvo::cohort {

// The canonical tabular feature schema, version "cohort-manifest-v1".
// This table is the source of truth for CSV column order, feature kinds and
// the level-1/level-2 model sets (9 and 24 columns). Two columns carry
// level 0: they are stored, validated and reported in descriptive stats but
// are not model inputs, because each is an aggregate of other columns
// (smoker_ever of smoker_current/smoker_previous, gcs_total of the three
// subscales). docs/feature_manifest.md mirrors this table.
inline constexpr std::string_view kManifestVersion = "cohort-manifest-v1";

enum class ColKind : uint8_t { binary, continuous };

struct ManifestColumn {
    std::string_view name;
    ColKind kind;
    int level;  // 1, 2, or 0 (stored but not a model feature)
    double lo;  // valid range, inclusive
    double hi;
};

inline constexpr std::array<ManifestColumn, 26> kManifest = {{
    {"age", ColKind::continuous, 1, 18.0, 120.0},
    {"sex", ColKind::binary, 1, 0.0, 1.0},  // 1 = female
    {"speech_deficit", ColKind::binary, 1, 0.0, 1.0},
    {"facial_weakness", ColKind::binary, 1, 0.0, 1.0},
    {"facial_weakness_left", ColKind::binary, 1, 0.0, 1.0},
    {"facial_weakness_right", ColKind::binary, 1, 0.0, 1.0},
    {"limb_weakness", ColKind::binary, 1, 0.0, 1.0},
    {"weakness_left", ColKind::binary, 1, 0.0, 1.0},
    {"weakness_right", ColKind::binary, 1, 0.0, 1.0},
    {"diabetes", ColKind::binary, 2, 0.0, 1.0},
    {"hypertension", ColKind::binary, 2, 0.0, 1.0},
    {"smoker_ever", ColKind::binary, 0, 0.0, 1.0},
    {"smoker_current", ColKind::binary, 2, 0.0, 1.0},
    {"smoker_previous", ColKind::binary, 2, 0.0, 1.0},
    {"bp_systolic", ColKind::continuous, 2, 60.0, 260.0},
    {"bp_diastolic", ColKind::continuous, 2, 30.0, 160.0},
    {"gcs_total", ColKind::continuous, 0, 3.0, 15.0},
    {"gcs_eye", ColKind::continuous, 2, 1.0, 4.0},
    {"gcs_verbal", ColKind::continuous, 2, 1.0, 5.0},
    {"gcs_motor", ColKind::continuous, 2, 1.0, 6.0},
    {"afib", ColKind::binary, 2, 0.0, 1.0},
    {"atherosclerosis", ColKind::binary, 2, 0.0, 1.0},
    {"valvular_heart_disease", ColKind::binary, 2, 0.0, 1.0},
    {"cardioembolism", ColKind::binary, 2, 0.0, 1.0},
    {"prior_stroke", ColKind::binary, 2, 0.0, 1.0},
    {"ischemic_heart_disease", ColKind::binary, 2, 0.0, 1.0},
}};

// Model feature names for a level, in manifest order. Level 1 has 9
// columns; level 2 has 24 (level-1 list is a prefix of it).
std::vector<std::string> level_columns(int level);

int manifest_index(std::string_view name);  // -1 if unknown

}  // namespace lvo::cohort
