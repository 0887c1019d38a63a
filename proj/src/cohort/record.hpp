#pragma once

#include <optional>
#include <string>
#include <vector>

namespace lvo::cohort {

enum class Sex : uint8_t { female, male };
enum class WeakSide : uint8_t { left, right, none, unknown };

std::string to_string(WeakSide side);
WeakSide weak_side_from_string(const std::string& s);

// One subject. Optional fields model per-field missingness; validation only
// flags contradictions between observed values, never between an observed
// value and a missing one.
struct PatientRecord {
    std::string id;
    double age = 0.0;
    Sex sex = Sex::female;

    std::optional<bool> speech_deficit;
    std::optional<bool> facial_weakness;
    std::optional<bool> facial_weakness_left;
    std::optional<bool> facial_weakness_right;
    std::optional<bool> limb_weakness;
    std::optional<bool> weakness_left;
    std::optional<bool> weakness_right;

    std::optional<bool> diabetes;
    std::optional<bool> hypertension;
    std::optional<bool> smoker_ever;
    std::optional<bool> smoker_current;
    std::optional<bool> smoker_previous;
    std::optional<double> bp_systolic;
    std::optional<double> bp_diastolic;
    std::optional<int> gcs_total;
    std::optional<int> gcs_eye;
    std::optional<int> gcs_verbal;
    std::optional<int> gcs_motor;
    std::optional<bool> afib;
    std::optional<bool> atherosclerosis;
    std::optional<bool> valvular_heart_disease;
    std::optional<bool> cardioembolism;
    std::optional<bool> prior_stroke;
    std::optional<bool> ischemic_heart_disease;

    bool lvo = false;
    std::optional<bool> mca_dot_present;
    WeakSide weak_side = WeakSide::unknown;
    std::optional<std::string> scan_id;

    // Feature value by manifest column name; nullopt when missing.
    // Binary fields map to 0/1, sex maps female=1, male=0.
    std::optional<double> feature(std::string_view name) const;
    void set_feature(std::string_view name, std::optional<double> value);
};

// Throws ValidationError naming the violated rule.
void validate(const PatientRecord& rec);

using Cohort = std::vector<PatientRecord>;

}  // namespace lvo::cohort
