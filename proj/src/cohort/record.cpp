#include "cohort/record.hpp"

#include <cmath>

#include "common.hpp"

namespace lvo::cohort {

std::string to_string(WeakSide side) {
    switch (side) {
        case WeakSide::left: return "left";
        case WeakSide::right: return "right";
        case WeakSide::none: return "none";
        case WeakSide::unknown: return "unknown";
    }
    return "unknown";
}

WeakSide weak_side_from_string(const std::string& s) {
    if (s == "left") return WeakSide::left;
    if (s == "right") return WeakSide::right;
    if (s == "none") return WeakSide::none;
    if (s == "unknown") return WeakSide::unknown;
    throw FormatError("invalid weak_side value: '" + s + "'");
}

namespace {

std::optional<double> from_bool(const std::optional<bool>& b) {
    if (!b) return std::nullopt;
    return *b ? 1.0 : 0.0;
}

std::optional<double> from_int(const std::optional<int>& v) {
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
}

std::optional<bool> to_bool(std::optional<double> v) {
    if (!v) return std::nullopt;
    return *v != 0.0;
}

std::optional<int> to_int(std::optional<double> v) {
    if (!v) return std::nullopt;
    return static_cast<int>(std::llround(*v));
}

}  // namespace

std::optional<double> PatientRecord::feature(std::string_view name) const {
    if (name == "age") return age;
    if (name == "sex") return sex == Sex::female ? 1.0 : 0.0;
    if (name == "speech_deficit") return from_bool(speech_deficit);
    if (name == "facial_weakness") return from_bool(facial_weakness);
    if (name == "facial_weakness_left") return from_bool(facial_weakness_left);
    if (name == "facial_weakness_right") return from_bool(facial_weakness_right);
    if (name == "limb_weakness") return from_bool(limb_weakness);
    if (name == "weakness_left") return from_bool(weakness_left);
    if (name == "weakness_right") return from_bool(weakness_right);
    if (name == "diabetes") return from_bool(diabetes);
    if (name == "hypertension") return from_bool(hypertension);
    if (name == "smoker_ever") return from_bool(smoker_ever);
    if (name == "smoker_current") return from_bool(smoker_current);
    if (name == "smoker_previous") return from_bool(smoker_previous);
    if (name == "bp_systolic") return bp_systolic;
    if (name == "bp_diastolic") return bp_diastolic;
    if (name == "gcs_total") return from_int(gcs_total);
    if (name == "gcs_eye") return from_int(gcs_eye);
    if (name == "gcs_verbal") return from_int(gcs_verbal);
    if (name == "gcs_motor") return from_int(gcs_motor);
    if (name == "afib") return from_bool(afib);
    if (name == "atherosclerosis") return from_bool(atherosclerosis);
    if (name == "valvular_heart_disease") return from_bool(valvular_heart_disease);
    if (name == "cardioembolism") return from_bool(cardioembolism);
    if (name == "prior_stroke") return from_bool(prior_stroke);
    if (name == "ischemic_heart_disease") return from_bool(ischemic_heart_disease);
    throw UsageError("unknown feature column: '" + std::string(name) + "'");
}

void PatientRecord::set_feature(std::string_view name, std::optional<double> v) {
    if (name == "age") { age = v.value_or(0.0); return; }
    if (name == "sex") { sex = (v.value_or(0.0) != 0.0) ? Sex::female : Sex::male; return; }
    if (name == "speech_deficit") { speech_deficit = to_bool(v); return; }
    if (name == "facial_weakness") { facial_weakness = to_bool(v); return; }
    if (name == "facial_weakness_left") { facial_weakness_left = to_bool(v); return; }
    if (name == "facial_weakness_right") { facial_weakness_right = to_bool(v); return; }
    if (name == "limb_weakness") { limb_weakness = to_bool(v); return; }
    if (name == "weakness_left") { weakness_left = to_bool(v); return; }
    if (name == "weakness_right") { weakness_right = to_bool(v); return; }
    if (name == "diabetes") { diabetes = to_bool(v); return; }
    if (name == "hypertension") { hypertension = to_bool(v); return; }
    if (name == "smoker_ever") { smoker_ever = to_bool(v); return; }
    if (name == "smoker_current") { smoker_current = to_bool(v); return; }
    if (name == "smoker_previous") { smoker_previous = to_bool(v); return; }
    if (name == "bp_systolic") { bp_systolic = v; return; }
    if (name == "bp_diastolic") { bp_diastolic = v; return; }
    if (name == "gcs_total") { gcs_total = to_int(v); return; }
    if (name == "gcs_eye") { gcs_eye = to_int(v); return; }
    if (name == "gcs_verbal") { gcs_verbal = to_int(v); return; }
    if (name == "gcs_motor") { gcs_motor = to_int(v); return; }
    if (name == "afib") { afib = to_bool(v); return; }
    if (name == "atherosclerosis") { atherosclerosis = to_bool(v); return; }
    if (name == "valvular_heart_disease") { valvular_heart_disease = to_bool(v); return; }
    if (name == "cardioembolism") { cardioembolism = to_bool(v); return; }
    if (name == "prior_stroke") { prior_stroke = to_bool(v); return; }
    if (name == "ischemic_heart_disease") { ischemic_heart_disease = to_bool(v); return; }
    throw UsageError("unknown feature column: '" + std::string(name) + "'");
}

namespace {

bool observed_true(const std::optional<bool>& b) { return b.has_value() && *b; }
bool observed_false(const std::optional<bool>& b) { return b.has_value() && !*b; }

void fail(const PatientRecord& rec, const std::string& rule) {
    throw ValidationError("record '" + rec.id + "' violates: " + rule);
}

}  // namespace

void validate(const PatientRecord& rec) {
    if (rec.id.empty()) fail(rec, "id nonempty");
    if (!(rec.age >= 18.0)) fail(rec, "age >= 18");
    if (!std::isfinite(rec.age)) fail(rec, "age finite");

    auto check_range = [&](const char* name, std::optional<int> v, int lo, int hi) {
        if (v && (*v < lo || *v > hi))
            fail(rec, std::string(name) + " in [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    };
    check_range("gcs_total", rec.gcs_total, 3, 15);
    check_range("gcs_eye", rec.gcs_eye, 1, 4);
    check_range("gcs_verbal", rec.gcs_verbal, 1, 5);
    check_range("gcs_motor", rec.gcs_motor, 1, 6);
    if (rec.gcs_total && rec.gcs_eye && rec.gcs_verbal && rec.gcs_motor &&
        *rec.gcs_total != *rec.gcs_eye + *rec.gcs_verbal + *rec.gcs_motor)
        fail(rec, "gcs_total = gcs_eye + gcs_verbal + gcs_motor");

    if (observed_true(rec.smoker_current) && observed_true(rec.smoker_previous))
        fail(rec, "smoker_current and smoker_previous never both true");
    if ((observed_true(rec.smoker_current) || observed_true(rec.smoker_previous)) &&
        observed_false(rec.smoker_ever))
        fail(rec, "smoker_current or smoker_previous implies smoker_ever");

    if ((observed_true(rec.facial_weakness_left) || observed_true(rec.facial_weakness_right)) &&
        observed_false(rec.facial_weakness))
        fail(rec, "facial side weakness implies facial_weakness");
    if ((observed_true(rec.weakness_left) || observed_true(rec.weakness_right)) &&
        observed_false(rec.limb_weakness))
        fail(rec, "side weakness implies limb_weakness");

    if (rec.bp_systolic && rec.bp_diastolic && !(*rec.bp_systolic >= *rec.bp_diastolic))
        fail(rec, "bp_systolic >= bp_diastolic");
    if (rec.bp_systolic && !std::isfinite(*rec.bp_systolic)) fail(rec, "bp_systolic finite");
    if (rec.bp_diastolic && !std::isfinite(*rec.bp_diastolic)) fail(rec, "bp_diastolic finite");

    // weak_side is in {left,right} exactly when a side weakness is observed
    // true, and it must match that side.
    bool any_side = observed_true(rec.weakness_left) || observed_true(rec.weakness_right);
    if (rec.weak_side == WeakSide::left && !observed_true(rec.weakness_left))
        fail(rec, "weak_side=left requires weakness_left");
    if (rec.weak_side == WeakSide::right && !observed_true(rec.weakness_right))
        fail(rec, "weak_side=right requires weakness_right");
    if ((rec.weak_side == WeakSide::none || rec.weak_side == WeakSide::unknown) && any_side)
        fail(rec, "weak_side must name the observed weak side");
}

}  // namespace lvo::cohort
