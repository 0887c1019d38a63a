#include "cohort/synth.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "rng.hpp"

namespace lvo::cohort {

namespace {

void check_prob(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError(std::string("cohort spec: ") + what + " must be in [0,1]");
}

void check_binary(const BinarySpec& s, const char* what) {
    check_prob(s.p_lvo, what);
    check_prob(s.p_non, what);
    check_prob(s.missing_rate, what);
}

void check_continuous(const ContinuousSpec& s, const char* what) {
    if (s.sd < 0.0) throw ValidationError(std::string("cohort spec: ") + what + " sd must be >= 0");
    check_prob(s.missing_rate, what);
}

// Split a GCS total into (eye, verbal, motor) uniformly over the feasible
// decompositions' first coordinates, respecting subscale ranges.
void decompose_gcs(int total, Rng& rng, int& eye, int& verbal, int& motor) {
    int e_lo = std::max(1, total - 11);  // verbal+motor <= 11
    int e_hi = std::min(4, total - 2);   // verbal+motor >= 2
    eye = e_lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(e_hi - e_lo + 1)));
    int rest = total - eye;
    int v_lo = std::max(1, rest - 6);
    int v_hi = std::min(5, rest - 1);
    verbal = v_lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(v_hi - v_lo + 1)));
    motor = rest - verbal;
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    for (int i = 0; i < 256; ++i) {
        double v = rng.normal(mean, sd);
        if (v >= lo && v <= hi) return v;
    }
    return std::clamp(mean, lo, hi);
}

}  // namespace

void validate_spec(const CohortSpec& spec) {
    if (spec.size < 2) throw ValidationError("cohort spec: size must be >= 2");
    check_prob(spec.prevalence, "prevalence");
    int n_lvo = static_cast<int>(std::llround(spec.prevalence * spec.size));
    if (n_lvo < 1 || n_lvo > spec.size - 1)
        throw ValidationError("cohort spec: both classes must be represented");
    check_continuous(spec.age, "age");
    check_continuous(spec.gcs, "gcs");
    check_continuous(spec.bp_systolic, "bp_systolic");
    check_continuous(spec.bp_diastolic, "bp_diastolic");
    check_binary(spec.female, "female");
    check_binary(spec.speech_deficit, "speech_deficit");
    check_binary(spec.facial_weakness, "facial_weakness");
    check_binary(spec.limb_weakness, "limb_weakness");
    check_binary(spec.diabetes, "diabetes");
    check_binary(spec.hypertension, "hypertension");
    check_binary(spec.smoker_current, "smoker_current");
    check_binary(spec.smoker_previous, "smoker_previous");
    if (spec.smoker_current.p_lvo + spec.smoker_previous.p_lvo > 1.0 ||
        spec.smoker_current.p_non + spec.smoker_previous.p_non > 1.0)
        throw ValidationError("cohort spec: smoker_current + smoker_previous must be <= 1");
    check_binary(spec.afib, "afib");
    check_binary(spec.atherosclerosis, "atherosclerosis");
    check_binary(spec.valvular_heart_disease, "valvular_heart_disease");
    check_binary(spec.cardioembolism, "cardioembolism");
    check_binary(spec.prior_stroke, "prior_stroke");
    check_binary(spec.ischemic_heart_disease, "ischemic_heart_disease");
    check_binary(spec.mca_dot, "mca_dot");
}

Cohort synth_cohort(const CohortSpec& spec, uint64_t seed) {
    validate_spec(spec);
    const int n = spec.size;
    const int n_lvo = static_cast<int>(std::llround(spec.prevalence * n));

    // Label layout: exactly n_lvo positives, order shuffled once.
    std::vector<bool> labels(static_cast<size_t>(n), false);
    std::fill(labels.begin(), labels.begin() + n_lvo, true);
    Rng shuffle_rng(hash_mix(seed, 0x1abe15));
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(shuffle_rng.next_below(static_cast<uint64_t>(i + 1)));
        std::swap(labels[i], labels[j]);
    }

    int width = 1;
    for (int v = n; v >= 10; v /= 10) ++width;

    Cohort records;
    records.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(hash_mix(seed, 0x9e0'0000 + static_cast<uint64_t>(i)));
        PatientRecord rec;
        bool lvo = labels[static_cast<size_t>(i)];
        rec.lvo = lvo;

        std::string num = std::to_string(i + 1);
        rec.id = "p" + std::string(static_cast<size_t>(width) - num.size(), '0') + num;

        auto pick = [&](const BinarySpec& s) { return rng.bernoulli(lvo ? s.p_lvo : s.p_non); };

        rec.age = truncated_normal(rng, lvo ? spec.age.mean_lvo : spec.age.mean_non, spec.age.sd,
                                   18.0, 120.0);
        rec.sex = pick(spec.female) ? Sex::female : Sex::male;
        rec.speech_deficit = pick(spec.speech_deficit);

        bool facial = pick(spec.facial_weakness);
        bool limb = pick(spec.limb_weakness);
        bool limb_left = limb && rng.bernoulli(0.5);
        rec.limb_weakness = limb;
        rec.weakness_left = limb && limb_left;
        rec.weakness_right = limb && !limb_left;
        rec.weak_side = limb ? (limb_left ? WeakSide::left : WeakSide::right) : WeakSide::none;
        // Facial weakness lateralizes with the limb when both are present.
        bool facial_left = limb ? limb_left : rng.bernoulli(0.5);
        rec.facial_weakness = facial;
        rec.facial_weakness_left = facial && facial_left;
        rec.facial_weakness_right = facial && !facial_left;

        rec.diabetes = pick(spec.diabetes);
        rec.hypertension = pick(spec.hypertension);

        double p_cur = lvo ? spec.smoker_current.p_lvo : spec.smoker_current.p_non;
        double p_prev = lvo ? spec.smoker_previous.p_lvo : spec.smoker_previous.p_non;
        double u = rng.next_double();
        bool cur = u < p_cur;
        bool prev = !cur && u < p_cur + p_prev;
        rec.smoker_current = cur;
        rec.smoker_previous = prev;
        rec.smoker_ever = cur || prev;

        double dia = truncated_normal(
            rng, lvo ? spec.bp_diastolic.mean_lvo : spec.bp_diastolic.mean_non,
            spec.bp_diastolic.sd, 30.0, 160.0);
        double sys = truncated_normal(
            rng, lvo ? spec.bp_systolic.mean_lvo : spec.bp_systolic.mean_non,
            spec.bp_systolic.sd, std::max(60.0, dia), 260.0);
        rec.bp_systolic = sys;
        rec.bp_diastolic = dia;

        int total = static_cast<int>(std::llround(
            truncated_normal(rng, lvo ? spec.gcs.mean_lvo : spec.gcs.mean_non, spec.gcs.sd,
                             3.0, 15.0)));
        total = std::clamp(total, 3, 15);
        int eye, verbal, motor;
        decompose_gcs(total, rng, eye, verbal, motor);
        rec.gcs_total = total;
        rec.gcs_eye = eye;
        rec.gcs_verbal = verbal;
        rec.gcs_motor = motor;

        rec.afib = pick(spec.afib);
        rec.atherosclerosis = pick(spec.atherosclerosis);
        rec.valvular_heart_disease = pick(spec.valvular_heart_disease);
        rec.cardioembolism = pick(spec.cardioembolism);
        rec.prior_stroke = pick(spec.prior_stroke);
        rec.ischemic_heart_disease = pick(spec.ischemic_heart_disease);
        rec.mca_dot_present = pick(spec.mca_dot);

        if (spec.assign_scan_ids) rec.scan_id = "scan-" + rec.id;

        // MCAR masking. Groups whose invariants couple observed values are
        // masked together so masking can never create a contradiction.
        auto drop = [&](double rate) { return rate > 0.0 && rng.bernoulli(rate); };
        if (drop(spec.speech_deficit.missing_rate)) rec.speech_deficit.reset();
        if (drop(spec.facial_weakness.missing_rate)) {
            rec.facial_weakness.reset();
            rec.facial_weakness_left.reset();
            rec.facial_weakness_right.reset();
        }
        if (drop(spec.limb_weakness.missing_rate)) {
            rec.limb_weakness.reset();
            rec.weakness_left.reset();
            rec.weakness_right.reset();
            rec.weak_side = WeakSide::unknown;
        }
        if (drop(spec.diabetes.missing_rate)) rec.diabetes.reset();
        if (drop(spec.hypertension.missing_rate)) rec.hypertension.reset();
        if (drop(spec.smoker_current.missing_rate)) {
            rec.smoker_ever.reset();
            rec.smoker_current.reset();
            rec.smoker_previous.reset();
        }
        if (drop(spec.bp_systolic.missing_rate)) rec.bp_systolic.reset();
        if (drop(spec.bp_diastolic.missing_rate)) rec.bp_diastolic.reset();
        if (drop(spec.gcs.missing_rate)) rec.gcs_total.reset();
        if (drop(spec.gcs.missing_rate)) rec.gcs_eye.reset();
        if (drop(spec.gcs.missing_rate)) rec.gcs_verbal.reset();
        if (drop(spec.gcs.missing_rate)) rec.gcs_motor.reset();
        if (drop(spec.afib.missing_rate)) rec.afib.reset();
        if (drop(spec.atherosclerosis.missing_rate)) rec.atherosclerosis.reset();
        if (drop(spec.valvular_heart_disease.missing_rate)) rec.valvular_heart_disease.reset();
        if (drop(spec.cardioembolism.missing_rate)) rec.cardioembolism.reset();
        if (drop(spec.prior_stroke.missing_rate)) rec.prior_stroke.reset();
        if (drop(spec.ischemic_heart_disease.missing_rate)) rec.ischemic_heart_disease.reset();
        if (drop(spec.mca_dot.missing_rate)) rec.mca_dot_present.reset();

        validate(rec);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace lvo::cohort
