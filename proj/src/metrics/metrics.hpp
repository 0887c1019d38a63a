#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gbt/gbt.hpp"

namespace lvo::metrics {

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // thresholds strictly decreasing
    double auc = 0.0;
};

// One operating point per distinct score (ties grouped), preceded by the
// all-negative point at threshold +infinity. AUC by the trapezoidal rule,
// which equals the Mann-Whitney statistic with ties counted half.
RocCurve roc_curve(std::span<const double> scores, std::span<const uint8_t> labels);

struct ConfusionMetrics {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double accuracy = 0.0;
    double youden = 0.0;  // sensitivity + specificity - 1
};

ConfusionMetrics confusion_from_counts(long tp, long fp, long tn, long fn);

// Positive prediction iff score >= cutoff.
ConfusionMetrics confusion_at(std::span<const double> scores, std::span<const uint8_t> labels,
                              double cutoff);

struct FoldYouden {
    int fold = 0;
    double youden = 0.0;
};

struct CutoffSelection {
    double threshold = 0.5;
    double pooled_youden = 0.0;
    std::vector<FoldYouden> per_fold;
    int n_folds = 10;
};

// Deterministic stratified fold assignment: records are ordered inside each
// class by hash(seed, index) and dealt round-robin.
std::vector<int> stratified_folds(std::span<const uint8_t> labels, int n_folds, uint64_t seed);

// 10-fold CV cutoff selection at maximal Youden index: train on nine folds,
// score the held-out fold, pool all out-of-fold scores, then pick the
// candidate threshold (midpoints of consecutive distinct pooled scores,
// plus 0 and 1) with the largest pooled Youden; ties resolve to the
// smallest threshold.
CutoffSelection select_cutoff_cv(const cohort::FeatureMatrix& X, const std::vector<uint8_t>& y,
                                 const gbt::GbtParams& params, int n_folds, uint64_t seed);

std::string roc_to_csv(const RocCurve& roc);

// Self-contained SVG plot: unit axes, reference diagonal, one polyline per
// curve, AUC annotations.
std::string roc_to_svg(const std::vector<std::pair<std::string, RocCurve>>& curves);

}  // namespace lvo::metrics
