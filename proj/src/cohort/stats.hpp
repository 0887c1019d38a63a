#pragma once

#include <span>
#include <string>
#include <vector>

#include "cohort/manifest.hpp"
#include "cohort/record.hpp"

namespace lvo::cohort {

enum class TVariant : uint8_t { pooled, welch };

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
    bool degenerate = false;  // both variances zero
};

// Two-sample two-sided t-test. Pooled (Student) by default; Welch by flag.
// Degenerate zero-variance cases resolve by convention: equal means give
// (t=0, p=1), differing means give p=0 with the degenerate flag set.
TTestResult two_sample_t(std::span<const double> a, std::span<const double> b,
                         TVariant variant = TVariant::pooled);

struct Chi2Result {
    double chi2 = 0.0;
    double p = 1.0;
};

// Pearson chi-square on a 2x2 table {{a,b},{c,d}} with 1 df.
Chi2Result chi_square_2x2(double a, double b, double c, double d);

struct FeatureStats {
    std::string name;
    ColKind kind = ColKind::continuous;
    // index 0 = LVO class, 1 = non-LVO
    double mean[2] = {0.0, 0.0};      // proportion for binary columns
    double sd[2] = {0.0, 0.0};        // unused for binary columns
    int count[2] = {0, 0};            // observed (non-missing) per class
    double statistic = 0.0;
    double p = 1.0;
    bool testable = false;
    char test = 't';  // 't' or 'c' (chi-square)
};

struct CohortStats {
    int n_lvo = 0;
    int n_non = 0;
    std::vector<FeatureStats> features;
};

// Class-conditional summaries plus association tests across every manifest
// column: t-test for continuous, chi-square for binary. Missing values are
// excluded pairwise; a column that cannot be tested (fewer than 2 observed
// per class, or a degenerate chi-square margin) is reported untestable.
CohortStats cohort_stats(const Cohort& records);

std::string cohort_stats_to_csv(const CohortStats& stats);

}  // namespace lvo::cohort
