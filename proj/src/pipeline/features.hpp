#pragma once

#include <map>
#include <string>
#include <vector>

#include "cohort/feature_matrix.hpp"
#include "cohort/record.hpp"
#include "cohort/stats.hpp"
#include "imaging/volume.hpp"

namespace lvo::pipeline {

// Ordered model columns for a hierarchy level. Level 1 holds the 9 bedside
// columns, level 2 the full 24 tabular columns (level-1 list is a prefix),
// level 3 appends the selected image-feature columns.
struct LevelSpec {
    int level = 1;
    std::vector<std::string> columns;
    std::vector<int> image_feature_indices;  // into the raw feature vector, level 3 only

    static LevelSpec make(int level, const std::vector<int>& image_features = {});
};

// Records to matrix in manifest order; missing fields stay masked, binary
// fields encode 0/1. For level 3 the image features come from a per-record
// map keyed by id; records without an entry get those columns masked.
cohort::FeatureMatrix vectorize(const cohort::Cohort& records, const LevelSpec& spec,
                                const std::map<std::string, std::vector<double>>* image_features
                                = nullptr);

std::vector<uint8_t> labels_of(const cohort::Cohort& records);

struct SliceChoice {
    int index = 0;
    bool fallback = false;  // all-zero mask, middle slice returned
};

// Slice with the largest segmented area; ties take the lowest index.
SliceChoice select_slice(const imaging::SegMask& mask);

struct SelectedColumn {
    int index = 0;
    double p = 1.0;
    double t = 0.0;
};

// Pooled two-sample t-test per column against the labels; the k smallest
// p-values win, ties broken by larger |t| then lower index. Callers must
// pass training rows only.
std::vector<SelectedColumn> select_top_k(const std::vector<std::vector<double>>& features,
                                         const std::vector<uint8_t>& labels, int k);

}  // namespace lvo::pipeline
