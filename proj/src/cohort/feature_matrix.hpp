#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cohort/manifest.hpp"
#include "common.hpp"

namespace lvo::cohort {

// Dense n x d matrix with an explicit missing mask. Values at masked
// positions are unspecified and must never be read.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(size_t n_rows, std::vector<std::string> col_names, std::vector<ColKind> col_kind)
        : n_rows_(n_rows),
          n_cols_(col_names.size()),
          col_names_(std::move(col_names)),
          col_kind_(std::move(col_kind)),
          values_(n_rows * n_cols_, 0.0),
          missing_(n_rows * n_cols_, 0) {
        if (n_cols_ == 0) throw ValidationError("FeatureMatrix: d must be > 0");
        if (col_kind_.size() != n_cols_)
            throw ValidationError("FeatureMatrix: kind list must match columns");
        // Freshly built matrices start fully missing; set() marks observed.
        std::fill(missing_.begin(), missing_.end(), 1);
    }

    size_t rows() const { return n_rows_; }
    size_t cols() const { return n_cols_; }
    const std::vector<std::string>& col_names() const { return col_names_; }
    const std::vector<ColKind>& col_kinds() const { return col_kind_; }

    bool is_missing(size_t r, size_t c) const { return missing_[r * n_cols_ + c] != 0; }

    double at(size_t r, size_t c) const { return values_[r * n_cols_ + c]; }

    void set(size_t r, size_t c, double v) {
        values_[r * n_cols_ + c] = v;
        missing_[r * n_cols_ + c] = 0;
    }

    void set_missing(size_t r, size_t c) { missing_[r * n_cols_ + c] = 1; }

    // Observed binary columns must hold only 0/1; observed values finite.
    void check_invariants() const {
        for (size_t r = 0; r < n_rows_; ++r) {
            for (size_t c = 0; c < n_cols_; ++c) {
                if (is_missing(r, c)) continue;
                double v = at(r, c);
                if (!std::isfinite(v))
                    throw ValidationError("FeatureMatrix: non-finite value at (" +
                                          std::to_string(r) + "," + std::to_string(c) + ")");
                if (col_kind_[c] == ColKind::binary && v != 0.0 && v != 1.0)
                    throw ValidationError("FeatureMatrix: binary column '" + col_names_[c] +
                                          "' holds non 0/1 value");
            }
        }
    }

private:
    size_t n_rows_ = 0;
    size_t n_cols_ = 0;
    std::vector<std::string> col_names_;
    std::vector<ColKind> col_kind_;
    std::vector<double> values_;
    std::vector<uint8_t> missing_;
};

}  // namespace lvo::cohort
