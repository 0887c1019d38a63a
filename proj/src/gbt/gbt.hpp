#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cohort/feature_matrix.hpp"

namespace lvo::gbt {

struct GbtParams {
    int num_rounds = 100;
    double learning_rate = 0.1;
    int max_depth = 3;
    double lambda = 1.0;            // L2 leaf regularization
    double gamma = 0.0;             // minimum split gain
    double min_child_weight = 1.0;  // minimum hessian sum per child
    double base_margin = 0.0;
    uint64_t seed = 0;
};

void validate_params(const GbtParams& p);

// Binary tree stored as a flat node array; node 0 is the root. Routing is
// total: value < threshold goes left, value >= threshold goes right,
// missing follows default_left.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    int left = -1;
    int right = -1;
    double weight = 0.0;  // leaf margin contribution (unscaled)
};

struct Tree {
    std::vector<TreeNode> nodes;
    double route(const double* values, const uint8_t* missing) const;
};

class TreeEnsemble {
public:
    GbtParams params;
    std::vector<Tree> trees;
    // Hash of (column name, kind) pairs; predictions refuse mismatched rows.
    uint64_t schema_fingerprint = 0;
    size_t n_features = 0;

    // margin = base_margin + learning_rate * sum of routed leaf weights
    double predict_margin(const double* values, const uint8_t* missing, size_t n) const;
    double predict_proba(const double* values, const uint8_t* missing, size_t n) const;

    double predict_margin(const cohort::FeatureMatrix& X, size_t row) const;
    double predict_proba(const cohort::FeatureMatrix& X, size_t row) const;
};

uint64_t schema_fingerprint(const cohort::FeatureMatrix& X);

// Second-order boosting with logistic loss and exact greedy splits.
// Missing rows are tried on both sides of every candidate split and the
// more profitable side becomes the learned default direction. Equal-gain
// ties resolve to the lowest feature index, then the lowest threshold,
// then default-left.
TreeEnsemble train_gbt(const cohort::FeatureMatrix& X, const std::vector<uint8_t>& y,
                       const GbtParams& params);

// Margins are clamped to +-30 before the logistic; probabilities stay
// inside (9e-14, 1 - 9e-14).
double logistic(double margin);

// "gbt-v1" JSON document; 64-bit reals serialized as hexadecimal floats so
// reload is bit-exact.
std::string to_json(const TreeEnsemble& model);
TreeEnsemble gbt_from_json(const std::string& text);
void save_gbt(const TreeEnsemble& model, const std::string& path);
TreeEnsemble load_gbt(const std::string& path);

}  // namespace lvo::gbt
