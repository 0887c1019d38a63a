#include "gbt/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lvo::gbt {

using json = nlohmann::ordered_json;

void validate_params(const GbtParams& p) {
    if (p.num_rounds < 0) throw ValidationError("gbt params: num_rounds must be >= 0");
    if (p.max_depth < 1) throw ValidationError("gbt params: max_depth must be >= 1");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
        throw ValidationError("gbt params: learning_rate must be in (0,1]");
    if (p.lambda < 0.0 || p.gamma < 0.0 || p.min_child_weight < 0.0)
        throw ValidationError("gbt params: lambda, gamma, min_child_weight must be >= 0");
}

double logistic(double margin) {
    double m = std::clamp(margin, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-m));
}

double Tree::route(const double* values, const uint8_t* missing) const {
    int idx = 0;
    while (!nodes[static_cast<size_t>(idx)].is_leaf) {
        const TreeNode& nd = nodes[static_cast<size_t>(idx)];
        bool go_left;
        if (missing[nd.feature])
            go_left = nd.default_left;
        else
            go_left = values[nd.feature] < nd.threshold;
        idx = go_left ? nd.left : nd.right;
    }
    return nodes[static_cast<size_t>(idx)].weight;
}

uint64_t schema_fingerprint(const cohort::FeatureMatrix& X) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&](uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ull;
    };
    for (size_t c = 0; c < X.cols(); ++c) {
        for (char ch : X.col_names()[c]) mix(static_cast<uint8_t>(ch));
        mix(X.col_kinds()[c] == cohort::ColKind::binary ? 1 : 2);
        mix(0);
    }
    return h;
}

double TreeEnsemble::predict_margin(const double* values, const uint8_t* missing,
                                    size_t n) const {
    if (n != n_features)
        throw ValidationError("gbt predict: row has " + std::to_string(n) +
                              " features, model expects " + std::to_string(n_features));
    double sum = 0.0;
    for (const Tree& t : trees) sum += t.route(values, missing);
    return params.base_margin + params.learning_rate * sum;
}

double TreeEnsemble::predict_proba(const double* values, const uint8_t* missing,
                                   size_t n) const {
    return logistic(predict_margin(values, missing, n));
}

namespace {

void extract_row(const cohort::FeatureMatrix& X, size_t row, std::vector<double>& vals,
                 std::vector<uint8_t>& miss) {
    vals.resize(X.cols());
    miss.resize(X.cols());
    for (size_t c = 0; c < X.cols(); ++c) {
        miss[c] = X.is_missing(row, c) ? 1 : 0;
        vals[c] = miss[c] ? 0.0 : X.at(row, c);
    }
}

}  // namespace

double TreeEnsemble::predict_margin(const cohort::FeatureMatrix& X, size_t row) const {
    if (schema_fingerprint != 0 && lvo::gbt::schema_fingerprint(X) != schema_fingerprint)
        throw ValidationError("gbt predict: feature schema does not match the trained model");
    std::vector<double> vals;
    std::vector<uint8_t> miss;
    extract_row(X, row, vals, miss);
    return predict_margin(vals.data(), miss.data(), vals.size());
}

double TreeEnsemble::predict_proba(const cohort::FeatureMatrix& X, size_t row) const {
    return logistic(predict_margin(X, row));
}

namespace {

constexpr double kLeafClamp = 10.0;

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
};

double gain_term(double g, double h, double lambda) { return g * g / (h + lambda); }

// Exact greedy search over one node's samples. Sum order is part of the
// behavioural contract (it pins tie outcomes): left sums accumulate over
// observed values ascending, missing sums in row order, right sums are the
// node totals minus the left sums.
SplitChoice find_best_split(const cohort::FeatureMatrix& X, const std::vector<double>& g,
                            const std::vector<double>& h, const std::vector<int>& samples,
                            const GbtParams& prm) {
    double g_total = 0.0, h_total = 0.0;
    for (int i : samples) {
        g_total += g[static_cast<size_t>(i)];
        h_total += h[static_cast<size_t>(i)];
    }
    const double parent_term = gain_term(g_total, h_total, prm.lambda);

    SplitChoice best;
    std::vector<std::pair<double, int>> sorted;  // (value, row)
    for (size_t f = 0; f < X.cols(); ++f) {
        sorted.clear();
        double g_miss = 0.0, h_miss = 0.0;
        for (int i : samples) {
            if (X.is_missing(static_cast<size_t>(i), f)) {
                g_miss += g[static_cast<size_t>(i)];
                h_miss += h[static_cast<size_t>(i)];
            } else {
                sorted.emplace_back(X.at(static_cast<size_t>(i), f), i);
            }
        }
        if (sorted.size() < 2) continue;
        std::sort(sorted.begin(), sorted.end());

        double g_obs = 0.0, h_obs = 0.0;
        for (size_t k = 0; k + 1 < sorted.size(); ++k) {
            g_obs += g[static_cast<size_t>(sorted[k].second)];
            h_obs += h[static_cast<size_t>(sorted[k].second)];
            if (sorted[k + 1].first == sorted[k].first) continue;
            double threshold = sorted[k].first + 0.5 * (sorted[k + 1].first - sorted[k].first);

            for (int side = 0; side < 2; ++side) {
                const bool miss_left = (side == 0);
                double g_left = miss_left ? g_obs + g_miss : g_obs;
                double h_left = miss_left ? h_obs + h_miss : h_obs;
                double g_right = g_total - g_left;
                double h_right = h_total - h_left;
                if (h_left < prm.min_child_weight || h_right < prm.min_child_weight) continue;
                double gain = 0.5 * (gain_term(g_left, h_left, prm.lambda) +
                                     gain_term(g_right, h_right, prm.lambda) - parent_term) -
                              prm.gamma;
                // Strict improvement keeps the first candidate on ties, which
                // realises the documented tie-break (lowest feature, lowest
                // threshold, then default-left).
                if (gain > best.gain || (!best.found && gain > 0.0)) {
                    best.found = true;
                    best.feature = static_cast<int>(f);
                    best.threshold = threshold;
                    best.default_left = miss_left;
                    best.gain = gain;
                }
            }
        }
    }
    return best;
}

double leaf_weight(const std::vector<double>& g, const std::vector<double>& h,
                   const std::vector<int>& samples, double lambda) {
    double gs = 0.0, hs = 0.0;
    for (int i : samples) {
        gs += g[static_cast<size_t>(i)];
        hs += h[static_cast<size_t>(i)];
    }
    return std::clamp(-gs / (hs + lambda), -kLeafClamp, kLeafClamp);
}

int grow_node(Tree& tree, const cohort::FeatureMatrix& X, const std::vector<double>& g,
              const std::vector<double>& h, const std::vector<int>& samples, int depth,
              const GbtParams& prm) {
    int node_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    SplitChoice split;
    if (depth < prm.max_depth && samples.size() >= 2)
        split = find_best_split(X, g, h, samples, prm);

    if (!split.found || split.gain <= 0.0) {
        tree.nodes[static_cast<size_t>(node_index)].is_leaf = true;
        tree.nodes[static_cast<size_t>(node_index)].weight =
            leaf_weight(g, h, samples, prm.lambda);
        return node_index;
    }

    std::vector<int> left_set, right_set;
    for (int i : samples) {
        bool go_left;
        if (X.is_missing(static_cast<size_t>(i), static_cast<size_t>(split.feature)))
            go_left = split.default_left;
        else
            go_left = X.at(static_cast<size_t>(i), static_cast<size_t>(split.feature)) <
                      split.threshold;
        (go_left ? left_set : right_set).push_back(i);
    }

    int left_child = grow_node(tree, X, g, h, left_set, depth + 1, prm);
    int right_child = grow_node(tree, X, g, h, right_set, depth + 1, prm);

    TreeNode& nd = tree.nodes[static_cast<size_t>(node_index)];
    nd.is_leaf = false;
    nd.feature = split.feature;
    nd.threshold = split.threshold;
    nd.default_left = split.default_left;
    nd.left = left_child;
    nd.right = right_child;
    return node_index;
}

}  // namespace

TreeEnsemble train_gbt(const cohort::FeatureMatrix& X, const std::vector<uint8_t>& y,
                       const GbtParams& params) {
    validate_params(params);
    const size_t n = X.rows();
    if (n < 2) throw ValidationError("gbt train: need at least 2 rows");
    if (y.size() != n) throw ValidationError("gbt train: label count mismatch");
    X.check_invariants();

    bool has_pos = false, has_neg = false;
    for (uint8_t v : y) (v ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw ValidationError("gbt train: both classes must be present");

    TreeEnsemble model;
    model.params = params;
    model.n_features = X.cols();
    model.schema_fingerprint = schema_fingerprint(X);

    std::vector<double> margin(n, params.base_margin);
    std::vector<double> g(n), h(n);
    std::vector<int> all(n);
    for (size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);

    std::vector<double> row_vals;
    std::vector<uint8_t> row_miss;
    for (int round = 0; round < params.num_rounds; ++round) {
        for (size_t i = 0; i < n; ++i) {
            double p = logistic(margin[i]);
            g[i] = p - static_cast<double>(y[i]);
            h[i] = p * (1.0 - p);
        }
        Tree tree;
        grow_node(tree, X, g, h, all, 0, params);
        for (size_t i = 0; i < n; ++i) {
            extract_row(X, i, row_vals, row_miss);
            margin[i] += params.learning_rate * tree.route(row_vals.data(), row_miss.data());
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

namespace {

std::string hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + s.size())
        throw FormatError("gbt-v1: malformed hex float '" + s + "'");
    return v;
}

json node_to_json(const Tree& tree, int index) {
    const TreeNode& nd = tree.nodes[static_cast<size_t>(index)];
    json j;
    if (nd.is_leaf) {
        j["leaf"] = hex_double(nd.weight);
        return j;
    }
    j["feature"] = nd.feature;
    j["threshold"] = hex_double(nd.threshold);
    j["default"] = nd.default_left ? "left" : "right";
    j["left"] = node_to_json(tree, nd.left);
    j["right"] = node_to_json(tree, nd.right);
    return j;
}

int node_from_json(Tree& tree, const json& j) {
    int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        tree.nodes[static_cast<size_t>(index)].weight =
            parse_hex_double(j.at("leaf").get<std::string>());
        return index;
    }
    int feature = j.at("feature").get<int>();
    double threshold = parse_hex_double(j.at("threshold").get<std::string>());
    bool default_left = j.at("default").get<std::string>() == "left";
    int left = node_from_json(tree, j.at("left"));
    int right = node_from_json(tree, j.at("right"));
    TreeNode& nd = tree.nodes[static_cast<size_t>(index)];
    nd.is_leaf = false;
    nd.feature = feature;
    nd.threshold = threshold;
    nd.default_left = default_left;
    nd.left = left;
    nd.right = right;
    return index;
}

}  // namespace

std::string to_json(const TreeEnsemble& model) {
    json j;
    j["format"] = "gbt-v1";
    j["params"] = {{"num_rounds", model.params.num_rounds},
                   {"learning_rate", hex_double(model.params.learning_rate)},
                   {"max_depth", model.params.max_depth},
                   {"lambda", hex_double(model.params.lambda)},
                   {"gamma", hex_double(model.params.gamma)},
                   {"min_child_weight", hex_double(model.params.min_child_weight)},
                   {"base_margin", hex_double(model.params.base_margin)},
                   {"seed", model.params.seed}};
    j["n_features"] = model.n_features;
    char fp[19];
    std::snprintf(fp, sizeof(fp), "0x%016llx",
                  static_cast<unsigned long long>(model.schema_fingerprint));
    j["schema_fingerprint"] = fp;
    json trees = json::array();
    for (const Tree& t : model.trees) trees.push_back(node_to_json(t, 0));
    j["trees"] = std::move(trees);
    return j.dump(2) + "\n";
}

TreeEnsemble gbt_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("gbt-v1: invalid JSON: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != "gbt-v1")
        throw FormatError("gbt-v1: missing or wrong format tag (expected \"gbt-v1\")");
    try {
        TreeEnsemble model;
        const json& p = j.at("params");
        model.params.num_rounds = p.at("num_rounds").get<int>();
        model.params.learning_rate = parse_hex_double(p.at("learning_rate").get<std::string>());
        model.params.max_depth = p.at("max_depth").get<int>();
        model.params.lambda = parse_hex_double(p.at("lambda").get<std::string>());
        model.params.gamma = parse_hex_double(p.at("gamma").get<std::string>());
        model.params.min_child_weight =
            parse_hex_double(p.at("min_child_weight").get<std::string>());
        model.params.base_margin = parse_hex_double(p.at("base_margin").get<std::string>());
        model.params.seed = p.at("seed").get<uint64_t>();
        model.n_features = j.at("n_features").get<size_t>();
        model.schema_fingerprint =
            std::strtoull(j.at("schema_fingerprint").get<std::string>().c_str(), nullptr, 16);
        for (const json& tj : j.at("trees")) {
            Tree t;
            node_from_json(t, tj);
            model.trees.push_back(std::move(t));
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("gbt-v1: malformed document: ") + e.what());
    }
}

void save_gbt(const TreeEnsemble& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write model file '" + path + "'");
    out << to_json(model);
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

TreeEnsemble load_gbt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open model file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return gbt_from_json(ss.str());
}

}  // namespace lvo::gbt
