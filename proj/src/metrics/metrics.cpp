#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cohort/csv.hpp"
#include "rng.hpp"

namespace lvo::metrics {

namespace {

void check_two_classes(std::span<const uint8_t> labels) {
    bool pos = false, neg = false;
    for (uint8_t v : labels) (v ? pos : neg) = true;
    if (!pos || !neg)
        throw ValidationError("metrics: both classes must be present");
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size())
        throw ValidationError("roc_curve: scores and labels differ in length");
    check_two_classes(labels);
    for (double s : scores)
        if (!std::isfinite(s)) throw ValidationError("roc_curve: scores must be finite");

    long n_pos = 0, n_neg = 0;
    for (uint8_t v : labels) (v ? n_pos : n_neg)++;

    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocCurve roc;
    roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long tp = 0, fp = 0;
    size_t i = 0;
    double auc2 = 0.0;  // accumulated via trapezoids
    double prev_tpr = 0.0, prev_fpr = 0.0;
    while (i < order.size()) {
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        auc2 += (fpr - prev_fpr) * (tpr + prev_tpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
        roc.points.push_back({s, fpr, tpr});
    }
    roc.auc = 0.5 * auc2;
    return roc;
}

ConfusionMetrics confusion_from_counts(long tp, long fp, long tn, long fn) {
    ConfusionMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    long n = tp + fp + tn + fn;
    m.sensitivity = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
    m.accuracy = n > 0 ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
    m.youden = m.sensitivity + m.specificity - 1.0;
    return m;
}

ConfusionMetrics confusion_at(std::span<const double> scores, std::span<const uint8_t> labels,
                              double cutoff) {
    if (scores.size() != labels.size())
        throw ValidationError("confusion_at: scores and labels differ in length");
    check_two_classes(labels);
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        bool predicted = scores[i] >= cutoff;
        if (labels[i])
            (predicted ? tp : fn)++;
        else
            (predicted ? fp : tn)++;
    }
    return confusion_from_counts(tp, fp, tn, fn);
}

std::vector<int> stratified_folds(std::span<const uint8_t> labels, int n_folds, uint64_t seed) {
    if (n_folds < 2) throw ValidationError("stratified_folds: n_folds must be >= 2");
    long counts[2] = {0, 0};
    for (uint8_t v : labels) counts[v ? 1 : 0]++;
    if (counts[0] < n_folds || counts[1] < n_folds)
        throw ValidationError(
            "stratified_folds: a class has fewer samples than folds; use fewer folds");

    std::vector<int> fold(labels.size(), -1);
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::pair<uint64_t, size_t>> keyed;
        for (size_t i = 0; i < labels.size(); ++i)
            if ((labels[i] != 0) == (cls == 1)) keyed.emplace_back(hash_mix(seed, i), i);
        std::sort(keyed.begin(), keyed.end());
        for (size_t k = 0; k < keyed.size(); ++k)
            fold[keyed[k].second] = static_cast<int>(k % static_cast<size_t>(n_folds));
    }
    return fold;
}

namespace {

cohort::FeatureMatrix subset_rows(const cohort::FeatureMatrix& X, const std::vector<size_t>& rows) {
    cohort::FeatureMatrix out(rows.size(), X.col_names(), X.col_kinds());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < X.cols(); ++c)
            if (!X.is_missing(rows[r], c)) out.set(r, c, X.at(rows[r], c));
    return out;
}

}  // namespace

CutoffSelection select_cutoff_cv(const cohort::FeatureMatrix& X, const std::vector<uint8_t>& y,
                                 const gbt::GbtParams& params, int n_folds, uint64_t seed) {
    if (X.rows() != y.size()) throw ValidationError("select_cutoff_cv: label count mismatch");
    if (static_cast<int>(X.rows()) < n_folds)
        throw ValidationError("select_cutoff_cv: fewer samples than folds");
    std::vector<int> fold = stratified_folds(y, n_folds, seed);

    std::vector<double> oof_scores(X.rows(), 0.0);
    for (int k = 0; k < n_folds; ++k) {
        std::vector<size_t> train_rows, test_rows;
        for (size_t i = 0; i < X.rows(); ++i)
            (fold[i] == k ? test_rows : train_rows).push_back(i);
        cohort::FeatureMatrix Xtr = subset_rows(X, train_rows);
        std::vector<uint8_t> ytr;
        ytr.reserve(train_rows.size());
        for (size_t i : train_rows) ytr.push_back(y[i]);
        gbt::TreeEnsemble model = gbt::train_gbt(Xtr, ytr, params);
        for (size_t i : test_rows) oof_scores[i] = model.predict_proba(X, i);
    }

    // Candidate cutoffs: midpoints between consecutive distinct pooled
    // scores, plus the endpoints 0 and 1.
    std::vector<double> distinct(oof_scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> candidates;
    candidates.push_back(0.0);
    for (size_t i = 0; i + 1 < distinct.size(); ++i)
        candidates.push_back(distinct[i] + 0.5 * (distinct[i + 1] - distinct[i]));
    candidates.push_back(1.0);
    std::sort(candidates.begin(), candidates.end());

    CutoffSelection sel;
    sel.n_folds = n_folds;
    double best_youden = -2.0;
    double best_threshold = 0.0;
    for (double c : candidates) {
        double yj = confusion_at(oof_scores, y, c).youden;
        if (yj > best_youden) {  // strict: ties keep the smallest threshold
            best_youden = yj;
            best_threshold = c;
        }
    }
    sel.threshold = best_threshold;
    sel.pooled_youden = best_youden;

    for (int k = 0; k < n_folds; ++k) {
        std::vector<double> fs;
        std::vector<uint8_t> fy;
        for (size_t i = 0; i < X.rows(); ++i) {
            if (fold[i] != k) continue;
            fs.push_back(oof_scores[i]);
            fy.push_back(y[i]);
        }
        sel.per_fold.push_back({k, confusion_at(fs, fy, best_threshold).youden});
    }
    return sel;
}

std::string roc_to_csv(const RocCurve& roc) {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& p : roc.points) {
        out += std::isinf(p.threshold) ? "inf" : cohort::format_double(p.threshold);
        out += ',';
        out += cohort::format_double(p.fpr);
        out += ',';
        out += cohort::format_double(p.tpr);
        out += '\n';
    }
    return out;
}

namespace {

// Fixed 3-decimal formatting keeps SVG output byte-stable.
std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

std::string roc_to_svg(const std::vector<std::pair<std::string, RocCurve>>& curves) {
    const int size = 480, margin = 48;
    const double plot = size - 2.0 * margin;
    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return size - margin - tpr * plot; };
    static const char* palette[] = {"#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b7950b"};

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) +
           "\" height=\"" + std::to_string(size) + "\" viewBox=\"0 0 " + std::to_string(size) +
           " " + std::to_string(size) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(margin) +
           "\" width=\"" + fixed3(plot) + "\" height=\"" + fixed3(plot) +
           "\" fill=\"none\" stroke=\"#555\"/>\n";
    svg += "<line x1=\"" + fixed3(px(0)) + "\" y1=\"" + fixed3(py(0)) + "\" x2=\"" +
           fixed3(px(1)) + "\" y2=\"" + fixed3(py(1)) +
           "\" stroke=\"#999\" stroke-dasharray=\"6,4\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double f = tick / 4.0;
        svg += "<text x=\"" + fixed3(px(f) - 10) + "\" y=\"" + std::to_string(size - margin + 18) +
               "\" font-size=\"11\" fill=\"#333\">" + fixed3(f).substr(0, 4) + "</text>\n";
        svg += "<text x=\"" + std::to_string(margin - 34) + "\" y=\"" + fixed3(py(f) + 4) +
               "\" font-size=\"11\" fill=\"#333\">" + fixed3(f).substr(0, 4) + "</text>\n";
    }
    svg += "<text x=\"" + std::to_string(size / 2 - 60) + "\" y=\"" + std::to_string(size - 10) +
           "\" font-size=\"13\" fill=\"#111\">false positive rate</text>\n";
    svg += "<text x=\"14\" y=\"" + std::to_string(size / 2 + 50) +
           "\" font-size=\"13\" fill=\"#111\" transform=\"rotate(-90 14 " +
           std::to_string(size / 2 + 50) + ")\">true positive rate</text>\n";

    int color = 0;
    int legend_y = margin + 18;
    for (const auto& [name, roc] : curves) {
        const char* stroke = palette[color % 5];
        std::string pts;
        for (const auto& p : roc.points)
            pts += fixed3(px(p.fpr)) + "," + fixed3(py(p.tpr)) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(stroke) +
               "\" stroke-width=\"1.8\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + std::to_string(margin + 12) + "\" y=\"" + std::to_string(legend_y) +
               "\" font-size=\"12\" fill=\"" + stroke + "\">" + name +
               " (AUC " + fixed3(roc.auc) + ")</text>\n";
        legend_y += 16;
        ++color;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace lvo::metrics
