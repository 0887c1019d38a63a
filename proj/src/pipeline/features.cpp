#include "pipeline/features.hpp"

#include <algorithm>
#include <cmath>

#include "cohort/manifest.hpp"

namespace lvo::pipeline {

LevelSpec LevelSpec::make(int level, const std::vector<int>& image_features) {
    if (level < 1 || level > 3) throw ValidationError("LevelSpec: level must be 1, 2 or 3");
    LevelSpec spec;
    spec.level = level;
    spec.columns = cohort::level_columns(std::min(level, 2));
    if (level == 3) {
        spec.image_feature_indices = image_features;
        for (int idx : image_features) spec.columns.push_back("img_" + std::to_string(idx));
    }
    return spec;
}

cohort::FeatureMatrix vectorize(const cohort::Cohort& records, const LevelSpec& spec,
                                const std::map<std::string, std::vector<double>>* image_features) {
    std::vector<cohort::ColKind> kinds;
    size_t n_tabular = 0;
    for (const auto& name : spec.columns) {
        if (name.rfind("img_", 0) == 0) {
            kinds.push_back(cohort::ColKind::continuous);
        } else {
            int mi = cohort::manifest_index(name);
            if (mi < 0) throw ValidationError("vectorize: unknown column '" + name + "'");
            kinds.push_back(cohort::kManifest[static_cast<size_t>(mi)].kind);
            ++n_tabular;
        }
    }

    cohort::FeatureMatrix X(records.size(), spec.columns, kinds);
    for (size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        for (size_t c = 0; c < n_tabular; ++c) {
            auto v = rec.feature(spec.columns[c]);
            if (v) X.set(r, c, *v);
        }
        if (spec.level == 3 && !spec.image_feature_indices.empty()) {
            const std::vector<double>* feats = nullptr;
            if (image_features) {
                auto it = image_features->find(rec.id);
                if (it != image_features->end()) feats = &it->second;
            }
            for (size_t c = 0; c < spec.image_feature_indices.size(); ++c) {
                int raw = spec.image_feature_indices[c];
                if (feats && raw >= 0 && raw < static_cast<int>(feats->size()))
                    X.set(r, n_tabular + c, (*feats)[static_cast<size_t>(raw)]);
                // otherwise stays masked; the GBT routes it natively
            }
        }
    }
    return X;
}

std::vector<uint8_t> labels_of(const cohort::Cohort& records) {
    std::vector<uint8_t> y;
    y.reserve(records.size());
    for (const auto& rec : records) y.push_back(rec.lvo ? 1 : 0);
    return y;
}

SliceChoice select_slice(const imaging::SegMask& mask) {
    SliceChoice out;
    long best = -1;
    for (int z = 0; z < mask.nz; ++z) {
        long area = 0;
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) area += mask.at(x, y, z);
        if (area > best) {
            best = area;
            out.index = z;
        }
    }
    if (best == 0) {
        out.index = mask.nz / 2;
        out.fallback = true;
    }
    return out;
}

std::vector<SelectedColumn> select_top_k(const std::vector<std::vector<double>>& features,
                                         const std::vector<uint8_t>& labels, int k) {
    if (k < 0) throw ValidationError("select_top_k: k must be >= 0");
    if (features.size() != labels.size())
        throw ValidationError("select_top_k: row/label count mismatch");
    if (k == 0) return {};
    if (features.size() < 4) throw ValidationError("select_top_k: need at least 4 rows");
    const size_t d = features.front().size();
    for (const auto& row : features)
        if (row.size() != d) throw ValidationError("select_top_k: ragged feature rows");
    if (static_cast<size_t>(k) > d)
        throw ValidationError("select_top_k: k exceeds the column count");

    std::vector<double> a, b;
    a.reserve(features.size());
    b.reserve(features.size());
    std::vector<SelectedColumn> scored(d);
    for (size_t c = 0; c < d; ++c) {
        a.clear();
        b.clear();
        for (size_t r = 0; r < features.size(); ++r)
            (labels[r] ? a : b).push_back(features[r][c]);
        if (a.size() < 2 || b.size() < 2)
            throw ValidationError("select_top_k: both classes need at least 2 rows");
        auto tt = cohort::two_sample_t(a, b, cohort::TVariant::pooled);
        scored[c] = {static_cast<int>(c), tt.p, tt.t};
    }
    std::stable_sort(scored.begin(), scored.end(), [](const SelectedColumn& l,
                                                      const SelectedColumn& r) {
        if (l.p != r.p) return l.p < r.p;
        double la = std::fabs(l.t), ra = std::fabs(r.t);
        if (la != ra) return la > ra;
        return l.index < r.index;
    });
    scored.resize(static_cast<size_t>(k));
    return scored;
}

}  // namespace lvo::pipeline
