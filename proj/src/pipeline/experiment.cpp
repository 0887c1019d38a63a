#include "pipeline/experiment.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cohort/csv.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace lvo::pipeline {

using json = nlohmann::ordered_json;

namespace {

std::optional<imaging::Side> weak_side_of(const cohort::PatientRecord& rec) {
    switch (rec.weak_side) {
        case cohort::WeakSide::left: return imaging::Side::left;
        case cohort::WeakSide::right: return imaging::Side::right;
        default: return std::nullopt;
    }
}

std::vector<double> crop_slice(const imaging::CropStack& stack, int z) {
    const size_t hw = static_cast<size_t>(imaging::RoiBox::kSize) * imaging::RoiBox::kSize;
    std::vector<double> out(hw);
    std::copy(stack.data.begin() + static_cast<ptrdiff_t>(z * hw),
              stack.data.begin() + static_cast<ptrdiff_t>((z + 1) * hw), out.begin());
    return out;
}

}  // namespace

PreprocessedScan preprocess_scan(const imaging::Volume& volume, const imaging::SegMask& dot_mask,
                                 std::optional<imaging::Side> weak_side, double window_lo,
                                 double window_hi, bool ipsilateral) {
    imaging::BrainExtraction be = imaging::brain_extract(volume);
    imaging::RegistrationResult reg = imaging::register_symmetry(be.stripped);
    imaging::Volume windowed = imaging::hu_window(reg.aligned, window_lo, window_hi);
    // The brain and dot masks must move with the volume: boxes anchor on
    // the registered brain, crops pair with the registered ground truth.
    imaging::SegMask brain_reg = imaging::transform_mask_nearest(be.mask, reg.transform);
    imaging::RoiPair boxes = imaging::locate_mca_roi(windowed, brain_reg);
    imaging::HemisphereCrops crops =
        imaging::extract_hemisphere(windowed, boxes, weak_side, window_lo, window_hi, ipsilateral);

    // Registration is in-plane, so slice selection can read the original
    // ground-truth mask; the crop geometry needs the transformed one.
    SliceChoice slice = select_slice(dot_mask);
    imaging::SegMask moved_mask = imaging::transform_mask_nearest(dot_mask, reg.transform);

    PreprocessedScan out;
    out.selected_slice = slice.index;
    out.slice_fallback = slice.fallback;

    const imaging::CropStack* chosen = &crops.primary;
    if (crops.side_unknown) {
        // No lateralising sign: keep the brighter crop at the selected
        // slice, which is where a dot would raise the mean.
        out.side_auto = true;
        auto mean_at = [&](const imaging::CropStack& st) {
            std::vector<double> img = crop_slice(st, slice.index);
            double sum = 0.0;
            for (double v : img) sum += v;
            return sum;
        };
        chosen = mean_at(crops.primary) >= mean_at(*crops.secondary) ? &crops.primary
                                                                     : &crops.secondary.value();
    }
    out.side = chosen->hemisphere;
    out.image = crop_slice(*chosen, slice.index);

    imaging::RoiBox box = chosen->hemisphere == imaging::Side::left ? boxes.left : boxes.right;
    imaging::CropStack mask_crop = imaging::crop_mask_stack(moved_mask, box);
    const size_t hw = static_cast<size_t>(imaging::RoiBox::kSize) * imaging::RoiBox::kSize;
    out.mask.resize(hw);
    for (size_t i = 0; i < hw; ++i)
        out.mask[i] =
            mask_crop.data[static_cast<size_t>(slice.index) * hw + i] != 0.0 ? 1 : 0;
    return out;
}

PreprocessedScans preprocess_all(const cohort::Cohort& records, const ScanStore& scans,
                                 const ExperimentConfig& config) {
    std::vector<const cohort::PatientRecord*> with_scan;
    for (const auto& rec : records)
        if (rec.scan_id && scans.count(*rec.scan_id)) with_scan.push_back(&rec);

    // Per-scan work is independent; results merge by index.
    std::vector<PreprocessedScan> done(with_scan.size());
    parallel_for(with_scan.size(), [&](size_t i) {
        const auto& rec = *with_scan[i];
        const ScanRecord& scan = scans.at(*rec.scan_id);
        done[i] = preprocess_scan(scan.volume, scan.dot_mask, weak_side_of(rec),
                                  config.window_lo, config.window_hi, config.ipsilateral);
    });

    PreprocessedScans out;
    for (size_t i = 0; i < with_scan.size(); ++i)
        out.emplace(*with_scan[i]->scan_id, std::move(done[i]));
    return out;
}

Split split_cohort(const std::vector<uint8_t>& labels, double train_fraction, bool stratified,
                   uint64_t seed) {
    const size_t n = labels.size();
    if (n < 4) throw ValidationError("split: need at least 4 records");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split: train_fraction must be in (0,1)");
    size_t target = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));
    target = std::clamp<size_t>(target, 2, n - 2);

    Split split;
    if (stratified) {
        size_t n_pos = 0;
        for (uint8_t v : labels) n_pos += v ? 1 : 0;
        size_t n_neg = n - n_pos;
        if (n_pos < 2 || n_neg < 2)
            throw ValidationError("split: each class needs at least 2 records");
        size_t pos_target = static_cast<size_t>(
            std::llround(train_fraction * static_cast<double>(n_pos)));
        pos_target = std::clamp<size_t>(pos_target, 1, n_pos - 1);
        size_t neg_target = target - pos_target;
        neg_target = std::clamp<size_t>(neg_target, 1, n_neg - 1);
        for (int cls = 0; cls < 2; ++cls) {
            std::vector<std::pair<uint64_t, size_t>> keyed;
            for (size_t i = 0; i < n; ++i)
                if ((labels[i] != 0) == (cls == 1)) keyed.emplace_back(hash_mix(seed, i), i);
            std::sort(keyed.begin(), keyed.end());
            size_t take = cls == 1 ? pos_target : neg_target;
            for (size_t k = 0; k < keyed.size(); ++k)
                (k < take ? split.train : split.test).push_back(keyed[k].second);
        }
    } else {
        std::vector<std::pair<uint64_t, size_t>> keyed;
        for (size_t i = 0; i < n; ++i) keyed.emplace_back(hash_mix(seed, i), i);
        std::sort(keyed.begin(), keyed.end());
        for (size_t k = 0; k < keyed.size(); ++k)
            (k < target ? split.train : split.test).push_back(keyed[k].second);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());

    auto has_both = [&](const std::vector<size_t>& rows) {
        bool pos = false, neg = false;
        for (size_t i : rows) (labels[i] ? pos : neg) = true;
        return pos && neg;
    };
    if (!has_both(split.train) || !has_both(split.test))
        throw ValidationError("split: both classes required in train and test");
    return split;
}

namespace {

cohort::FeatureMatrix take_rows(const cohort::FeatureMatrix& X, const std::vector<size_t>& rows) {
    cohort::FeatureMatrix out(rows.size(), X.col_names(), X.col_kinds());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < X.cols(); ++c)
            if (!X.is_missing(rows[r], c)) out.set(r, c, X.at(rows[r], c));
    return out;
}

}  // namespace

LevelResult evaluate_level(int level, const cohort::FeatureMatrix& X,
                           const std::vector<uint8_t>& y, const Split& split,
                           const ExperimentConfig& config) {
    cohort::FeatureMatrix Xtr = take_rows(X, split.train);
    std::vector<uint8_t> ytr;
    for (size_t i : split.train) ytr.push_back(y[i]);

    metrics::CutoffSelection cut = metrics::select_cutoff_cv(
        Xtr, ytr, config.gbt, config.cv_folds, hash_mix(config.seed, 0xcf00 + level));
    gbt::TreeEnsemble model = gbt::train_gbt(Xtr, ytr, config.gbt);

    std::vector<double> test_scores;
    std::vector<uint8_t> ytest;
    for (size_t i : split.test) {
        test_scores.push_back(model.predict_proba(X, i));
        ytest.push_back(y[i]);
    }

    LevelResult res;
    res.level = level;
    res.cutoff = cut.threshold;
    metrics::ConfusionMetrics cm = metrics::confusion_at(test_scores, ytest, cut.threshold);
    res.sensitivity = cm.sensitivity;
    res.specificity = cm.specificity;
    res.youden = cm.youden;
    res.accuracy = cm.accuracy;
    res.roc = metrics::roc_curve(test_scores, ytest);
    res.auc = res.roc.auc;
    return res;
}

fcn::Dataset fcn_training_set(const cohort::Cohort& records, const PreprocessedScans& prep,
                              const std::vector<size_t>& train_rows, int max_crops) {
    fcn::Dataset out;
    const size_t cap = static_cast<size_t>(std::max(2, max_crops));
    std::vector<size_t> pos, neg;
    for (size_t i : train_rows) {
        const auto& rec = records[i];
        if (!rec.scan_id || !prep.count(*rec.scan_id)) continue;
        const PreprocessedScan& ps = prep.at(*rec.scan_id);
        bool has_dot = false;
        for (uint8_t m : ps.mask)
            if (m) {
                has_dot = true;
                break;
            }
        (has_dot ? pos : neg).push_back(i);
    }
    for (size_t k = 0; k < pos.size() && out.images.size() < cap / 2; ++k) {
        const PreprocessedScan& ps = prep.at(*records[pos[k]].scan_id);
        out.images.push_back(ps.image);
        out.masks.emplace_back(ps.mask.begin(), ps.mask.end());
    }
    for (size_t k = 0; k < neg.size() && out.images.size() < cap; ++k) {
        const PreprocessedScan& ps = prep.at(*records[neg[k]].scan_id);
        out.images.push_back(ps.image);
        out.masks.emplace_back(ps.image.size(), 0.0);
    }
    return out;
}

fcn::FcnModel train_level3_fcn(const cohort::Cohort& records, const PreprocessedScans& prep,
                               const std::vector<size_t>& train_rows,
                               const ExperimentConfig& config) {
    fcn::FcnModel model = fcn::init_model(config.fcn_config, hash_mix(config.seed, 0xfc01));
    fcn::Dataset train_set =
        fcn_training_set(records, prep, train_rows, config.max_fcn_train_crops);
    if (!train_set.images.empty() && config.fcn_epochs > 0) {
        fcn::TrainState ts;
        ts.optimizer = fcn::Optimizer::adam;
        ts.learning_rate = config.fcn_learning_rate;
        ts.batch_size = config.fcn_batch_size;
        ts.epochs = config.fcn_epochs;
        ts.loss = fcn::LossKind::bce_dice;
        ts.seed = hash_mix(config.seed, 0xfc02);
        fcn::train_fcn(model, train_set, ts);
    }
    return model;
}

ExperimentReport run_experiment(const cohort::Cohort& records, const PreprocessedScans& prep,
                                const ExperimentConfig& config) {
    std::vector<uint8_t> y = labels_of(records);
    Split split = split_cohort(y, config.train_fraction, config.stratified_split,
                               hash_mix(config.seed, 0x5b17));

    ExperimentReport report;
    report.seed = config.seed;
    report.n_train = split.train.size();
    report.n_test = split.test.size();

    if (config.run_level[0]) {
        cohort::FeatureMatrix X1 = vectorize(records, LevelSpec::make(1));
        report.levels.push_back(evaluate_level(1, X1, y, split, config));
    }
    if (config.run_level[1]) {
        cohort::FeatureMatrix X2 = vectorize(records, LevelSpec::make(2));
        report.levels.push_back(evaluate_level(2, X2, y, split, config));
    }
    if (!config.run_level[2]) return report;

    // --- Level 3 ---
    fcn::FcnModel seg_model = train_level3_fcn(records, prep, split.train, config);

    std::vector<const cohort::PatientRecord*> with_scan;
    for (const auto& rec : records)
        if (rec.scan_id && prep.count(*rec.scan_id)) with_scan.push_back(&rec);
    std::vector<std::vector<double>> extracted(with_scan.size());
    parallel_for(with_scan.size(), [&](size_t i) {
        extracted[i] = fcn::extract_features(seg_model, prep.at(*with_scan[i]->scan_id).image);
    });
    std::map<std::string, std::vector<double>> image_features;
    for (size_t i = 0; i < with_scan.size(); ++i)
        image_features[with_scan[i]->id] = std::move(extracted[i]);

    // Top-k image columns by training-row t-tests.
    std::vector<std::vector<double>> train_feats;
    std::vector<uint8_t> train_feat_labels;
    for (size_t i : split.train) {
        auto it = image_features.find(records[i].id);
        if (it == image_features.end()) continue;
        train_feats.push_back(it->second);
        train_feat_labels.push_back(y[i]);
    }
    std::vector<int> selected;
    if (train_feats.size() >= 4) {
        int k = std::min<int>(config.top_k,
                              static_cast<int>(train_feats.front().size()));
        for (const auto& col : select_top_k(train_feats, train_feat_labels, k))
            selected.push_back(col.index);
    }

    cohort::FeatureMatrix X3 = vectorize(records, LevelSpec::make(3, selected), &image_features);
    LevelResult res3 = evaluate_level(3, X3, y, split, config);
    res3.selected_image_features = selected;
    report.levels.push_back(std::move(res3));
    return report;
}

ExperimentReport run_experiment(const cohort::Cohort& records, const ScanStore& scans,
                                const ExperimentConfig& config) {
    PreprocessedScans prep;
    if (config.run_level[2]) prep = preprocess_all(records, scans, config);
    return run_experiment(records, prep, config);
}

// ---- serialization ---------------------------------------------------------

std::string report_to_csv(const ExperimentReport& report) {
    std::string out = "level,sensitivity,specificity,youden,accuracy,auc,cutoff\n";
    using cohort::format_double;
    for (const auto& lv : report.levels) {
        out += std::to_string(lv.level) + ',' + format_double(lv.sensitivity) + ',' +
               format_double(lv.specificity) + ',' + format_double(lv.youden) + ',' +
               format_double(lv.accuracy) + ',' + format_double(lv.auc) + ',' +
               format_double(lv.cutoff) + '\n';
    }
    return out;
}

std::string report_to_svg(const ExperimentReport& report) {
    std::vector<std::pair<std::string, metrics::RocCurve>> curves;
    for (const auto& lv : report.levels)
        curves.emplace_back("Level-" + std::to_string(lv.level), lv.roc);
    return metrics::roc_to_svg(curves);
}

std::string report_to_json(const ExperimentReport& report) {
    json j;
    j["format"] = "exp-report-v1";
    j["seed"] = report.seed;
    j["n_train"] = report.n_train;
    j["n_test"] = report.n_test;
    json levels = json::array();
    for (const auto& lv : report.levels) {
        json l;
        l["level"] = lv.level;
        l["sensitivity"] = lv.sensitivity;
        l["specificity"] = lv.specificity;
        l["youden"] = lv.youden;
        l["accuracy"] = lv.accuracy;
        l["auc"] = lv.auc;
        l["cutoff"] = lv.cutoff;
        l["selected_image_features"] = lv.selected_image_features;
        json pts = json::array();
        for (const auto& p : lv.roc.points) {
            json q;
            q["t"] = std::isinf(p.threshold) ? json("inf") : json(p.threshold);
            q["fpr"] = p.fpr;
            q["tpr"] = p.tpr;
            pts.push_back(std::move(q));
        }
        l["roc"] = std::move(pts);
        levels.push_back(std::move(l));
    }
    j["levels"] = std::move(levels);
    return j.dump(1) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("exp-report-v1: invalid JSON: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != "exp-report-v1")
        throw FormatError("exp-report-v1: missing or wrong format tag (expected \"exp-report-v1\")");
    try {
        ExperimentReport report;
        report.seed = j.at("seed").get<uint64_t>();
        report.n_train = j.at("n_train").get<size_t>();
        report.n_test = j.at("n_test").get<size_t>();
        for (const auto& l : j.at("levels")) {
            LevelResult lv;
            lv.level = l.at("level").get<int>();
            lv.sensitivity = l.at("sensitivity").get<double>();
            lv.specificity = l.at("specificity").get<double>();
            lv.youden = l.at("youden").get<double>();
            lv.accuracy = l.at("accuracy").get<double>();
            lv.auc = l.at("auc").get<double>();
            lv.cutoff = l.at("cutoff").get<double>();
            lv.selected_image_features =
                l.at("selected_image_features").get<std::vector<int>>();
            for (const auto& q : l.at("roc")) {
                metrics::RocPoint p;
                p.threshold = q.at("t").is_string() ? std::numeric_limits<double>::infinity()
                                                    : q.at("t").get<double>();
                p.fpr = q.at("fpr").get<double>();
                p.tpr = q.at("tpr").get<double>();
                lv.roc.points.push_back(p);
            }
            lv.roc.auc = lv.auc;
            report.levels.push_back(std::move(lv));
        }
        return report;
    } catch (const json::exception& e) {
        throw FormatError(std::string("exp-report-v1: malformed document: ") + e.what());
    }
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("exp-v1: invalid JSON: ") + e.what());
    }
    if (!j.contains("format") || j["format"] != "exp-v1")
        throw FormatError("exp-v1: missing or wrong format tag (expected \"exp-v1\")");
    ExperimentConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.stratified_split = j.value("stratified_split", c.stratified_split);
        c.cv_folds = j.value("cv_folds", c.cv_folds);
        if (j.contains("levels")) {
            auto lv = j.at("levels").get<std::vector<int>>();
            c.run_level[0] = c.run_level[1] = c.run_level[2] = false;
            for (int l : lv) {
                if (l < 1 || l > 3) throw FormatError("exp-v1: levels must be within 1..3");
                c.run_level[l - 1] = true;
            }
        }
        if (j.contains("gbt")) {
            const json& g = j.at("gbt");
            c.gbt.num_rounds = g.value("num_rounds", c.gbt.num_rounds);
            c.gbt.learning_rate = g.value("learning_rate", c.gbt.learning_rate);
            c.gbt.max_depth = g.value("max_depth", c.gbt.max_depth);
            c.gbt.lambda = g.value("lambda", c.gbt.lambda);
            c.gbt.gamma = g.value("gamma", c.gbt.gamma);
            c.gbt.min_child_weight = g.value("min_child_weight", c.gbt.min_child_weight);
            c.gbt.base_margin = g.value("base_margin", c.gbt.base_margin);
        }
        if (j.contains("fcn")) {
            const json& f = j.at("fcn");
            c.fcn_config.input_size = f.value("input_size", c.fcn_config.input_size);
            c.fcn_config.depth = f.value("depth", c.fcn_config.depth);
            c.fcn_config.base_channels = f.value("base_channels", c.fcn_config.base_channels);
            c.fcn_config.use_skips = f.value("use_skips", c.fcn_config.use_skips);
            c.fcn_epochs = f.value("epochs", c.fcn_epochs);
            c.fcn_learning_rate = f.value("learning_rate", c.fcn_learning_rate);
            c.fcn_batch_size = f.value("batch_size", c.fcn_batch_size);
            c.max_fcn_train_crops = f.value("max_train_crops", c.max_fcn_train_crops);
        }
        c.top_k = j.value("top_k", c.top_k);
        c.window_lo = j.value("window_lo", c.window_lo);
        c.window_hi = j.value("window_hi", c.window_hi);
        c.ipsilateral = j.value("ipsilateral", c.ipsilateral);
        c.dump_pgm = j.value("dump_pgm", c.dump_pgm);
    } catch (const json::exception& e) {
        throw FormatError(std::string("exp-v1: malformed document: ") + e.what());
    }
    return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
    json j;
    j["format"] = "exp-v1";
    j["seed"] = c.seed;
    j["train_fraction"] = c.train_fraction;
    j["stratified_split"] = c.stratified_split;
    j["cv_folds"] = c.cv_folds;
    std::vector<int> levels;
    for (int l = 0; l < 3; ++l)
        if (c.run_level[l]) levels.push_back(l + 1);
    j["levels"] = levels;
    j["gbt"] = {{"num_rounds", c.gbt.num_rounds},     {"learning_rate", c.gbt.learning_rate},
                {"max_depth", c.gbt.max_depth},       {"lambda", c.gbt.lambda},
                {"gamma", c.gbt.gamma},               {"min_child_weight", c.gbt.min_child_weight},
                {"base_margin", c.gbt.base_margin}};
    j["fcn"] = {{"input_size", c.fcn_config.input_size},
                {"depth", c.fcn_config.depth},
                {"base_channels", c.fcn_config.base_channels},
                {"use_skips", c.fcn_config.use_skips},
                {"epochs", c.fcn_epochs},
                {"learning_rate", c.fcn_learning_rate},
                {"batch_size", c.fcn_batch_size},
                {"max_train_crops", c.max_fcn_train_crops}};
    j["top_k"] = c.top_k;
    j["window_lo"] = c.window_lo;
    j["window_hi"] = c.window_hi;
    j["ipsilateral"] = c.ipsilateral;
    j["dump_pgm"] = c.dump_pgm;
    return j.dump(2) + "\n";
}

}  // namespace lvo::pipeline
