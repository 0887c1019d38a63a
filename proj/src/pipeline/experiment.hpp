#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cohort/record.hpp"
#include "fcn/fcn.hpp"
#include "gbt/gbt.hpp"
#include "imaging/phantom.hpp"
#include "imaging/preprocess.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/features.hpp"

namespace lvo::pipeline {

struct ExperimentConfig {
    uint64_t seed = 1;
    double train_fraction = 200.0 / 300.0;
    bool stratified_split = true;
    int cv_folds = 10;
    bool run_level[3] = {true, true, true};
    gbt::GbtParams gbt;

    // Level-3 machinery.
    fcn::FcnConfig fcn_config;
    int fcn_epochs = 4;
    double fcn_learning_rate = 2e-3;
    int fcn_batch_size = 8;
    int max_fcn_train_crops = 32;
    int top_k = 10;
    double window_lo = 20.0;
    double window_hi = 80.0;
    bool ipsilateral = false;
    bool dump_pgm = false;  // preprocess stage: also write crop P5 graymaps
};

ExperimentConfig experiment_config_from_json(const std::string& text);  // "exp-v1"
std::string experiment_config_to_json(const ExperimentConfig& config);

struct ScanRecord {
    imaging::Volume volume;
    imaging::SegMask dot_mask;  // ground truth
};
using ScanStore = std::map<std::string, ScanRecord>;

// Split-independent part of level 3: Fig. 2 chain per scan, then one
// selected-slice crop (largest segmented dot, middle slice as the flagged
// fallback) plus the matching mask crop.
struct PreprocessedScan {
    std::vector<double> image;  // 128x128 crop, [0,1]
    std::vector<uint8_t> mask;  // 128x128 ground-truth dot crop
    int selected_slice = 0;
    bool slice_fallback = false;
    imaging::Side side = imaging::Side::left;
    bool side_auto = false;  // weak side was unavailable; brighter box used
};
using PreprocessedScans = std::map<std::string, PreprocessedScan>;

PreprocessedScan preprocess_scan(const imaging::Volume& volume, const imaging::SegMask& dot_mask,
                                 std::optional<imaging::Side> weak_side, double window_lo = 20.0,
                                 double window_hi = 80.0, bool ipsilateral = false);

PreprocessedScans preprocess_all(const cohort::Cohort& records, const ScanStore& scans,
                                 const ExperimentConfig& config);

struct LevelResult {
    int level = 0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double youden = 0.0;
    double accuracy = 0.0;
    double auc = 0.0;
    double cutoff = 0.5;
    metrics::RocCurve roc;
    std::vector<int> selected_image_features;
};

struct ExperimentReport {
    uint64_t seed = 0;
    size_t n_train = 0;
    size_t n_test = 0;
    std::vector<LevelResult> levels;
};

// Seeded stratified train/test split; exact target count, both classes
// kept on both sides.
struct Split {
    std::vector<size_t> train;
    std::vector<size_t> test;
};
Split split_cohort(const std::vector<uint8_t>& labels, double train_fraction, bool stratified,
                   uint64_t seed);

// Segmentation training set drawn from training rows only: dot-positive
// crops with ground-truth masks, padded with dot-negative crops.
fcn::Dataset fcn_training_set(const cohort::Cohort& records, const PreprocessedScans& prep,
                              const std::vector<size_t>& train_rows, int max_crops);

fcn::FcnModel train_level3_fcn(const cohort::Cohort& records, const PreprocessedScans& prep,
                               const std::vector<size_t>& train_rows,
                               const ExperimentConfig& config);

// Per-level fit and held-out evaluation used by both run_experiment and
// the staged CLI path.
LevelResult evaluate_level(int level, const cohort::FeatureMatrix& X,
                           const std::vector<uint8_t>& y, const Split& split,
                           const ExperimentConfig& config);

// The three-level protocol: per level, cutoff by 10-fold CV on training
// rows, a model fitted on all training rows, confusion metrics at the
// chosen cutoff plus AUC on the held-out rows. Level 3 trains the
// segmentation network on training-row crops, extracts bottleneck features
// for everyone, and keeps the top-k columns by training-row t-tests.
// Nothing downstream of the split ever reads a test label.
ExperimentReport run_experiment(const cohort::Cohort& records, const PreprocessedScans& prep,
                                const ExperimentConfig& config);

ExperimentReport run_experiment(const cohort::Cohort& records, const ScanStore& scans,
                                const ExperimentConfig& config);

// Table-style CSV: level,sensitivity,specificity,youden,accuracy,auc,cutoff.
std::string report_to_csv(const ExperimentReport& report);
// ROC overlay for the evaluated levels.
std::string report_to_svg(const ExperimentReport& report);
// "exp-report-v1" JSON, carrying everything report_to_csv/svg need.
std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);

}  // namespace lvo::pipeline
