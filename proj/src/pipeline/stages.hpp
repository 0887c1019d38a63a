#pragma once

#include <string>

#include "cohort/synth.hpp"
#include "pipeline/experiment.hpp"

namespace lvo::pipeline {

// Batch file-to-file stages backing the CLI. Every stage is deterministic
// in (inputs, seed): rerunning one without changing its inputs reproduces
// its outputs byte for byte.

// Base geometry for synthetic scans; per-record dot placement, laterality
// and misalignment derive from the cohort and the seed.
struct ScanSynthSpec {
    int nx = 512, ny = 512, nz = 28;
    double sx = 0.426, sy = 0.426, sz = 5.0;
    double dot_radius = 4.0;
    double noise_sd = 2.0;
    double max_rotation_deg = 8.0;
    double max_shift_mm = 6.0;
    bool dump_pgm = false;  // also write a brain-window P5 of the middle slice
};

void stage_synth_cohort(const std::string& out_csv, const cohort::CohortSpec& spec,
                        uint64_t seed);

// One phantom per cohort record carrying a scan_id: volume + ground-truth
// dot mask as SVOL1 files plus a "scans-v1" JSON manifest.
void stage_synth_scans(const std::string& cohort_csv, const std::string& out_dir,
                       const ScanSynthSpec& spec, uint64_t seed);

// Fig. 2 chain per scan; emits one LVOC1 crop file per scan and a
// "prep-v1" manifest.
void stage_preprocess(const std::string& cohort_csv, const std::string& scans_manifest,
                      const std::string& out_dir, const ExperimentConfig& config);

// Trains the segmentation network on training-split crops only and writes
// the fcn-v1 model document.
void stage_train_fcn(const std::string& cohort_csv, const std::string& prep_manifest,
                     const std::string& out_model, const ExperimentConfig& config);

// Bottleneck features for every preprocessed scan: "LVOF" binary matrix
// keyed by record id.
void stage_extract(const std::string& cohort_csv, const std::string& prep_manifest,
                   const std::string& fcn_model, const std::string& out_features);

// Per enabled level: CV cutoff selection and final GBT fit on training
// rows (level 3 first selects its image columns there); writes gbt-v1
// model files plus a "models-v1" manifest.
void stage_train(const std::string& cohort_csv, const std::string& features_file,
                 const std::string& out_dir, const ExperimentConfig& config);

// Held-out metrics for every trained level -> "exp-report-v1" JSON.
void stage_evaluate(const std::string& cohort_csv, const std::string& features_file,
                    const std::string& models_manifest, const std::string& out_report,
                    const ExperimentConfig& config);

void stage_report(const std::string& report_json, const std::string& out_csv,
                  const std::string& out_svg);

// One-shot run_experiment over synthetic-scan files; writes report JSON,
// CSV and SVG into out_dir.
void stage_run(const std::string& cohort_csv, const std::string& scans_manifest,
               const ExperimentConfig& config, const std::string& out_dir);

// Shared helpers (also used by tests).
ScanStore load_scan_store(const std::string& scans_manifest);
PreprocessedScans load_preprocessed(const std::string& prep_manifest);
std::map<std::string, std::vector<double>> load_features(const std::string& features_file);

}  // namespace lvo::pipeline
