// Command-line front end for the LVO prediction pipeline. Every subcommand
// is a batch stage: files in, files out, one --seed controlling all
// randomness. The tool talks to the library exclusively through the public
// C API in lvo/lvo.h.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lvo/lvo.h"

namespace {

int finish(lvo_status status) {
    if (status != LVO_OK) std::fprintf(stderr, "error: %s\n", lvo_last_error());
    return static_cast<int>(status);
}

// Options shared by every stage that re-derives the train/test split.
struct SplitOpts {
    uint64_t seed = 1;
    double train_fraction = 200.0 / 300.0;
    bool no_stratify = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Seed for all randomness in this stage");
        cmd->add_option("--train-fraction", train_fraction,
                        "Fraction of records in the training split");
        cmd->add_flag("--no-stratify", no_stratify, "Split without label stratification");
    }

    std::string json_fields() const {
        std::string out = "\"seed\":" + std::to_string(seed) +
                          ",\"train_fraction\":" + std::to_string(train_fraction);
        if (no_stratify) out += ",\"stratified_split\":false";
        return out;
    }
};

struct GbtOpts {
    int rounds = 100;
    double eta = 0.1;
    int max_depth = 3;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--rounds", rounds, "Boosting rounds");
        cmd->add_option("--eta", eta, "Learning rate");
        cmd->add_option("--max-depth", max_depth, "Maximum tree depth");
        cmd->add_option("--lambda", lambda, "L2 leaf regularization");
        cmd->add_option("--gamma", gamma, "Minimum split gain");
        cmd->add_option("--min-child-weight", min_child_weight, "Minimum child hessian sum");
    }

    std::string json_fields() const {
        return "\"gbt\":{\"num_rounds\":" + std::to_string(rounds) +
               ",\"learning_rate\":" + std::to_string(eta) +
               ",\"max_depth\":" + std::to_string(max_depth) +
               ",\"lambda\":" + std::to_string(lambda) + ",\"gamma\":" + std::to_string(gamma) +
               ",\"min_child_weight\":" + std::to_string(min_child_weight) + "}";
    }
};

struct FcnOpts {
    int input_size = 128;
    int depth = 3;
    int base_channels = 8;
    bool no_skips = false;
    int epochs = 4;
    double lr = 2e-3;
    int batch = 8;
    int max_crops = 32;

    void attach(CLI::App* cmd) {
        cmd->add_option("--fcn-input", input_size, "Network input size (divisible by 2^depth)");
        cmd->add_option("--fcn-depth", depth, "Encoder stages");
        cmd->add_option("--fcn-base", base_channels, "Channels of the first stage");
        cmd->add_flag("--fcn-no-skips", no_skips, "Disable skip connections");
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--lr", lr, "Optimizer learning rate");
        cmd->add_option("--batch", batch, "Batch size");
        cmd->add_option("--max-crops", max_crops, "Cap on segmentation training crops");
    }

    std::string json_fields() const {
        std::string out = "\"fcn\":{\"input_size\":" + std::to_string(input_size) +
                          ",\"depth\":" + std::to_string(depth) +
                          ",\"base_channels\":" + std::to_string(base_channels) +
                          ",\"epochs\":" + std::to_string(epochs) +
                          ",\"learning_rate\":" + std::to_string(lr) +
                          ",\"batch_size\":" + std::to_string(batch) +
                          ",\"max_train_crops\":" + std::to_string(max_crops);
        if (no_skips) out += ",\"use_skips\":false";
        return out + "}";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical LVO prediction pipeline (synthetic cohorts and CT phantoms)"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.footer("Environment: LVO_PIPELINE_THREADS caps internal parallelism (0 = auto).");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate synthetic inputs");
    synth->require_subcommand(1);

    auto* synth_cohort = synth->add_subcommand("cohort", "Write a synthetic cohort CSV");
    std::string sc_out = "cohort.csv";
    uint32_t sc_size = 300;
    double sc_prevalence = 130.0 / 300.0;
    uint64_t sc_seed = 1;
    std::string sc_stats;
    synth_cohort->add_option("--out", sc_out, "Output CSV path");
    synth_cohort->add_option("--size", sc_size, "Cohort size");
    synth_cohort->add_option("--prevalence", sc_prevalence, "LVO prevalence");
    synth_cohort->add_option("--seed", sc_seed, "Seed");
    synth_cohort->add_option("--stats-out", sc_stats,
                             "Also write class-conditional statistics CSV here");

    auto* synth_scans =
        synth->add_subcommand("scans", "Write SVOL phantoms + masks for a cohort");
    std::string ss_cohort, ss_out = "scans";
    uint64_t ss_seed = 1;
    uint32_t ss_nx = 512, ss_ny = 512, ss_nz = 28;
    double ss_sxy = 0.426, ss_sz = 5.0, ss_dot_radius = 4.0, ss_noise = 2.0;
    double ss_max_rot = 8.0, ss_max_shift = 6.0;
    synth_scans->add_option("--cohort", ss_cohort, "Cohort CSV")->required();
    synth_scans->add_option("--out-dir", ss_out, "Output directory");
    synth_scans->add_option("--seed", ss_seed, "Seed");
    synth_scans->add_option("--nx", ss_nx, "Slice width (voxels)");
    synth_scans->add_option("--ny", ss_ny, "Slice height (voxels)");
    synth_scans->add_option("--nz", ss_nz, "Slice count");
    synth_scans->add_option("--spacing-xy", ss_sxy, "In-plane spacing (mm)");
    synth_scans->add_option("--spacing-z", ss_sz, "Slice thickness (mm)");
    synth_scans->add_option("--dot-radius", ss_dot_radius, "MCA dot radius (mm)");
    synth_scans->add_option("--noise-sd", ss_noise, "Additive noise SD (HU)");
    synth_scans->add_option("--max-rotation", ss_max_rot, "Max misalignment rotation (deg)");
    synth_scans->add_option("--max-shift", ss_max_shift, "Max misalignment shift (mm)");
    bool ss_pgm = false;
    synth_scans->add_flag("--dump-pgm", ss_pgm, "Also write brain-window P5 graymaps");

    // ---- preprocess ----
    auto* preprocess = app.add_subcommand("preprocess", "Run the CT preprocessing chain");
    std::string pp_cohort, pp_scans, pp_out = "prep";
    double pp_lo = 20.0, pp_hi = 80.0;
    bool pp_ipsi = false;
    preprocess->add_option("--cohort", pp_cohort, "Cohort CSV")->required();
    preprocess->add_option("--scans", pp_scans, "scans_manifest.json from synth scans")
        ->required();
    preprocess->add_option("--out-dir", pp_out, "Output directory");
    preprocess->add_option("--window-lo", pp_lo, "HU window lower bound");
    preprocess->add_option("--window-hi", pp_hi, "HU window upper bound");
    preprocess->add_flag("--ipsilateral", pp_ipsi,
                         "Extract the hemisphere on the weak side instead of opposite it");
    bool pp_pgm = false;
    preprocess->add_flag("--dump-pgm", pp_pgm, "Also write crop P5 graymaps");

    // ---- train-fcn ----
    auto* train_fcn = app.add_subcommand(
        "train-fcn", "Train the segmentation network on training-split crops");
    std::string tf_cohort, tf_prep, tf_out = "fcn.json";
    SplitOpts tf_split;
    FcnOpts tf_fcn;
    train_fcn->add_option("--cohort", tf_cohort, "Cohort CSV")->required();
    train_fcn->add_option("--prep", tf_prep, "prep_manifest.json")->required();
    train_fcn->add_option("--out", tf_out, "Output fcn-v1 model path");
    tf_split.attach(train_fcn);
    tf_fcn.attach(train_fcn);

    // ---- extract ----
    auto* extract = app.add_subcommand("extract", "Extract bottleneck image features");
    std::string ex_cohort, ex_prep, ex_fcn, ex_out = "features.bin";
    extract->add_option("--cohort", ex_cohort, "Cohort CSV")->required();
    extract->add_option("--prep", ex_prep, "prep_manifest.json")->required();
    extract->add_option("--fcn", ex_fcn, "fcn-v1 model")->required();
    extract->add_option("--out", ex_out, "Output feature matrix");

    // ---- train ----
    auto* train = app.add_subcommand("train", "Select cutoffs and fit the level models");
    std::string tr_cohort, tr_features, tr_out = "models";
    std::vector<int> tr_levels = {1, 2, 3};
    int tr_folds = 10, tr_top_k = 10;
    SplitOpts tr_split;
    GbtOpts tr_gbt;
    train->add_option("--cohort", tr_cohort, "Cohort CSV")->required();
    train->add_option("--features", tr_features, "Image feature matrix (needed for level 3)");
    train->add_option("--out-dir", tr_out, "Output directory");
    train->add_option("--levels", tr_levels, "Levels to fit")->delimiter(',');
    train->add_option("--folds", tr_folds, "Cross-validation folds for cutoff selection");
    train->add_option("--top-k", tr_top_k, "Image features kept by t-test selection");
    tr_split.attach(train);
    tr_gbt.attach(train);

    // ---- evaluate ----
    auto* evaluate = app.add_subcommand("evaluate", "Score the held-out split");
    std::string ev_cohort, ev_features, ev_models, ev_out = "report.json";
    SplitOpts ev_split;
    evaluate->add_option("--cohort", ev_cohort, "Cohort CSV")->required();
    evaluate->add_option("--features", ev_features, "Image feature matrix");
    evaluate->add_option("--models", ev_models, "models_manifest.json")->required();
    evaluate->add_option("--out", ev_out, "Output report JSON");
    ev_split.attach(evaluate);

    // ---- report ----
    auto* report = app.add_subcommand("report", "Render the table CSV and ROC SVG");
    std::string rp_in = "report.json", rp_csv = "report.csv", rp_svg = "roc.svg";
    report->add_option("--report", rp_in, "Report JSON from evaluate");
    report->add_option("--out-csv", rp_csv, "Output CSV path");
    report->add_option("--out-svg", rp_svg, "Output SVG path");

    // ---- run ----
    auto* run = app.add_subcommand("run", "Run the full experiment in one process");
    std::string rn_cohort, rn_scans, rn_out = "experiment", rn_config;
    SplitOpts rn_split;
    GbtOpts rn_gbt;
    FcnOpts rn_fcn;
    std::vector<int> rn_levels = {1, 2, 3};
    int rn_folds = 10, rn_top_k = 10;
    run->add_option("--cohort", rn_cohort, "Cohort CSV")->required();
    run->add_option("--scans", rn_scans, "scans_manifest.json (needed for level 3)");
    run->add_option("--out-dir", rn_out, "Output directory");
    run->add_option("--config", rn_config, "exp-v1 JSON config (overrides the flags)");
    run->add_option("--levels", rn_levels, "Levels to run")->delimiter(',');
    run->add_option("--folds", rn_folds, "Cross-validation folds");
    run->add_option("--top-k", rn_top_k, "Image features kept by t-test selection");
    rn_split.attach(run);
    rn_gbt.attach(run);
    rn_fcn.attach(run);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems exit 1
    }

    auto levels_json = [](const std::vector<int>& levels) {
        std::string out = "\"levels\":[";
        for (size_t i = 0; i < levels.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(levels[i]);
        }
        return out + "]";
    };

    if (synth_cohort->parsed()) {
        lvo_status rc =
            lvo_stage_synth_cohort(sc_out.c_str(), sc_size, sc_prevalence, sc_seed, "{}");
        if (rc != LVO_OK || sc_stats.empty()) return finish(rc);
        lvo_cohort* cohort = lvo_cohort_load(sc_out.c_str());
        if (!cohort) return finish(LVO_E_INTERNAL);
        char* stats = lvo_cohort_stats_csv(cohort);
        lvo_cohort_free(cohort);
        if (!stats) return finish(LVO_E_INTERNAL);
        std::FILE* f = std::fopen(sc_stats.c_str(), "wb");
        if (!f) {
            lvo_string_free(stats);
            std::fprintf(stderr, "error: cannot write '%s'\n", sc_stats.c_str());
            return 1;
        }
        std::fputs(stats, f);
        std::fclose(f);
        lvo_string_free(stats);
        return finish(LVO_OK);
    }
    if (synth_scans->parsed()) {
        std::string opts = "{\"nx\":" + std::to_string(ss_nx) + ",\"ny\":" + std::to_string(ss_ny) +
                           ",\"nz\":" + std::to_string(ss_nz) +
                           ",\"sx\":" + std::to_string(ss_sxy) +
                           ",\"sy\":" + std::to_string(ss_sxy) +
                           ",\"sz\":" + std::to_string(ss_sz) +
                           ",\"dot_radius\":" + std::to_string(ss_dot_radius) +
                           ",\"noise_sd\":" + std::to_string(ss_noise) +
                           ",\"max_rotation_deg\":" + std::to_string(ss_max_rot) +
                           ",\"max_shift_mm\":" + std::to_string(ss_max_shift) +
                           (ss_pgm ? ",\"dump_pgm\":true" : "") + "}";
        return finish(
            lvo_stage_synth_scans(ss_cohort.c_str(), ss_out.c_str(), ss_seed, opts.c_str()));
    }
    if (preprocess->parsed()) {
        std::string opts = "{\"window_lo\":" + std::to_string(pp_lo) +
                           ",\"window_hi\":" + std::to_string(pp_hi) +
                           (pp_ipsi ? ",\"ipsilateral\":true" : "") +
                           (pp_pgm ? ",\"dump_pgm\":true" : "") + "}";
        return finish(lvo_stage_preprocess(pp_cohort.c_str(), pp_scans.c_str(), pp_out.c_str(),
                                           opts.c_str()));
    }
    if (train_fcn->parsed()) {
        std::string opts =
            "{" + tf_split.json_fields() + "," + tf_fcn.json_fields() + "}";
        return finish(lvo_stage_train_fcn(tf_cohort.c_str(), tf_prep.c_str(), tf_out.c_str(),
                                          opts.c_str()));
    }
    if (extract->parsed()) {
        return finish(lvo_stage_extract(ex_cohort.c_str(), ex_prep.c_str(), ex_fcn.c_str(),
                                        ex_out.c_str()));
    }
    if (train->parsed()) {
        std::string opts = "{" + tr_split.json_fields() + "," + levels_json(tr_levels) +
                           ",\"cv_folds\":" + std::to_string(tr_folds) +
                           ",\"top_k\":" + std::to_string(tr_top_k) + "," +
                           tr_gbt.json_fields() + "}";
        return finish(lvo_stage_train(tr_cohort.c_str(),
                                      tr_features.empty() ? nullptr : tr_features.c_str(),
                                      tr_out.c_str(), opts.c_str()));
    }
    if (evaluate->parsed()) {
        std::string opts = "{" + ev_split.json_fields() + "}";
        return finish(lvo_stage_evaluate(ev_cohort.c_str(),
                                         ev_features.empty() ? nullptr : ev_features.c_str(),
                                         ev_models.c_str(), ev_out.c_str(), opts.c_str()));
    }
    if (report->parsed()) {
        return finish(lvo_stage_report(rp_in.c_str(), rp_csv.c_str(), rp_svg.c_str()));
    }
    if (run->parsed()) {
        std::string opts;
        if (!rn_config.empty()) {
            std::FILE* f = std::fopen(rn_config.c_str(), "rb");
            if (!f) {
                std::fprintf(stderr, "error: cannot open config '%s'\n", rn_config.c_str());
                return 1;
            }
            char buf[4096];
            size_t got;
            while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) opts.append(buf, got);
            std::fclose(f);
        } else {
            opts = "{" + rn_split.json_fields() + "," + levels_json(rn_levels) +
                   ",\"cv_folds\":" + std::to_string(rn_folds) +
                   ",\"top_k\":" + std::to_string(rn_top_k) + "," + rn_gbt.json_fields() + "," +
                   rn_fcn.json_fields() + "}";
        }
        return finish(lvo_stage_run(rn_cohort.c_str(),
                                    rn_scans.empty() ? nullptr : rn_scans.c_str(),
                                    rn_out.c_str(), opts.c_str()));
    }
    return 1;
}
