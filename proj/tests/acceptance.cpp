// Acceptance suite: one pass/fail line per criterion, nonzero exit when
// any fails. Run through ctest or directly:
//   acceptance --cli <path-to-lvo-binary>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cohort/synth.hpp"
#include "fcn/fcn.hpp"
#include "gbt/gbt.hpp"
#include "imaging/phantom.hpp"
#include "imaging/preprocess.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/experiment.hpp"
#include "pipeline/features.hpp"
#include "rng.hpp"

using namespace lvo;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = 3.14159265358979323846;

int g_failures = 0;

void report(int index, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%2d] %s  %s (%s)\n", index, pass ? "PASS" : "FAIL", what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
void youden_arithmetic() {
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    auto add = [&](int n, double s, uint8_t y) {
        for (int i = 0; i < n; ++i) {
            scores.push_back(s);
            labels.push_back(y);
        }
    };
    add(93, 0.9, 1);
    add(7, 0.1, 1);
    add(316, 0.9, 0);
    add(684, 0.1, 0);
    metrics::ConfusionMetrics l3 = metrics::confusion_at(scores, labels, 0.5);
    double err3 = std::fabs(l3.youden - 0.614);
    metrics::ConfusionMetrics l2 = metrics::confusion_from_counts(93, 351, 649, 7);
    double err2 = std::fabs(l2.youden - 0.579);
    report(1, err3 < 1e-9 && err2 < 1e-9 && std::fabs(l3.sensitivity - 0.930) < 1e-12,
           "Youden arithmetic on the reference operating points",
           fmt("|0.930+0.684-1-0.614|=%.2e, |0.930+0.649-1-0.579|=%.2e", err3, err2));
}

// ---------------------------------------------------------------- criterion 2
struct OracleSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
    double leaf_left = 0.0;
    double leaf_right = 0.0;
};

OracleSplit oracle_depth1(const cohort::FeatureMatrix& X, const std::vector<uint8_t>& y,
                          const gbt::GbtParams& prm) {
    const size_t n = X.rows();
    std::vector<double> g(n), h(n);
    for (size_t i = 0; i < n; ++i) {
        double p = 1.0 / (1.0 + std::exp(-prm.base_margin));
        g[i] = p - static_cast<double>(y[i]);
        h[i] = p * (1.0 - p);
    }
    double g_total = 0.0, h_total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        g_total += g[i];
        h_total += h[i];
    }
    auto term = [&](double gs, double hs) { return gs * gs / (hs + prm.lambda); };
    OracleSplit best;
    for (size_t f = 0; f < X.cols(); ++f) {
        std::vector<std::pair<double, size_t>> obs;
        double g_miss = 0.0, h_miss = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (X.is_missing(i, f)) {
                g_miss += g[i];
                h_miss += h[i];
            } else {
                obs.emplace_back(X.at(i, f), i);
            }
        }
        std::sort(obs.begin(), obs.end());
        for (size_t k = 0; k + 1 < obs.size(); ++k) {
            if (obs[k].first == obs[k + 1].first) continue;
            double threshold = obs[k].first + 0.5 * (obs[k + 1].first - obs[k].first);
            double g_obs = 0.0, h_obs = 0.0;
            for (size_t j = 0; j <= k; ++j) {
                g_obs += g[obs[j].second];
                h_obs += h[obs[j].second];
            }
            for (int side = 0; side < 2; ++side) {
                bool miss_left = side == 0;
                double gl = miss_left ? g_obs + g_miss : g_obs;
                double hl = miss_left ? h_obs + h_miss : h_obs;
                double gr = g_total - gl;
                double hr = h_total - hl;
                if (hl < prm.min_child_weight || hr < prm.min_child_weight) continue;
                double gain =
                    0.5 * (term(gl, hl) + term(gr, hr) - term(g_total, h_total)) - prm.gamma;
                if (gain > best.gain) {
                    best = {true, static_cast<int>(f), threshold, miss_left, gain,
                            std::clamp(-gl / (hl + prm.lambda), -10.0, 10.0),
                            std::clamp(-gr / (hr + prm.lambda), -10.0, 10.0)};
                }
            }
        }
    }
    return best;
}

void gbt_oracle_equivalence() {
    Rng rng(7001);
    int checked = 0, matched = 0, with_split = 0;
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 4 + rng.next_below(7);
        size_t d = 1 + rng.next_below(3);
        std::vector<std::string> names;
        std::vector<cohort::ColKind> kinds(d, cohort::ColKind::continuous);
        for (size_t c = 0; c < d; ++c) names.push_back("f" + std::to_string(c));
        cohort::FeatureMatrix X(n, names, kinds);
        std::vector<uint8_t> y(n, 0);
        for (size_t r = 0; r < n; ++r) {
            for (size_t c = 0; c < d; ++c)
                if (rng.next_double() >= 0.25)
                    X.set(r, c, static_cast<double>(rng.next_below(6)) * 0.5);
            y[r] = rng.bernoulli(0.5) ? 1 : 0;
        }
        y[0] = 1;
        y[1] = 0;

        gbt::GbtParams prm;
        prm.num_rounds = 1;
        prm.max_depth = 1;
        prm.lambda = (trial % 3 == 0) ? 0.0 : 1.0;
        prm.min_child_weight = (trial % 5 == 0) ? 0.3 : 0.0;

        gbt::TreeEnsemble model = gbt::train_gbt(X, y, prm);
        OracleSplit expected = oracle_depth1(X, y, prm);
        const gbt::Tree& tree = model.trees.at(0);
        ++checked;
        if (!expected.found) {
            if (tree.nodes.size() == 1 && tree.nodes[0].is_leaf) ++matched;
            continue;
        }
        ++with_split;
        if (tree.nodes.size() != 3) continue;
        const gbt::TreeNode& root = tree.nodes[0];
        bool ok = !root.is_leaf && root.feature == expected.feature &&
                  std::fabs(root.threshold - expected.threshold) <= 1e-10 &&
                  root.default_left == expected.default_left &&
                  std::fabs(tree.nodes[root.left].weight - expected.leaf_left) <= 1e-10 &&
                  std::fabs(tree.nodes[root.right].weight - expected.leaf_right) <= 1e-10;
        if (ok) ++matched;
    }
    report(2, matched == checked && with_split >= 150,
           "GBT depth-1 splits match the exhaustive oracle",
           fmt("%d/%d datasets matched, %d with a split", matched, checked, with_split));
}

// ---------------------------------------------------------------- criterion 3
void missing_totality() {
    Rng rng(7003);
    int finite = 0, tried = 0;
    for (int m = 0; m < 5; ++m) {
        size_t n = 20, d = 4;
        std::vector<std::string> names;
        std::vector<cohort::ColKind> kinds(d, cohort::ColKind::continuous);
        for (size_t c = 0; c < d; ++c) names.push_back("f" + std::to_string(c));
        cohort::FeatureMatrix X(n, names, kinds);
        std::vector<uint8_t> y(n);
        for (size_t r = 0; r < n; ++r) {
            for (size_t c = 0; c < d; ++c)
                if (!rng.bernoulli(0.3)) X.set(r, c, rng.normal());
            y[r] = r % 2;
        }
        gbt::GbtParams prm;
        prm.num_rounds = 8;
        gbt::TreeEnsemble model = gbt::train_gbt(X, y, prm);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> vals(d);
            std::vector<uint8_t> miss(d);
            for (size_t c = 0; c < d; ++c) {
                vals[c] = rng.normal(0, 4);
                miss[c] = trial % 50 == 0 ? 1 : static_cast<uint8_t>(rng.bernoulli(0.5));
            }
            if (trial % 50 == 0) std::fill(miss.begin(), miss.end(), 1);  // all missing
            ++tried;
            if (std::isfinite(model.predict_margin(vals.data(), miss.data(), d)) &&
                std::isfinite(model.predict_proba(vals.data(), miss.data(), d)))
                ++finite;
        }
    }
    report(3, finite == tried && tried == 1000, "missing-value predictions always finite",
           fmt("%d/%d random (model,row,mask) triples finite", finite, tried));
}

// ---------------------------------------------------------------- criterion 4
void auc_rank_equivalence() {
    Rng rng(7004);
    double worst = 0.0;
    int sets = 0;
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 15 + rng.next_below(40);
        std::vector<double> scores(n);
        std::vector<uint8_t> labels(n);
        for (size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.next_below(9)) / 8.0;  // deliberate ties
            labels[i] = rng.bernoulli(0.5) ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        double auc = metrics::roc_curve(scores, labels).auc;
        double wins = 0.0;
        long np = 0, nn = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!labels[i]) continue;
            ++np;
            for (size_t j = 0; j < n; ++j) {
                if (labels[j]) continue;
                wins += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
            }
        }
        for (uint8_t v : labels) nn += v ? 0 : 1;
        double rank = wins / (static_cast<double>(np) * static_cast<double>(nn));
        worst = std::max(worst, std::fabs(auc - rank));
        ++sets;
    }
    report(4, worst < 1e-12 && sets == 100, "trapezoidal AUC equals the pairwise rank statistic",
           fmt("max |trapezoid-rank| = %.2e over %d tied score sets", worst, sets));
}

// ---------------------------------------------------------------- criterion 5
void fcn_gradient_check() {
    auto t0 = Clock::now();
    fcn::FcnConfig cfg;
    cfg.input_size = 16;
    cfg.depth = 3;
    cfg.base_channels = 2;
    fcn::FcnModel model = fcn::init_model(cfg, 7005);
    Rng rng(7006);
    std::vector<std::vector<double>> images(2), masks(2);
    for (int k = 0; k < 2; ++k) {
        images[k].resize(16 * 16);
        masks[k].assign(16 * 16, 0.0);
        for (double& v : images[k]) v = rng.next_double();
        int cx = 4 + k * 6;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if ((x - cx) * (x - cx) + (y - 8) * (y - 8) <= 6) masks[k][y * 16 + x] = 1.0;
    }
    fcn::LossGrad lg = fcn::loss_and_grad(model, images, masks, fcn::LossKind::bce_dice);

    const double eps = 1e-5;
    double worst = 0.0;
    Rng pick(7007);
    for (int trial = 0; trial < 50; ++trial) {
        size_t p = pick.next_below(model.params.size());
        fcn::FcnModel plus = model;
        plus.params[p] += eps;
        fcn::FcnModel minus = model;
        minus.params[p] -= eps;
        double fd = (fcn::loss_and_grad(plus, images, masks, fcn::LossKind::bce_dice).loss -
                     fcn::loss_and_grad(minus, images, masks, fcn::LossKind::bce_dice).loss) /
                    (2.0 * eps);
        double denom = std::max(1e-6, std::fabs(lg.grad[p]) + std::fabs(fd));
        worst = std::max(worst, std::fabs(lg.grad[p] - fd) / denom);
    }
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report(5, worst < 1e-4 && secs < 60.0,
           "FCN analytic gradients match central finite differences",
           fmt("max relative error %.2e over 50 parameters in %.1fs", worst, secs));
}

// ---------------------------------------------------------------- criterion 6
void feature_count_fidelity() {
    fcn::FcnConfig cfg;  // defaults
    bool len_ok = cfg.bottleneck_len() == 16384;
    fcn::FcnModel model = fcn::init_model(cfg, 7008);
    Rng rng(7009);
    std::vector<double> img(128 * 128);
    for (double& v : img) v = rng.next_double();
    size_t extracted = fcn::extract_features(model, img).size();
    report(6, len_ok && extracted == 16384, "default bottleneck flattens to exactly 16384",
           fmt("config len %zu, extracted %zu", cfg.bottleneck_len(), extracted));
}

// ---------------------------------------------------------------- criterion 7
void registration_recovery() {
    Rng rng(7010);
    int recovered = 0;
    const int kTrials = 20;
    for (int trial = 0; trial < kTrials; ++trial) {
        imaging::PhantomSpec spec;
        spec.nx = 256;
        spec.ny = 256;
        spec.nz = 9;
        spec.sx = 0.852;
        spec.sy = 0.852;
        spec.head_ax = 70.0;
        spec.head_ay = 88.0;
        spec.dot_present = trial % 2 == 0;
        spec.seed = 7100 + static_cast<uint64_t>(trial);
        spec.misalignment.theta = rng.uniform(-10.0, 10.0) * kPi / 180.0;
        spec.misalignment.tx = rng.uniform(-8.0, 8.0);
        spec.misalignment.ty = rng.uniform(-8.0, 8.0);
        imaging::Phantom ph = imaging::gen_phantom(spec);
        imaging::BrainExtraction be = imaging::brain_extract(ph.volume);
        imaging::RegistrationResult reg = imaging::register_symmetry(be.stripped);
        imaging::RigidTransform2D want = ph.applied.inverse();
        bool ok = std::fabs(reg.transform.theta - want.theta) <= 1.0 * kPi / 180.0 &&
                  std::fabs(reg.transform.tx - want.tx) <= spec.sx &&
                  std::fabs(reg.transform.ty - want.ty) <= spec.sy;
        if (ok) ++recovered;
    }
    report(7, recovered >= 19, "registration recovers random misalignments",
           fmt("%d/%d within 1 degree and 1 voxel", recovered, kTrials));
}

// ---------------------------------------------------------------- criterion 8
void dot_window_conservation() {
    Rng rng(7011);
    int intact = 0;
    const int kTrials = 50;
    for (int trial = 0; trial < kTrials; ++trial) {
        imaging::PhantomSpec spec;
        spec.nx = 128;
        spec.ny = 128;
        spec.nz = 5;
        spec.sx = 1.704;
        spec.sy = 1.704;
        spec.head_ax = 70.0;
        spec.head_ay = 88.0;
        spec.dot_present = true;
        spec.dot_side = rng.bernoulli(0.5) ? imaging::Side::right : imaging::Side::left;
        spec.dot_radius = 3.0 + 3.5 * rng.next_double();
        spec.dot_offset_x = rng.uniform(-3, 3);
        spec.dot_offset_y = rng.uniform(-5, 5);
        spec.dot_slice = static_cast<int>(rng.next_below(5));
        spec.misalignment = {rng.uniform(-0.15, 0.15), rng.uniform(-6, 6), rng.uniform(-6, 6)};
        spec.seed = 7200 + static_cast<uint64_t>(trial);
        imaging::Phantom ph = imaging::gen_phantom(spec);
        imaging::Volume win = imaging::hu_window(ph.volume, 20.0, 80.0);
        bool all = ph.dot_mask.count() > 0;
        for (size_t i = 0; i < win.size() && all; ++i)
            if (ph.dot_mask.voxels[i] && win.voxels[i] != ph.volume.voxels[i]) all = false;
        if (all) ++intact;
    }
    report(8, intact == kTrials, "HU windowing preserves every ground-truth dot voxel",
           fmt("%d/%d phantoms fully conserved", intact, kTrials));
}

// --------------------------------------------------------- criteria 9 and 10
pipeline::ScanStore benchmark_scans(const cohort::Cohort& records, uint64_t seed, int nz) {
    pipeline::ScanStore store;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!rec.scan_id) continue;
        Rng rng(hash_mix(seed, i));
        imaging::PhantomSpec ps;
        ps.nx = 128;
        ps.ny = 128;
        ps.nz = nz;
        ps.sx = 1.704;
        ps.sy = 1.704;
        ps.head_ax = 70.0;
        ps.head_ay = 88.0;
        ps.dot_present = rec.mca_dot_present.value_or(false);
        if (ps.dot_present) {
            if (rec.weak_side == cohort::WeakSide::left)
                ps.dot_side = imaging::Side::right;
            else if (rec.weak_side == cohort::WeakSide::right)
                ps.dot_side = imaging::Side::left;
            else
                ps.dot_side = rng.bernoulli(0.5) ? imaging::Side::right : imaging::Side::left;
            ps.dot_radius = 4.5 + 1.5 * rng.next_double();
            ps.dot_hu_lo = 45.0;
            ps.dot_offset_x = rng.uniform(-2, 2);
            ps.dot_offset_y = rng.uniform(-4, 4);
            ps.dot_slice = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(nz - 2)));
        }
        ps.misalignment = {rng.uniform(-0.1, 0.1), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        ps.seed = hash_mix(seed, 0x800 + i);
        imaging::Phantom ph = imaging::gen_phantom(ps);
        store.emplace(*rec.scan_id,
                      pipeline::ScanRecord{std::move(ph.volume), std::move(ph.dot_mask)});
    }
    return store;
}

pipeline::ExperimentConfig benchmark_config(uint64_t seed) {
    pipeline::ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.fcn_config.base_channels = 2;  // desk-scale level-3 extractor
    cfg.fcn_epochs = 2;
    cfg.fcn_learning_rate = 2e-3;
    cfg.fcn_batch_size = 8;
    cfg.max_fcn_train_crops = 16;
    return cfg;
}

void planted_signal_ordering() {
    cohort::CohortSpec cs;  // n=300, prevalence 130/300, planted defaults
    cohort::Cohort records = cohort::synth_cohort(cs, 42);
    pipeline::ScanStore scans = benchmark_scans(records, 43, 6);
    pipeline::PreprocessedScans prep =
        pipeline::preprocess_all(records, scans, benchmark_config(0));

    double mean[3] = {0.0, 0.0, 0.0};
    const int kSeeds = 10;
    for (int s = 0; s < kSeeds; ++s) {
        pipeline::ExperimentReport rep =
            pipeline::run_experiment(records, prep, benchmark_config(100 + s));
        for (int l = 0; l < 3; ++l) mean[l] += rep.levels[l].auc / kSeeds;
    }
    bool ordered = mean[0] + 0.05 < mean[1] && mean[1] <= mean[2] + 0.02;
    report(9, ordered, "planted-signal level ordering over 10 seeds",
           fmt("mean AUC L1 %.3f, L2 %.3f, L3 %.3f", mean[0], mean[1], mean[2]));
}

void null_safety() {
    cohort::CohortSpec cs;
    cs.size = 160;
    cohort::Cohort records = cohort::synth_cohort(cs, 51);
    pipeline::ScanStore scans = benchmark_scans(records, 52, 4);
    pipeline::PreprocessedScans prep =
        pipeline::preprocess_all(records, scans, benchmark_config(0));

    double mean[3] = {0.0, 0.0, 0.0};
    const int kSeeds = 20;
    for (int s = 0; s < kSeeds; ++s) {
        // break every feature-label link by shuffling the labels
        cohort::Cohort shuffled = records;
        Rng rng(hash_mix(600, static_cast<uint64_t>(s)));
        std::vector<uint8_t> labels;
        for (const auto& r : shuffled) labels.push_back(r.lvo ? 1 : 0);
        for (size_t i = labels.size(); i > 1; --i)
            std::swap(labels[i - 1], labels[rng.next_below(i)]);
        for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i].lvo = labels[i] != 0;

        pipeline::ExperimentConfig cfg = benchmark_config(700 + s);
        cfg.fcn_epochs = 1;
        cfg.max_fcn_train_crops = 8;
        pipeline::ExperimentReport rep = pipeline::run_experiment(shuffled, prep, cfg);
        for (int l = 0; l < 3; ++l) mean[l] += rep.levels[l].auc / kSeeds;
    }
    bool safe = true;
    for (int l = 0; l < 3; ++l) safe = safe && mean[l] >= 0.42 && mean[l] <= 0.58;
    report(10, safe, "null cohorts stay at chance AUC (no leakage)",
           fmt("mean test AUC L1 %.3f, L2 %.3f, L3 %.3f over 20 permuted seeds", mean[0],
               mean[1], mean[2]));
}

// ---------------------------------------------------------------- criterion 11
struct DotCase {
    std::vector<std::vector<double>> slices64;  // per-slice 64x64 crops
    std::vector<double> sel_img;
    std::vector<double> sel_mask;
};

std::vector<double> downsample2(const std::vector<double>& img, int size, bool maxpool) {
    int half = size / 2;
    std::vector<double> out(static_cast<size_t>(half) * half);
    for (int y = 0; y < half; ++y)
        for (int x = 0; x < half; ++x) {
            double a = img[(2 * y) * size + 2 * x], b = img[(2 * y) * size + 2 * x + 1];
            double c = img[(2 * y + 1) * size + 2 * x], d = img[(2 * y + 1) * size + 2 * x + 1];
            out[static_cast<size_t>(y) * half + x] =
                maxpool ? std::max(std::max(a, b), std::max(c, d)) : 0.25 * (a + b + c + d);
        }
    return out;
}

DotCase dot_case(uint64_t seed, bool dot) {
    Rng rng(seed);
    imaging::PhantomSpec ps;
    ps.nx = 128;
    ps.ny = 128;
    ps.nz = 5;
    ps.sx = 1.704;
    ps.sy = 1.704;
    ps.head_ax = 70.0;
    ps.head_ay = 88.0;
    ps.dot_present = dot;
    if (dot) {
        ps.dot_side = rng.bernoulli(0.5) ? imaging::Side::right : imaging::Side::left;
        ps.dot_radius = 5.0 + 1.5 * rng.next_double();
        ps.dot_hu_lo = 50.0;
        ps.dot_offset_x = rng.uniform(-2, 2);
        ps.dot_offset_y = rng.uniform(-4, 4);
        ps.dot_slice = 1 + static_cast<int>(rng.next_below(3));
    }
    ps.misalignment = {rng.uniform(-0.1, 0.1), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    ps.seed = seed * 13 + 1;
    imaging::Phantom ph = imaging::gen_phantom(ps);

    imaging::BrainExtraction be = imaging::brain_extract(ph.volume);
    imaging::RegistrationResult reg = imaging::register_symmetry(be.stripped);
    imaging::Volume win = imaging::hu_window(reg.aligned, 20, 80);
    imaging::SegMask brain_reg = imaging::transform_mask_nearest(be.mask, reg.transform);
    imaging::RoiPair boxes = imaging::locate_mca_roi(win, brain_reg);
    imaging::Side side =
        dot ? ps.dot_side : (rng.bernoulli(0.5) ? imaging::Side::right : imaging::Side::left);
    const imaging::RoiBox& box = side == imaging::Side::left ? boxes.left : boxes.right;
    imaging::CropStack stack = imaging::crop_stack(win, box, 20, 80);
    imaging::SegMask moved = imaging::transform_mask_nearest(ph.dot_mask, reg.transform);
    imaging::CropStack mstack = imaging::crop_mask_stack(moved, box);
    pipeline::SliceChoice slice = pipeline::select_slice(ph.dot_mask);

    DotCase out;
    const size_t hw = static_cast<size_t>(128) * 128;
    std::vector<double> img(stack.data.begin() + slice.index * hw,
                            stack.data.begin() + (slice.index + 1) * hw);
    std::vector<double> msk(mstack.data.begin() + slice.index * hw,
                            mstack.data.begin() + (slice.index + 1) * hw);
    out.sel_img = downsample2(img, 128, false);
    out.sel_mask = downsample2(msk, 128, true);
    for (int z = 0; z < stack.nz; ++z) {
        std::vector<double> s(stack.data.begin() + z * hw, stack.data.begin() + (z + 1) * hw);
        out.slices64.push_back(downsample2(s, 128, false));
    }
    return out;
}

void dot_detection() {
    fcn::Dataset train;
    for (int i = 0; i < 40; ++i) {
        DotCase c = dot_case(8000 + static_cast<uint64_t>(i), true);
        train.images.push_back(std::move(c.sel_img));
        train.masks.push_back(std::move(c.sel_mask));
    }
    fcn::FcnConfig cfg;
    cfg.input_size = 64;
    cfg.base_channels = 4;
    fcn::FcnModel model = fcn::init_model(cfg, 8100);
    fcn::TrainState ts;
    ts.learning_rate = 1e-2;
    ts.batch_size = 8;
    ts.epochs = 60;
    ts.loss = fcn::LossKind::bce_dice;
    ts.seed = 8101;
    fcn::train_fcn(model, train, ts);

    int flagged_pos = 0, flagged_neg = 0;
    for (int i = 0; i < 20; ++i) {
        DotCase c = dot_case(8200 + static_cast<uint64_t>(i), true);
        if (fcn::predict_dot(model, c.slices64, 3.0).flag) ++flagged_pos;
    }
    for (int i = 0; i < 20; ++i) {
        DotCase c = dot_case(8300 + static_cast<uint64_t>(i), false);
        if (fcn::predict_dot(model, c.slices64, 3.0).flag) ++flagged_neg;
    }
    report(11, flagged_pos >= 18 && flagged_neg <= 4,
           "held-out dot detection after training on 40 crops",
           fmt("flagged %d/20 dot-positive, %d/20 dot-negative", flagged_pos, flagged_neg));
}

// ---------------------------------------------------------------- criterion 12
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void cli_determinism(const std::string& cli) {
    fs::path root = fs::temp_directory_path() / "lvo_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);

    auto run_chain = [&](const fs::path& dir) -> bool {
        fs::create_directories(dir);
        std::string log = (dir / "log.txt").string();
        auto sh = [&](const std::string& cmd) {
            std::string full = cmd + " >> " + log + " 2>&1";
            return std::system(full.c_str()) == 0;
        };
        std::string d = dir.string();
        bool ok = true;
        ok = ok && sh(cli + " synth cohort --out " + d + "/cohort.csv --size 24 --seed 5");
        ok = ok && sh(cli + " synth scans --cohort " + d + "/cohort.csv --out-dir " + d +
                      "/scans --seed 5 --nx 128 --ny 128 --nz 4 --spacing-xy 1.704");
        ok = ok && sh(cli + " preprocess --cohort " + d + "/cohort.csv --scans " + d +
                      "/scans/scans_manifest.json --out-dir " + d + "/prep");
        ok = ok && sh(cli + " train-fcn --cohort " + d + "/cohort.csv --prep " + d +
                      "/prep/prep_manifest.json --out " + d +
                      "/fcn.json --seed 5 --fcn-base 2 --epochs 1 --max-crops 6 --batch 4");
        ok = ok && sh(cli + " extract --cohort " + d + "/cohort.csv --prep " + d +
                      "/prep/prep_manifest.json --fcn " + d + "/fcn.json --out " + d +
                      "/features.bin");
        ok = ok && sh(cli + " train --cohort " + d + "/cohort.csv --features " + d +
                      "/features.bin --out-dir " + d + "/models --seed 5 --folds 4 --rounds 20");
        ok = ok && sh(cli + " evaluate --cohort " + d + "/cohort.csv --features " + d +
                      "/features.bin --models " + d + "/models/models_manifest.json --out " + d +
                      "/report.json --seed 5");
        ok = ok && sh(cli + " report --report " + d + "/report.json --out-csv " + d +
                      "/report.csv --out-svg " + d + "/roc.svg");
        return ok;
    };

    bool ran = run_chain(root / "a") && run_chain(root / "b");
    std::vector<std::string> files = {"cohort.csv",
                                      "scans/scan-p01.svol",
                                      "scans/scan-p01.mask.svol",
                                      "scans/scans_manifest.json",
                                      "prep/prep_manifest.json",
                                      "prep/scan-p01.crop",
                                      "fcn.json",
                                      "features.bin",
                                      "models/gbt_level1.json",
                                      "models/gbt_level2.json",
                                      "models/gbt_level3.json",
                                      "models/models_manifest.json",
                                      "report.json",
                                      "report.csv",
                                      "roc.svg"};
    int identical = 0;
    std::string first_diff = "none";
    if (ran) {
        for (const auto& f : files) {
            std::string a = slurp(root / "a" / f);
            std::string b = slurp(root / "b" / f);
            if (!a.empty() && a == b)
                ++identical;
            else if (first_diff == "none")
                first_diff = f;
        }
    }
    report(12, ran && identical == static_cast<int>(files.size()),
           "end-to-end CLI chain is byte-deterministic",
           ran ? fmt("%d/%zu artifacts identical, first difference: %s", identical,
                     files.size(), first_diff.c_str())
               : std::string("a stage exited nonzero; see " + (root / "a" / "log.txt").string()));
}

// ---------------------------------------------------------------- criterion 13
void persistence_round_trips() {
    Rng rng(7013);
    // gbt-v1
    size_t n = 30, d = 3;
    std::vector<std::string> names = {"a", "b", "c"};
    std::vector<cohort::ColKind> kinds(d, cohort::ColKind::continuous);
    cohort::FeatureMatrix X(n, names, kinds);
    std::vector<uint8_t> y(n);
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < d; ++c)
            if (!rng.bernoulli(0.25)) X.set(r, c, rng.normal());
        y[r] = r % 2;
    }
    gbt::GbtParams prm;
    prm.num_rounds = 12;
    gbt::TreeEnsemble model = gbt::train_gbt(X, y, prm);
    gbt::TreeEnsemble reloaded = gbt::gbt_from_json(gbt::to_json(model));
    int gbt_same = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> vals(d);
        std::vector<uint8_t> miss(d);
        for (size_t c = 0; c < d; ++c) {
            vals[c] = rng.normal(0, 3);
            miss[c] = static_cast<uint8_t>(rng.bernoulli(0.3));
        }
        if (model.predict_margin(vals.data(), miss.data(), d) ==
            reloaded.predict_margin(vals.data(), miss.data(), d))
            ++gbt_same;
    }

    // fcn-v1
    fcn::FcnConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = 2;
    fcn::FcnModel net = fcn::init_model(cfg, 7014);
    fcn::FcnModel net2 = fcn::fcn_from_json(fcn::to_json(net));
    int fcn_same = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> img(16 * 16);
        for (double& v : img) v = rng.next_double();
        fcn::ForwardResult a = fcn::forward(net, img);
        fcn::ForwardResult b = fcn::forward(net2, img);
        if (a.probs == b.probs && a.bottleneck == b.bottleneck) ++fcn_same;
    }

    // SVOL bytes
    imaging::PhantomSpec spec;
    spec.nx = 64;
    spec.ny = 64;
    spec.nz = 3;
    spec.sx = 3.4;
    spec.sy = 3.4;
    spec.head_ax = 60.0;
    spec.head_ay = 80.0;
    spec.dot_present = true;
    spec.dot_radius = 6.0;
    imaging::Phantom ph = imaging::gen_phantom(spec);
    fs::path dir = fs::temp_directory_path() / "lvo_acceptance_svol";
    fs::create_directories(dir);
    imaging::write_svol(ph.volume, (dir / "v1.svol").string());
    imaging::Volume back = imaging::read_svol_volume((dir / "v1.svol").string());
    imaging::write_svol(back, (dir / "v2.svol").string());
    bool svol_ok = slurp(dir / "v1.svol") == slurp(dir / "v2.svol") &&
                   back.voxels == ph.volume.voxels;

    report(13, gbt_same == 100 && fcn_same == 100 && svol_ok,
           "gbt-v1 / fcn-v1 / SVOL1 round-trips are bit-exact",
           fmt("gbt %d/100, fcn %d/100, svol bytes %s", gbt_same, fcn_same,
               svol_ok ? "identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli = "lvo";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

    auto t0 = Clock::now();
    youden_arithmetic();
    gbt_oracle_equivalence();
    missing_totality();
    auc_rank_equivalence();
    fcn_gradient_check();
    feature_count_fidelity();
    registration_recovery();
    dot_window_conservation();
    planted_signal_ordering();
    null_safety();
    dot_detection();
    cli_determinism(cli);
    persistence_round_trips();

    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%d/13 criteria passed in %.1fs\n", 13 - g_failures, secs);
    return g_failures == 0 ? 0 : 1;
}
