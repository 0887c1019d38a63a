#include "pipeline/stages.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cohort/csv.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace lvo::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create directory '" + dir + "': " + ec.message());
}

json parse_manifest(const std::string& path, const char* expected_format) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw FormatError(std::string(expected_format) + ": invalid JSON in '" + path +
                          "': " + e.what());
    }
    if (!j.contains("format") || j["format"] != expected_format)
        throw FormatError("'" + path + "': missing or wrong format tag (expected \"" +
                          expected_format + "\")");
    return j;
}

std::optional<imaging::Side> weak_side_of(const cohort::PatientRecord& rec) {
    switch (rec.weak_side) {
        case cohort::WeakSide::left: return imaging::Side::left;
        case cohort::WeakSide::right: return imaging::Side::right;
        default: return std::nullopt;
    }
}

}  // namespace

void stage_synth_cohort(const std::string& out_csv, const cohort::CohortSpec& spec,
                        uint64_t seed) {
    cohort::Cohort records = cohort::synth_cohort(spec, seed);
    cohort::save_cohort_csv(records, out_csv);
}

void stage_synth_scans(const std::string& cohort_csv, const std::string& out_dir,
                       const ScanSynthSpec& spec, uint64_t seed) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    ensure_dir(out_dir);

    json entries = json::array();
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!rec.scan_id) continue;
        Rng rng(hash_mix(seed, 0x5ca0'0000 + i));

        imaging::PhantomSpec ps;
        ps.nx = spec.nx;
        ps.ny = spec.ny;
        ps.nz = spec.nz;
        ps.sx = spec.sx;
        ps.sy = spec.sy;
        ps.sz = spec.sz;
        // Head axes sized to the field of view so downscaled geometries
        // keep their proportions.
        double fov_x = spec.nx * spec.sx, fov_y = spec.ny * spec.sy;
        ps.head_ax = 0.32 * fov_x;
        ps.head_ay = 0.40 * fov_y;
        ps.skull_thickness = 6.0;
        ps.noise_sd = spec.noise_sd;
        ps.dot_radius = spec.dot_radius;
        ps.dot_present = rec.mca_dot_present.value_or(false);
        if (ps.dot_present) {
            // Clot sits contralateral to the weak side; unlateralised
            // records get a seeded side.
            auto ws = weak_side_of(rec);
            if (ws)
                ps.dot_side =
                    *ws == imaging::Side::left ? imaging::Side::right : imaging::Side::left;
            else
                ps.dot_side = rng.bernoulli(0.5) ? imaging::Side::right : imaging::Side::left;
            ps.dot_offset_x = rng.uniform(-2.0, 2.0);
            ps.dot_offset_y = rng.uniform(-4.0, 4.0);
        }
        double max_theta = spec.max_rotation_deg * kPi / 180.0;
        ps.misalignment.theta = rng.uniform(-max_theta, max_theta);
        ps.misalignment.tx = rng.uniform(-spec.max_shift_mm, spec.max_shift_mm);
        ps.misalignment.ty = rng.uniform(-spec.max_shift_mm, spec.max_shift_mm);
        ps.seed = hash_mix(seed, 0x9a17'0000 + i);

        imaging::Phantom phantom = imaging::gen_phantom(ps);
        std::string vol_file = *rec.scan_id + ".svol";
        std::string mask_file = *rec.scan_id + ".mask.svol";
        imaging::write_svol(phantom.volume, out_dir + "/" + vol_file);
        imaging::write_svol(phantom.dot_mask, out_dir + "/" + mask_file);
        if (spec.dump_pgm)
            write_bytes(out_dir + "/" + *rec.scan_id + ".pgm",
                        imaging::slice_to_pgm(phantom.volume, spec.nz / 2, 0.0, 80.0));

        json e;
        e["scan_id"] = *rec.scan_id;
        e["record_id"] = rec.id;
        e["volume"] = vol_file;
        e["mask"] = mask_file;
        e["dot_present"] = ps.dot_present;
        e["misalignment_theta_rad"] = ps.misalignment.theta;
        e["misalignment_tx_mm"] = ps.misalignment.tx;
        e["misalignment_ty_mm"] = ps.misalignment.ty;
        entries.push_back(std::move(e));
    }

    json manifest;
    manifest["format"] = "scans-v1";
    manifest["seed"] = seed;
    manifest["entries"] = std::move(entries);
    write_bytes(out_dir + "/scans_manifest.json", manifest.dump(1) + "\n");
}

ScanStore load_scan_store(const std::string& scans_manifest) {
    json j = parse_manifest(scans_manifest, "scans-v1");
    std::string dir = fs::path(scans_manifest).parent_path().string();
    if (dir.empty()) dir = ".";
    ScanStore store;
    try {
        for (const auto& e : j.at("entries")) {
            ScanRecord sr;
            sr.volume = imaging::read_svol_volume(dir + "/" + e.at("volume").get<std::string>());
            sr.dot_mask = imaging::read_svol_mask(dir + "/" + e.at("mask").get<std::string>());
            store.emplace(e.at("scan_id").get<std::string>(), std::move(sr));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("scans-v1: malformed manifest: ") + e.what());
    }
    return store;
}

namespace {

constexpr char kCropMagic[4] = {'L', 'V', 'O', 'C'};

std::string crop_to_bytes(const PreprocessedScan& ps) {
    std::string out(kCropMagic, 4);
    auto put_u32 = [&](uint32_t v) {
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
    };
    put_u32(1);  // version
    put_u32(imaging::RoiBox::kSize);
    put_u32(static_cast<uint32_t>(ps.selected_slice));
    out.push_back(ps.slice_fallback ? 1 : 0);
    out.push_back(ps.side == imaging::Side::right ? 1 : 0);
    out.push_back(ps.side_auto ? 1 : 0);
    for (double v : ps.image) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
    }
    out.append(reinterpret_cast<const char*>(ps.mask.data()), ps.mask.size());
    return out;
}

PreprocessedScan crop_from_bytes(const std::string& bytes, const std::string& path) {
    const size_t hw = static_cast<size_t>(imaging::RoiBox::kSize) * imaging::RoiBox::kSize;
    const size_t expected = 4 + 12 + 3 + hw * 8 + hw;
    if (bytes.size() != expected || std::memcmp(bytes.data(), kCropMagic, 4) != 0)
        throw FormatError("LVOC1: '" + path + "' bad magic or size");
    auto get_u32 = [&](size_t off) {
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[off + k])) << (8 * k);
        return v;
    };
    if (get_u32(4) != 1) throw FormatError("LVOC1: '" + path + "' unsupported version");
    if (get_u32(8) != imaging::RoiBox::kSize)
        throw FormatError("LVOC1: '" + path + "' unexpected crop size");
    PreprocessedScan ps;
    ps.selected_slice = static_cast<int>(get_u32(12));
    ps.slice_fallback = bytes[16] != 0;
    ps.side = bytes[17] != 0 ? imaging::Side::right : imaging::Side::left;
    ps.side_auto = bytes[18] != 0;
    ps.image.resize(hw);
    size_t off = 19;
    for (size_t i = 0; i < hw; ++i) {
        uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[off + k])) << (8 * k);
        std::memcpy(&ps.image[i], &bits, 8);
        off += 8;
    }
    ps.mask.resize(hw);
    std::memcpy(ps.mask.data(), bytes.data() + off, hw);
    return ps;
}

}  // namespace

void stage_preprocess(const std::string& cohort_csv, const std::string& scans_manifest,
                      const std::string& out_dir, const ExperimentConfig& config) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    ScanStore scans = load_scan_store(scans_manifest);
    ensure_dir(out_dir);

    json entries = json::array();
    for (const auto& rec : records) {
        if (!rec.scan_id) continue;
        auto it = scans.find(*rec.scan_id);
        if (it == scans.end()) continue;
        PreprocessedScan ps =
            preprocess_scan(it->second.volume, it->second.dot_mask, weak_side_of(rec),
                            config.window_lo, config.window_hi, config.ipsilateral);
        std::string file = *rec.scan_id + ".crop";
        write_bytes(out_dir + "/" + file, crop_to_bytes(ps));
        if (config.dump_pgm) {
            std::string pgm = "P5\n128 128\n255\n";
            for (double v : ps.image)
                pgm.push_back(static_cast<char>(
                    std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
            write_bytes(out_dir + "/" + *rec.scan_id + ".crop.pgm", pgm);
        }
        json e;
        e["scan_id"] = *rec.scan_id;
        e["file"] = file;
        e["selected_slice"] = ps.selected_slice;
        e["slice_fallback"] = ps.slice_fallback;
        e["side"] = ps.side == imaging::Side::right ? "right" : "left";
        e["side_auto"] = ps.side_auto;
        entries.push_back(std::move(e));
    }
    json manifest;
    manifest["format"] = "prep-v1";
    manifest["window_lo"] = config.window_lo;
    manifest["window_hi"] = config.window_hi;
    manifest["entries"] = std::move(entries);
    write_bytes(out_dir + "/prep_manifest.json", manifest.dump(1) + "\n");
}

PreprocessedScans load_preprocessed(const std::string& prep_manifest) {
    json j = parse_manifest(prep_manifest, "prep-v1");
    std::string dir = fs::path(prep_manifest).parent_path().string();
    if (dir.empty()) dir = ".";
    PreprocessedScans out;
    try {
        for (const auto& e : j.at("entries")) {
            std::string path = dir + "/" + e.at("file").get<std::string>();
            out.emplace(e.at("scan_id").get<std::string>(),
                        crop_from_bytes(read_text(path), path));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("prep-v1: malformed manifest: ") + e.what());
    }
    return out;
}

void stage_train_fcn(const std::string& cohort_csv, const std::string& prep_manifest,
                     const std::string& out_model, const ExperimentConfig& config) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    PreprocessedScans prep = load_preprocessed(prep_manifest);
    Split split = split_cohort(labels_of(records), config.train_fraction,
                               config.stratified_split, hash_mix(config.seed, 0x5b17));
    fcn::FcnModel model = train_level3_fcn(records, prep, split.train, config);
    fcn::save_fcn(model, out_model);
}

namespace {

constexpr char kFeatMagic[4] = {'L', 'V', 'O', 'F'};

}  // namespace

void stage_extract(const std::string& cohort_csv, const std::string& prep_manifest,
                   const std::string& fcn_model, const std::string& out_features) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    PreprocessedScans prep = load_preprocessed(prep_manifest);
    fcn::FcnModel model = fcn::load_fcn(fcn_model);

    std::vector<const cohort::PatientRecord*> with_scan;
    for (const auto& rec : records)
        if (rec.scan_id && prep.count(*rec.scan_id)) with_scan.push_back(&rec);
    std::vector<std::vector<double>> feats(with_scan.size());
    parallel_for(with_scan.size(), [&](size_t i) {
        feats[i] = fcn::extract_features(model, prep.at(*with_scan[i]->scan_id).image);
    });

    std::string out(kFeatMagic, 4);
    auto put_u32 = [&](uint32_t v) {
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
    };
    put_u32(1);  // version
    put_u32(static_cast<uint32_t>(with_scan.size()));
    put_u32(static_cast<uint32_t>(model.config.bottleneck_len()));
    for (size_t i = 0; i < with_scan.size(); ++i) {
        put_u32(static_cast<uint32_t>(with_scan[i]->id.size()));
        out += with_scan[i]->id;
        for (double v : feats[i]) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int k = 0; k < 8; ++k)
                out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
        }
    }
    write_bytes(out_features, out);
}

std::map<std::string, std::vector<double>> load_features(const std::string& features_file) {
    std::string bytes = read_text(features_file);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatMagic, 4) != 0)
        throw FormatError("LVOF: '" + features_file + "' bad magic (expected LVOF)");
    auto get_u32 = [&](size_t off) {
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
            v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[off + k])) << (8 * k);
        return v;
    };
    if (get_u32(4) != 1) throw FormatError("LVOF: '" + features_file + "' unsupported version");
    uint32_t count = get_u32(8);
    uint32_t dim = get_u32(12);
    std::map<std::string, std::vector<double>> out;
    size_t off = 16;
    for (uint32_t r = 0; r < count; ++r) {
        if (off + 4 > bytes.size()) throw FormatError("LVOF: truncated record header");
        uint32_t id_len = get_u32(off);
        off += 4;
        if (off + id_len + static_cast<size_t>(dim) * 8 > bytes.size())
            throw FormatError("LVOF: truncated record payload");
        std::string id = bytes.substr(off, id_len);
        off += id_len;
        std::vector<double> feats(dim);
        for (uint32_t i = 0; i < dim; ++i) {
            uint64_t bits = 0;
            for (int k = 0; k < 8; ++k)
                bits |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[off + k])) << (8 * k);
            std::memcpy(&feats[i], &bits, 8);
            off += 8;
        }
        out.emplace(std::move(id), std::move(feats));
    }
    return out;
}

void stage_train(const std::string& cohort_csv, const std::string& features_file,
                 const std::string& out_dir, const ExperimentConfig& config) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    std::vector<uint8_t> y = labels_of(records);
    Split split = split_cohort(y, config.train_fraction, config.stratified_split,
                               hash_mix(config.seed, 0x5b17));
    ensure_dir(out_dir);

    std::map<std::string, std::vector<double>> image_features;
    if (config.run_level[2] && !features_file.empty())
        image_features = load_features(features_file);

    json levels = json::array();
    for (int level = 1; level <= 3; ++level) {
        if (!config.run_level[level - 1]) continue;

        std::vector<int> selected;
        if (level == 3) {
            std::vector<std::vector<double>> train_feats;
            std::vector<uint8_t> train_labels;
            for (size_t i : split.train) {
                auto it = image_features.find(records[i].id);
                if (it == image_features.end()) continue;
                train_feats.push_back(it->second);
                train_labels.push_back(y[i]);
            }
            if (train_feats.size() >= 4) {
                int k = std::min<int>(config.top_k,
                                      static_cast<int>(train_feats.front().size()));
                for (const auto& col : select_top_k(train_feats, train_labels, k))
                    selected.push_back(col.index);
            }
        }
        LevelSpec spec = LevelSpec::make(level, selected);
        cohort::FeatureMatrix X =
            vectorize(records, spec, level == 3 ? &image_features : nullptr);

        cohort::FeatureMatrix Xtr(split.train.size(), X.col_names(), X.col_kinds());
        std::vector<uint8_t> ytr;
        for (size_t r = 0; r < split.train.size(); ++r) {
            for (size_t c = 0; c < X.cols(); ++c)
                if (!X.is_missing(split.train[r], c)) Xtr.set(r, c, X.at(split.train[r], c));
            ytr.push_back(y[split.train[r]]);
        }

        metrics::CutoffSelection cut = metrics::select_cutoff_cv(
            Xtr, ytr, config.gbt, config.cv_folds, hash_mix(config.seed, 0xcf00 + level));
        gbt::TreeEnsemble model = gbt::train_gbt(Xtr, ytr, config.gbt);
        std::string model_file = "gbt_level" + std::to_string(level) + ".json";
        gbt::save_gbt(model, out_dir + "/" + model_file);

        json l;
        l["level"] = level;
        l["cutoff"] = cut.threshold;
        l["pooled_youden"] = cut.pooled_youden;
        l["model"] = model_file;
        l["selected_image_features"] = selected;
        levels.push_back(std::move(l));
    }

    json manifest;
    manifest["format"] = "models-v1";
    manifest["seed"] = config.seed;
    manifest["levels"] = std::move(levels);
    write_bytes(out_dir + "/models_manifest.json", manifest.dump(1) + "\n");
}

void stage_evaluate(const std::string& cohort_csv, const std::string& features_file,
                    const std::string& models_manifest, const std::string& out_report,
                    const ExperimentConfig& config) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    std::vector<uint8_t> y = labels_of(records);
    Split split = split_cohort(y, config.train_fraction, config.stratified_split,
                               hash_mix(config.seed, 0x5b17));
    json manifest = parse_manifest(models_manifest, "models-v1");
    std::string dir = fs::path(models_manifest).parent_path().string();
    if (dir.empty()) dir = ".";

    std::map<std::string, std::vector<double>> image_features;
    if (!features_file.empty()) image_features = load_features(features_file);

    ExperimentReport report;
    report.seed = config.seed;
    report.n_train = split.train.size();
    report.n_test = split.test.size();
    try {
        for (const auto& l : manifest.at("levels")) {
            int level = l.at("level").get<int>();
            double cutoff = l.at("cutoff").get<double>();
            std::vector<int> selected =
                l.at("selected_image_features").get<std::vector<int>>();
            gbt::TreeEnsemble model =
                gbt::load_gbt(dir + "/" + l.at("model").get<std::string>());

            LevelSpec spec = LevelSpec::make(level, selected);
            cohort::FeatureMatrix X =
                vectorize(records, spec, level == 3 ? &image_features : nullptr);

            std::vector<double> scores;
            std::vector<uint8_t> ytest;
            for (size_t i : split.test) {
                scores.push_back(model.predict_proba(X, i));
                ytest.push_back(y[i]);
            }
            LevelResult res;
            res.level = level;
            res.cutoff = cutoff;
            metrics::ConfusionMetrics cm = metrics::confusion_at(scores, ytest, cutoff);
            res.sensitivity = cm.sensitivity;
            res.specificity = cm.specificity;
            res.youden = cm.youden;
            res.accuracy = cm.accuracy;
            res.roc = metrics::roc_curve(scores, ytest);
            res.auc = res.roc.auc;
            res.selected_image_features = selected;
            report.levels.push_back(std::move(res));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("models-v1: malformed manifest: ") + e.what());
    }
    write_bytes(out_report, report_to_json(report));
}

void stage_report(const std::string& report_json, const std::string& out_csv,
                  const std::string& out_svg) {
    ExperimentReport report = report_from_json(read_text(report_json));
    write_bytes(out_csv, report_to_csv(report));
    write_bytes(out_svg, report_to_svg(report));
    // Raw operating points per level, next to the table.
    std::string dir = fs::path(out_csv).parent_path().string();
    if (dir.empty()) dir = ".";
    for (const auto& lv : report.levels)
        write_bytes(dir + "/roc_level" + std::to_string(lv.level) + ".csv",
                    metrics::roc_to_csv(lv.roc));
}

void stage_run(const std::string& cohort_csv, const std::string& scans_manifest,
               const ExperimentConfig& config, const std::string& out_dir) {
    cohort::Cohort records = cohort::load_cohort_csv(cohort_csv);
    ensure_dir(out_dir);
    ScanStore scans;
    if (config.run_level[2] && !scans_manifest.empty()) scans = load_scan_store(scans_manifest);
    ExperimentReport report = run_experiment(records, scans, config);
    write_bytes(out_dir + "/report.json", report_to_json(report));
    write_bytes(out_dir + "/report.csv", report_to_csv(report));
    write_bytes(out_dir + "/roc.svg", report_to_svg(report));
}

}  // namespace lvo::pipeline
