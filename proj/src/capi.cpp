#include "lvo/lvo.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "cohort/csv.hpp"
#include "cohort/stats.hpp"
#include "cohort/synth.hpp"
#include "fcn/fcn.hpp"
#include "gbt/gbt.hpp"
#include "imaging/volume.hpp"
#include "pipeline/stages.hpp"

using json = nlohmann::json;

namespace {

thread_local std::string g_last_error;

lvo_status to_status(std::exception_ptr eptr) {
    try {
        std::rethrow_exception(eptr);
    } catch (const lvo::UsageError& e) {
        g_last_error = e.what();
        return LVO_E_USAGE;
    } catch (const lvo::FormatError& e) {
        g_last_error = e.what();
        return LVO_E_FORMAT;
    } catch (const lvo::ValidationError& e) {
        g_last_error = e.what();
        return LVO_E_VALIDATION;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LVO_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return LVO_E_INTERNAL;
    }
}

template <typename Fn>
lvo_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return LVO_OK;
    } catch (...) {
        return to_status(std::current_exception());
    }
}

// Handle construction with error capture; returns nullptr on failure.
template <typename T, typename Fn>
T* guarded_new(Fn&& fn) {
    try {
        T* out = fn();
        g_last_error.clear();
        return out;
    } catch (...) {
        to_status(std::current_exception());
        return nullptr;
    }
}

lvo_status check_args(bool ok, const char* what) {
    if (!ok) {
        g_last_error = std::string("invalid argument: ") + what;
        return LVO_E_USAGE;
    }
    return LVO_OK;
}

json parse_options(const char* options_json) {
    if (!options_json || !*options_json) return json::object();
    json j = json::parse(options_json, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw lvo::UsageError("options must be a JSON object");
    return j;
}

lvo::cohort::CohortSpec cohort_spec_from(uint32_t size, double prevalence, const json& o) {
    lvo::cohort::CohortSpec spec;
    if (size > 0) spec.size = static_cast<int>(size);
    if (prevalence > 0.0) spec.prevalence = prevalence;
    spec.size = o.value("size", spec.size);
    spec.prevalence = o.value("prevalence", spec.prevalence);
    if (o.contains("mca_dot")) {
        spec.mca_dot.p_lvo = o["mca_dot"].value("p_lvo", spec.mca_dot.p_lvo);
        spec.mca_dot.p_non = o["mca_dot"].value("p_non", spec.mca_dot.p_non);
    }
    spec.assign_scan_ids = o.value("assign_scan_ids", spec.assign_scan_ids);
    return spec;
}

lvo::pipeline::ExperimentConfig experiment_config_from(const json& o) {
    if (o.empty()) return {};
    json tagged = o;
    tagged["format"] = "exp-v1";
    return lvo::pipeline::experiment_config_from_json(tagged.dump());
}

lvo::pipeline::ScanSynthSpec scan_spec_from(const json& o) {
    lvo::pipeline::ScanSynthSpec spec;
    spec.nx = o.value("nx", spec.nx);
    spec.ny = o.value("ny", spec.ny);
    spec.nz = o.value("nz", spec.nz);
    spec.sx = o.value("sx", spec.sx);
    spec.sy = o.value("sy", spec.sy);
    spec.sz = o.value("sz", spec.sz);
    spec.dot_radius = o.value("dot_radius", spec.dot_radius);
    spec.noise_sd = o.value("noise_sd", spec.noise_sd);
    spec.max_rotation_deg = o.value("max_rotation_deg", spec.max_rotation_deg);
    spec.max_shift_mm = o.value("max_shift_mm", spec.max_shift_mm);
    spec.dump_pgm = o.value("dump_pgm", spec.dump_pgm);
    return spec;
}

}  // namespace

struct lvo_cohort {
    lvo::cohort::Cohort records;
};
struct lvo_volume {
    lvo::imaging::Volume volume;
};
struct lvo_gbt {
    lvo::gbt::TreeEnsemble model;
};
struct lvo_fcn {
    lvo::fcn::FcnModel model;
};

extern "C" {

const char* lvo_version(void) { return "1.0.0"; }

const char* lvo_last_error(void) { return g_last_error.c_str(); }

lvo_status lvo_stage_synth_cohort(const char* out_csv, uint32_t size, double prevalence,
                                  uint64_t seed, const char* options_json) {
    if (auto rc = check_args(out_csv != nullptr, "out_csv")) return rc;
    return guarded([&] {
        json o = parse_options(options_json);
        lvo::pipeline::stage_synth_cohort(out_csv, cohort_spec_from(size, prevalence, o), seed);
    });
}

lvo_status lvo_stage_synth_scans(const char* cohort_csv, const char* out_dir, uint64_t seed,
                                 const char* options_json) {
    if (auto rc = check_args(cohort_csv && out_dir, "cohort_csv/out_dir")) return rc;
    return guarded([&] {
        json o = parse_options(options_json);
        lvo::pipeline::stage_synth_scans(cohort_csv, out_dir, scan_spec_from(o), seed);
    });
}

lvo_status lvo_stage_preprocess(const char* cohort_csv, const char* scans_manifest,
                                const char* out_dir, const char* options_json) {
    if (auto rc = check_args(cohort_csv && scans_manifest && out_dir, "paths")) return rc;
    return guarded([&] {
        lvo::pipeline::stage_preprocess(cohort_csv, scans_manifest, out_dir,
                                        experiment_config_from(parse_options(options_json)));
    });
}

lvo_status lvo_stage_train_fcn(const char* cohort_csv, const char* prep_manifest,
                               const char* out_model, const char* options_json) {
    if (auto rc = check_args(cohort_csv && prep_manifest && out_model, "paths")) return rc;
    return guarded([&] {
        lvo::pipeline::stage_train_fcn(cohort_csv, prep_manifest, out_model,
                                       experiment_config_from(parse_options(options_json)));
    });
}

lvo_status lvo_stage_extract(const char* cohort_csv, const char* prep_manifest,
                             const char* fcn_model, const char* out_features) {
    if (auto rc = check_args(cohort_csv && prep_manifest && fcn_model && out_features, "paths"))
        return rc;
    return guarded([&] {
        lvo::pipeline::stage_extract(cohort_csv, prep_manifest, fcn_model, out_features);
    });
}

lvo_status lvo_stage_train(const char* cohort_csv, const char* features_file,
                           const char* out_dir, const char* options_json) {
    if (auto rc = check_args(cohort_csv && out_dir, "paths")) return rc;
    return guarded([&] {
        lvo::pipeline::stage_train(cohort_csv, features_file ? features_file : "", out_dir,
                                   experiment_config_from(parse_options(options_json)));
    });
}

lvo_status lvo_stage_evaluate(const char* cohort_csv, const char* features_file,
                              const char* models_manifest, const char* out_report,
                              const char* options_json) {
    if (auto rc = check_args(cohort_csv && models_manifest && out_report, "paths")) return rc;
    return guarded([&] {
        lvo::pipeline::stage_evaluate(cohort_csv, features_file ? features_file : "",
                                      models_manifest, out_report,
                                      experiment_config_from(parse_options(options_json)));
    });
}

lvo_status lvo_stage_report(const char* report_json, const char* out_csv, const char* out_svg) {
    if (auto rc = check_args(report_json && out_csv && out_svg, "paths")) return rc;
    return guarded([&] { lvo::pipeline::stage_report(report_json, out_csv, out_svg); });
}

lvo_status lvo_stage_run(const char* cohort_csv, const char* scans_manifest, const char* out_dir,
                         const char* options_json) {
    if (auto rc = check_args(cohort_csv && out_dir, "paths")) return rc;
    return guarded([&] {
        lvo::pipeline::stage_run(cohort_csv, scans_manifest ? scans_manifest : "",
                                 experiment_config_from(parse_options(options_json)), out_dir);
    });
}

lvo_cohort* lvo_cohort_load(const char* csv_path) {
    if (!csv_path) {
        g_last_error = "invalid argument: csv_path";
        return nullptr;
    }
    return guarded_new<lvo_cohort>(
        [&] { return new lvo_cohort{lvo::cohort::load_cohort_csv(csv_path)}; });
}

lvo_cohort* lvo_cohort_synth(uint32_t size, double prevalence, uint64_t seed,
                             const char* options_json) {
    return guarded_new<lvo_cohort>([&] {
        json o = parse_options(options_json);
        return new lvo_cohort{
            lvo::cohort::synth_cohort(cohort_spec_from(size, prevalence, o), seed)};
    });
}

lvo_status lvo_cohort_save(const lvo_cohort* cohort, const char* csv_path) {
    if (auto rc = check_args(cohort && csv_path, "cohort/csv_path")) return rc;
    return guarded([&] { lvo::cohort::save_cohort_csv(cohort->records, csv_path); });
}

int32_t lvo_cohort_size(const lvo_cohort* cohort) {
    return cohort ? static_cast<int32_t>(cohort->records.size()) : -1;
}

int32_t lvo_cohort_lvo_count(const lvo_cohort* cohort) {
    if (!cohort) return -1;
    int32_t n = 0;
    for (const auto& rec : cohort->records) n += rec.lvo ? 1 : 0;
    return n;
}

char* lvo_cohort_stats_csv(const lvo_cohort* cohort) {
    if (!cohort) {
        g_last_error = "invalid argument: cohort";
        return nullptr;
    }
    return guarded_new<char>([&] {
        std::string text = lvo::cohort::cohort_stats_to_csv(lvo::cohort::cohort_stats(cohort->records));
        char* out = new char[text.size() + 1];
        std::memcpy(out, text.c_str(), text.size() + 1);
        return out;
    });
}

void lvo_cohort_free(lvo_cohort* cohort) { delete cohort; }

lvo_volume* lvo_volume_read(const char* svol_path) {
    if (!svol_path) {
        g_last_error = "invalid argument: svol_path";
        return nullptr;
    }
    return guarded_new<lvo_volume>(
        [&] { return new lvo_volume{lvo::imaging::read_svol_volume(svol_path)}; });
}

lvo_status lvo_volume_dims(const lvo_volume* volume, uint32_t* nx, uint32_t* ny, uint32_t* nz) {
    if (auto rc = check_args(volume && nx && ny && nz, "volume/out params")) return rc;
    *nx = static_cast<uint32_t>(volume->volume.nx);
    *ny = static_cast<uint32_t>(volume->volume.ny);
    *nz = static_cast<uint32_t>(volume->volume.nz);
    return LVO_OK;
}

lvo_status lvo_volume_spacing(const lvo_volume* volume, double* sx, double* sy, double* sz) {
    if (auto rc = check_args(volume && sx && sy && sz, "volume/out params")) return rc;
    *sx = volume->volume.sx;
    *sy = volume->volume.sy;
    *sz = volume->volume.sz;
    return LVO_OK;
}

lvo_status lvo_volume_write(const lvo_volume* volume, const char* svol_path) {
    if (auto rc = check_args(volume && svol_path, "volume/svol_path")) return rc;
    return guarded([&] { lvo::imaging::write_svol(volume->volume, svol_path); });
}

void lvo_volume_free(lvo_volume* volume) { delete volume; }

lvo_gbt* lvo_gbt_load(const char* path) {
    if (!path) {
        g_last_error = "invalid argument: path";
        return nullptr;
    }
    return guarded_new<lvo_gbt>([&] { return new lvo_gbt{lvo::gbt::load_gbt(path)}; });
}

lvo_status lvo_gbt_predict(const lvo_gbt* model, const double* values, const uint8_t* missing,
                           int32_t n, double* out_probability) {
    if (auto rc = check_args(model && values && missing && out_probability && n > 0, "arguments"))
        return rc;
    return guarded([&] {
        *out_probability =
            model->model.predict_proba(values, missing, static_cast<size_t>(n));
    });
}

void lvo_gbt_free(lvo_gbt* model) { delete model; }

lvo_fcn* lvo_fcn_load(const char* path) {
    if (!path) {
        g_last_error = "invalid argument: path";
        return nullptr;
    }
    return guarded_new<lvo_fcn>([&] { return new lvo_fcn{lvo::fcn::load_fcn(path)}; });
}

int32_t lvo_fcn_feature_len(const lvo_fcn* model) {
    return model ? static_cast<int32_t>(model->model.config.bottleneck_len()) : -1;
}

lvo_status lvo_fcn_extract(const lvo_fcn* model, const double* image, int32_t n_pixels,
                           double* out, int32_t out_len) {
    if (auto rc = check_args(model && image && out, "arguments")) return rc;
    return guarded([&] {
        std::vector<double> img(image, image + n_pixels);
        std::vector<double> feats = lvo::fcn::extract_features(model->model, img);
        if (static_cast<size_t>(out_len) < feats.size())
            throw lvo::UsageError("output buffer too small: need " +
                                  std::to_string(feats.size()) + " values");
        std::memcpy(out, feats.data(), feats.size() * sizeof(double));
    });
}

void lvo_fcn_free(lvo_fcn* model) { delete model; }

void lvo_string_free(char* text) { delete[] text; }

}  // extern "C"
