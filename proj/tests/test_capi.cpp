// Exercises the shared library surface end to end: status codes, the
// thread-local error message, opaque handles, and the staged pipeline.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "lvo/lvo.h"

namespace fs = std::filesystem;

namespace {

struct TempTree {
    fs::path root;
    TempTree() {
        root = fs::temp_directory_path() / "lvo_capi_test";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    std::string operator/(const char* name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("version and error state") {
    CHECK(std::string(lvo_version()) == "1.0.0");
    CHECK(lvo_cohort_load(nullptr) == nullptr);
    CHECK(std::string(lvo_last_error()).find("csv_path") != std::string::npos);
}

TEST_CASE("cohort stage, handles and stats") {
    TempTree tmp;
    std::string csv = tmp / "cohort.csv";
    REQUIRE(lvo_stage_synth_cohort(csv.c_str(), 40, 0.5, 11, "{}") == LVO_OK);
    CHECK(std::string(lvo_last_error()).empty());

    lvo_cohort* cohort = lvo_cohort_load(csv.c_str());
    REQUIRE(cohort != nullptr);
    CHECK(lvo_cohort_size(cohort) == 40);
    CHECK(lvo_cohort_lvo_count(cohort) == 20);

    char* stats = lvo_cohort_stats_csv(cohort);
    REQUIRE(stats != nullptr);
    CHECK(std::string(stats).find("feature,kind") == 0);
    lvo_string_free(stats);

    std::string copy = tmp / "copy.csv";
    CHECK(lvo_cohort_save(cohort, copy.c_str()) == LVO_OK);
    lvo_cohort* reloaded = lvo_cohort_load(copy.c_str());
    REQUIRE(reloaded != nullptr);
    CHECK(lvo_cohort_size(reloaded) == 40);
    lvo_cohort_free(reloaded);
    lvo_cohort_free(cohort);

    // synthesis handle without files
    lvo_cohort* synth = lvo_cohort_synth(30, 0.4, 5, nullptr);
    REQUIRE(synth != nullptr);
    CHECK(lvo_cohort_size(synth) == 30);
    CHECK(lvo_cohort_lvo_count(synth) == 12);
    lvo_cohort_free(synth);
}

TEST_CASE("status codes distinguish usage, format and validation failures") {
    TempTree tmp;
    // usage: unreadable input
    CHECK(lvo_cohort_load((tmp / "missing.csv").c_str()) == nullptr);

    // validation: a record violating an invariant
    std::string bad_csv = tmp / "bad.csv";
    {
        FILE* f = fopen(bad_csv.c_str(), "wb");
        std::string header =
            "id,age,sex,speech_deficit,facial_weakness,facial_weakness_left,"
            "facial_weakness_right,limb_weakness,weakness_left,weakness_right,diabetes,"
            "hypertension,smoker_ever,smoker_current,smoker_previous,bp_systolic,bp_diastolic,"
            "gcs_total,gcs_eye,gcs_verbal,gcs_motor,afib,atherosclerosis,"
            "valvular_heart_disease,cardioembolism,prior_stroke,ischemic_heart_disease,lvo,"
            "mca_dot_present,weak_side,scan_id\n";
        std::string row = "p1,17,1,0,0,0,0,0,0,0,0,0,0,0,0,,,,,,,0,0,0,0,0,0,1,,none,\n";
        fwrite(header.data(), 1, header.size(), f);
        fwrite(row.data(), 1, row.size(), f);
        fclose(f);
    }
    std::string scans_dir = tmp / "scans";
    lvo_status rc = lvo_stage_synth_scans(bad_csv.c_str(), scans_dir.c_str(), 1, "{}");
    CHECK(rc == LVO_E_VALIDATION);
    CHECK(std::string(lvo_last_error()).find("age") != std::string::npos);

    // format: corrupt SVOL magic
    std::string junk = tmp / "junk.svol";
    {
        FILE* f = fopen(junk.c_str(), "wb");
        fwrite("JUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNK", 1, 36, f);
        fclose(f);
    }
    CHECK(lvo_volume_read(junk.c_str()) == nullptr);
    CHECK(std::string(lvo_last_error()).find("magic") != std::string::npos);

    CHECK(lvo_stage_report(junk.c_str(), (tmp / "x.csv").c_str(), (tmp / "x.svg").c_str()) ==
          LVO_E_FORMAT);

    // usage: malformed options JSON
    CHECK(lvo_stage_synth_cohort((tmp / "c.csv").c_str(), 20, 0.5, 1, "{nope") == LVO_E_USAGE);
}

TEST_CASE("staged chain through the C API with handle round-trips") {
    TempTree tmp;
    std::string csv = tmp / "cohort.csv";
    REQUIRE(lvo_stage_synth_cohort(csv.c_str(), 24, 0.5, 3, "{}") == LVO_OK);

    std::string scans_dir = tmp / "scans";
    const char* scan_opts = "{\"nx\":128,\"ny\":128,\"nz\":4,\"sx\":1.704,\"sy\":1.704}";
    REQUIRE(lvo_stage_synth_scans(csv.c_str(), scans_dir.c_str(), 3, scan_opts) == LVO_OK);

    // volume handle: dims and spacing from an emitted file
    lvo_volume* vol = lvo_volume_read((scans_dir + "/scan-p01.svol").c_str());
    REQUIRE(vol != nullptr);
    uint32_t nx = 0, ny = 0, nz = 0;
    REQUIRE(lvo_volume_dims(vol, &nx, &ny, &nz) == LVO_OK);
    CHECK(nx == 128);
    CHECK(ny == 128);
    CHECK(nz == 4);
    double sx = 0, sy = 0, sz = 0;
    REQUIRE(lvo_volume_spacing(vol, &sx, &sy, &sz) == LVO_OK);
    CHECK(sx == doctest::Approx(1.704).epsilon(1e-6));
    std::string vol_copy = tmp / "copy.svol";
    CHECK(lvo_volume_write(vol, vol_copy.c_str()) == LVO_OK);
    lvo_volume_free(vol);

    std::string prep_dir = tmp / "prep";
    REQUIRE(lvo_stage_preprocess(csv.c_str(), (scans_dir + "/scans_manifest.json").c_str(),
                                 prep_dir.c_str(), "{}") == LVO_OK);

    std::string fcn_path = tmp / "fcn.json";
    const char* fcn_opts =
        "{\"seed\":3,\"fcn\":{\"base_channels\":2,\"epochs\":1,\"batch_size\":4,"
        "\"max_train_crops\":6}}";
    REQUIRE(lvo_stage_train_fcn(csv.c_str(), (prep_dir + "/prep_manifest.json").c_str(),
                                fcn_path.c_str(), fcn_opts) == LVO_OK);

    lvo_fcn* fcn = lvo_fcn_load(fcn_path.c_str());
    REQUIRE(fcn != nullptr);
    CHECK(lvo_fcn_feature_len(fcn) == 4096);  // base 2: 16x16x16
    std::vector<double> image(128 * 128, 0.25);
    std::vector<double> feats(4096, 0.0);
    CHECK(lvo_fcn_extract(fcn, image.data(), 128 * 128, feats.data(), 4096) == LVO_OK);
    std::vector<double> small(16, 0.0);
    CHECK(lvo_fcn_extract(fcn, image.data(), 128 * 128, small.data(), 16) == LVO_E_USAGE);
    lvo_fcn_free(fcn);

    std::string feat_path = tmp / "features.bin";
    REQUIRE(lvo_stage_extract(csv.c_str(), (prep_dir + "/prep_manifest.json").c_str(),
                              fcn_path.c_str(), feat_path.c_str()) == LVO_OK);

    std::string models_dir = tmp / "models";
    const char* train_opts = "{\"seed\":3,\"cv_folds\":4,\"gbt\":{\"num_rounds\":20}}";
    REQUIRE(lvo_stage_train(csv.c_str(), feat_path.c_str(), models_dir.c_str(), train_opts) ==
            LVO_OK);

    // gbt handle: load the level-2 model and predict a fully-missing row
    lvo_gbt* gbt = lvo_gbt_load((models_dir + "/gbt_level2.json").c_str());
    REQUIRE(gbt != nullptr);
    std::vector<double> values(24, 0.0);
    std::vector<uint8_t> missing(24, 1);
    double proba = -1.0;
    REQUIRE(lvo_gbt_predict(gbt, values.data(), missing.data(), 24, &proba) == LVO_OK);
    CHECK(proba > 0.0);
    CHECK(proba < 1.0);
    double bad = 0.0;
    CHECK(lvo_gbt_predict(gbt, values.data(), missing.data(), 3, &bad) == LVO_E_VALIDATION);
    lvo_gbt_free(gbt);

    std::string report_path = tmp / "report.json";
    REQUIRE(lvo_stage_evaluate(csv.c_str(), feat_path.c_str(),
                               (models_dir + "/models_manifest.json").c_str(),
                               report_path.c_str(), "{\"seed\":3}") == LVO_OK);
    std::string report_csv = tmp / "report.csv";
    std::string report_svg = tmp / "roc.svg";
    REQUIRE(lvo_stage_report(report_path.c_str(), report_csv.c_str(), report_svg.c_str()) ==
            LVO_OK);
    CHECK(fs::file_size(report_csv) > 0);
    CHECK(fs::file_size(report_svg) > 0);

    // one-shot runner reproduces a three-row table
    std::string run_dir = tmp / "run";
    const char* run_opts =
        "{\"seed\":3,\"cv_folds\":4,\"gbt\":{\"num_rounds\":20},"
        "\"fcn\":{\"base_channels\":2,\"epochs\":1,\"max_train_crops\":6}}";
    REQUIRE(lvo_stage_run(csv.c_str(), (scans_dir + "/scans_manifest.json").c_str(),
                          run_dir.c_str(), run_opts) == LVO_OK);
    std::ifstream in(run_dir + "/report.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);  // header + three levels
}
