#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "imaging/phantom.hpp"
#include "imaging/preprocess.hpp"
#include "imaging/volume.hpp"
#include "rng.hpp"

using namespace lvo;
using namespace lvo::imaging;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Mid-size phantom geometry used across the tests: full head proportions
// at a quarter of the clinical resolution, so registration stays fast.
PhantomSpec test_spec() {
    PhantomSpec spec;
    spec.nx = 256;
    spec.ny = 256;
    spec.nz = 9;
    spec.sx = 0.852;
    spec.sy = 0.852;
    spec.sz = 5.0;
    spec.head_ax = 70.0;
    spec.head_ay = 88.0;
    return spec;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("phantom: no dot means an all-zero mask; zero misalignment is identity") {
    PhantomSpec spec = test_spec();
    spec.dot_present = false;
    Phantom ph = gen_phantom(spec);
    CHECK(ph.dot_mask.count() == 0);
    CHECK(ph.applied.theta == 0.0);
    CHECK(ph.applied.tx == 0.0);
    CHECK(ph.applied.ty == 0.0);
}

TEST_CASE("phantom: deterministic per seed") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.seed = 9;
    Phantom a = gen_phantom(spec);
    Phantom b = gen_phantom(spec);
    CHECK(a.volume.voxels == b.volume.voxels);
    CHECK(a.dot_mask.voxels == b.dot_mask.voxels);
    spec.seed = 10;
    CHECK(gen_phantom(spec).volume.voxels != a.volume.voxels);
}

TEST_CASE("phantom: dot slice extent follows the sphere geometry") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;

    spec.dot_radius = 2.0;  // 5 mm slices: only the centre slice intersects
    Phantom small = gen_phantom(spec);
    std::set<int> slices;
    for (int z = 0; z < small.dot_mask.nz; ++z)
        for (int y = 0; y < small.dot_mask.ny; ++y)
            for (int x = 0; x < small.dot_mask.nx; ++x)
                if (small.dot_mask.at(x, y, z)) slices.insert(z);
    CHECK(slices.size() == 1);
    CHECK(*slices.begin() == spec.nz / 2);

    spec.dot_radius = 6.0;  // reaches the neighbouring slice centres
    Phantom big = gen_phantom(spec);
    slices.clear();
    for (int z = 0; z < big.dot_mask.nz; ++z)
        for (int y = 0; y < big.dot_mask.ny; ++y)
            for (int x = 0; x < big.dot_mask.nx; ++x)
                if (big.dot_mask.at(x, y, z)) slices.insert(z);
    CHECK(slices.size() >= 2);
}

TEST_CASE("phantom: dot voxels carry HU inside [30,70]") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.dot_radius = 5.0;
    Phantom ph = gen_phantom(spec);
    REQUIRE(ph.dot_mask.count() > 0);
    for (int z = 0; z < ph.volume.nz; ++z)
        for (int y = 0; y < ph.volume.ny; ++y)
            for (int x = 0; x < ph.volume.nx; ++x)
                if (ph.dot_mask.at(x, y, z)) {
                    CHECK(ph.volume.at(x, y, z) >= 30);
                    CHECK(ph.volume.at(x, y, z) <= 70);
                }
}

TEST_CASE("phantom: dot outside the brain rejected") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.dot_offset_x = 100.0;  // beyond the skull
    CHECK_THROWS_AS(gen_phantom(spec), ValidationError);
    spec.dot_offset_x = 0.0;
    spec.dot_hu_lo = 10.0;  // outside the allowed dot range
    CHECK_THROWS_AS(gen_phantom(spec), ValidationError);
}

TEST_CASE("svol: volume and mask round-trip bit-exactly") {
    PhantomSpec spec = test_spec();
    spec.nx = 64;
    spec.ny = 64;
    spec.nz = 4;
    spec.sx = 3.4;
    spec.sy = 3.4;
    spec.head_ax = 60.0;
    spec.head_ay = 80.0;
    spec.dot_present = true;
    spec.dot_radius = 6.0;
    Phantom ph = gen_phantom(spec);

    std::string vpath = temp_path("t_vol.svol");
    std::string mpath = temp_path("t_mask.svol");
    write_svol(ph.volume, vpath);
    write_svol(ph.dot_mask, mpath);
    Volume v2 = read_svol_volume(vpath);
    SegMask m2 = read_svol_mask(mpath);
    CHECK(v2.voxels == ph.volume.voxels);
    CHECK(v2.nx == ph.volume.nx);
    CHECK(static_cast<float>(v2.sx) == static_cast<float>(ph.volume.sx));
    CHECK(m2.voxels == ph.dot_mask.voxels);

    // byte-identical rewrite
    std::string vpath2 = temp_path("t_vol2.svol");
    write_svol(v2, vpath2);
    std::ifstream a(vpath, std::ios::binary), b(vpath2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("svol: corrupt magic and dtype mismatch are format errors") {
    std::string path = temp_path("t_bad.svol");
    {
        std::ofstream out(path, std::ios::binary);
        out << "JUNKjunkjunkjunkjunkjunkjunkjunkjunk";
    }
    CHECK_THROWS_AS(read_svol_volume(path), FormatError);

    // valid mask read back as a volume must fail on the dtype byte
    SegMask mask(4, 4, 2);
    std::string mpath = temp_path("t_dtype.svol");
    write_svol(mask, mpath);
    CHECK_THROWS_AS(read_svol_volume(mpath), FormatError);
    CHECK_THROWS_AS(read_svol_mask(temp_path("t_missing_file.svol")), UsageError);
}

TEST_CASE("pgm export: windowed slice with correct header") {
    PhantomSpec spec = test_spec();
    spec.nx = 32;
    spec.ny = 32;
    spec.nz = 2;
    spec.sx = 6.0;
    spec.sy = 6.0;
    spec.head_ax = 60.0;
    spec.head_ay = 70.0;
    Phantom ph = gen_phantom(spec);
    std::string pgm = slice_to_pgm(ph.volume, 1, 20.0, 80.0);
    CHECK(pgm.rfind("P5\n32 32\n255\n", 0) == 0);
    CHECK(pgm.size() == std::string("P5\n32 32\n255\n").size() + 32 * 32);
}

TEST_CASE("brain_extract: phantom ground-truth overlap and skull exclusion") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    Phantom ph = gen_phantom(spec);
    SegMask gt_brain = phantom_brain_mask(spec);

    BrainExtraction be = brain_extract(ph.volume);
    size_t covered = 0, gt_total = 0, skull_hits = 0;
    for (size_t i = 0; i < ph.volume.size(); ++i) {
        if (gt_brain.voxels[i]) {
            ++gt_total;
            if (be.mask.voxels[i]) ++covered;
        }
        if (ph.volume.voxels[i] > 500 && be.mask.voxels[i]) ++skull_hits;
    }
    CHECK(static_cast<double>(covered) / gt_total >= 0.99);
    CHECK(skull_hits == 0);
    // stripped volume: outside mask is air
    for (size_t i = 0; i < ph.volume.size(); ++i)
        if (!be.mask.voxels[i]) CHECK(be.stripped.voxels[i] == -1000);
}

TEST_CASE("brain_extract: idempotent on its own output") {
    PhantomSpec spec = test_spec();
    Phantom ph = gen_phantom(spec);
    BrainExtraction first = brain_extract(ph.volume);
    BrainExtraction second = brain_extract(first.stripped);
    CHECK(second.mask.voxels == first.mask.voxels);
    CHECK(second.stripped.voxels == first.stripped.voxels);
}

TEST_CASE("brain_extract: all-air volume is not a head CT") {
    Volume air(64, 64, 4);
    CHECK_THROWS_AS(brain_extract(air), ValidationError);
    // mid-range blob without any skull and non-air surroundings
    Volume odd(64, 64, 4, 0.852, 0.852, 5.0, 50);
    CHECK_THROWS_AS(brain_extract(odd), ValidationError);
}

TEST_CASE("hu_window: clamps to lo outside, preserves inside, idempotent") {
    PhantomSpec spec = test_spec();
    spec.nx = 64;
    spec.ny = 64;
    spec.nz = 3;
    spec.sx = 3.4;
    spec.sy = 3.4;
    spec.head_ax = 60.0;
    spec.head_ay = 80.0;
    Phantom ph = gen_phantom(spec);
    Volume win = hu_window(ph.volume, 20.0, 80.0);
    for (size_t i = 0; i < win.size(); ++i) {
        int16_t orig = ph.volume.voxels[i];
        if (orig < 20 || orig > 80)
            CHECK(win.voxels[i] == 20);
        else
            CHECK(win.voxels[i] == orig);
    }
    Volume twice = hu_window(win, 20.0, 80.0);
    CHECK(twice.voxels == win.voxels);
    CHECK_THROWS_AS(hu_window(ph.volume, 80.0, 20.0), ValidationError);
    CHECK_THROWS_AS(hu_window(ph.volume, 50.0, 50.0), ValidationError);
}

TEST_CASE("dot conservation: windowing never alters a ground-truth dot voxel") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        PhantomSpec spec = test_spec();
        spec.nx = 128;
        spec.ny = 128;
        spec.nz = 5;
        spec.sx = 1.704;
        spec.sy = 1.704;
        spec.dot_present = true;
        spec.dot_radius = 3.0 + 3.0 * rng.next_double();
        spec.dot_side = rng.bernoulli(0.5) ? Side::right : Side::left;
        spec.seed = 100 + static_cast<uint64_t>(trial);
        spec.misalignment = {rng.uniform(-0.1, 0.1), rng.uniform(-4, 4), rng.uniform(-4, 4)};
        Phantom ph = gen_phantom(spec);
        Volume win = hu_window(ph.volume, 20.0, 80.0);
        REQUIRE(ph.dot_mask.count() > 0);
        for (size_t i = 0; i < win.size(); ++i)
            if (ph.dot_mask.voxels[i]) CHECK(win.voxels[i] == ph.volume.voxels[i]);
    }
}

TEST_CASE("registration: recovers the inverse of a known misalignment") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.seed = 5;
    spec.misalignment.theta = 7.0 * kPi / 180.0;
    spec.misalignment.tx = 3.0;
    spec.misalignment.ty = -2.0;
    Phantom ph = gen_phantom(spec);

    BrainExtraction be = brain_extract(ph.volume);
    RegistrationResult reg = register_symmetry(be.stripped);
    RigidTransform2D expected = ph.applied.inverse();

    CHECK(std::fabs(reg.transform.theta - expected.theta) < 1.0 * kPi / 180.0);
    CHECK(std::fabs(reg.transform.tx - expected.tx) < spec.sx);
    CHECK(std::fabs(reg.transform.ty - expected.ty) < spec.sy);
    CHECK(reg.cost_after <= reg.cost_before);
    CHECK(!reg.degenerate);
}

TEST_CASE("registration: near-identity on an already symmetric phantom") {
    PhantomSpec spec = test_spec();
    spec.seed = 8;
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    RegistrationResult reg = register_symmetry(be.stripped);
    CHECK(std::fabs(reg.transform.theta) <= 0.5 * kPi / 180.0);
    CHECK(std::fabs(reg.transform.tx) <= 0.5 * spec.sx);
    CHECK(std::fabs(reg.transform.ty) <= 0.5 * spec.sy);
}

TEST_CASE("registration: registering a registered volume is a near fixed point") {
    PhantomSpec spec = test_spec();
    spec.seed = 13;
    spec.misalignment = {5.0 * kPi / 180.0, 4.0, 3.0};
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    RegistrationResult first = register_symmetry(be.stripped);
    RegistrationResult second = register_symmetry(first.aligned);
    // the second pass must not find a meaningfully better symmetry
    CHECK(std::fabs(second.cost_after - second.cost_before) <
          0.01 * std::max(1.0, second.cost_before));
}

TEST_CASE("registration: all-constant volume flagged degenerate") {
    Volume flat(64, 64, 3, 1.0, 1.0, 5.0, 0);
    RegistrationResult reg = register_symmetry(flat);
    CHECK(reg.degenerate);
    CHECK(reg.transform.theta == 0.0);
    CHECK(reg.transform.tx == 0.0);
    CHECK(reg.transform.ty == 0.0);
}

TEST_CASE("roi: mirror boxes around the midline, dot inside the correct box") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.dot_side = Side::right;
    spec.seed = 3;
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    Volume win = hu_window(be.stripped, 20.0, 80.0);
    RoiPair boxes = locate_mca_roi(win, be.mask);

    CHECK(boxes.left.x0 == win.nx - RoiBox::kSize - boxes.right.x0);
    CHECK(boxes.left.y0 == boxes.right.y0);
    CHECK(boxes.left.x0 >= 0);
    CHECK(boxes.right.x0 + RoiBox::kSize <= win.nx);

    // image-right hemisphere is the +x half: the dot must sit in right box
    for (int z = 0; z < ph.dot_mask.nz; ++z)
        for (int y = 0; y < ph.dot_mask.ny; ++y)
            for (int x = 0; x < ph.dot_mask.nx; ++x)
                if (ph.dot_mask.at(x, y, z)) {
                    CHECK(x >= boxes.right.x0);
                    CHECK(x < boxes.right.x0 + RoiBox::kSize);
                    CHECK(y >= boxes.right.y0);
                    CHECK(y < boxes.right.y0 + RoiBox::kSize);
                }
}

TEST_CASE("roi: flipping the volume left-right swaps the boxes") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.dot_offset_x = 5.0;
    spec.seed = 31;
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    RoiPair orig = locate_mca_roi(ph.volume, be.mask);

    Volume flipped = ph.volume;
    SegMask flipped_mask = be.mask;
    for (int z = 0; z < ph.volume.nz; ++z)
        for (int y = 0; y < ph.volume.ny; ++y)
            for (int x = 0; x < ph.volume.nx; ++x) {
                flipped.at(x, y, z) = ph.volume.at(ph.volume.nx - 1 - x, y, z);
                flipped_mask.at(x, y, z) = be.mask.at(ph.volume.nx - 1 - x, y, z);
            }
    RoiPair swapped = locate_mca_roi(flipped, flipped_mask);
    // the flipped image's left box must cover the mirror of the original
    // right box (and vice versa)
    CHECK(swapped.left.x0 == ph.volume.nx - RoiBox::kSize - orig.right.x0);
    CHECK(swapped.right.x0 == ph.volume.nx - RoiBox::kSize - orig.left.x0);
    CHECK(swapped.left.y0 == orig.left.y0);
}

TEST_CASE("roi: exact-size slice clamps to a full-slice box") {
    PhantomSpec spec;
    spec.nx = 128;
    spec.ny = 128;
    spec.nz = 3;
    spec.sx = 1.704;
    spec.sy = 1.704;
    spec.head_ax = 70.0;
    spec.head_ay = 88.0;
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    RoiPair boxes = locate_mca_roi(ph.volume, be.mask);
    CHECK(boxes.left.x0 == 0);
    CHECK(boxes.right.x0 == 0);
    CHECK(boxes.left.y0 == 0);

    Volume tiny(100, 100, 2);
    SegMask tiny_mask(100, 100, 2);
    tiny_mask.at(50, 50, 0) = 1;
    CHECK_THROWS_AS(locate_mca_roi(tiny, tiny_mask), ValidationError);

    SegMask empty(128, 128, 3, 1.704, 1.704, 5.0);
    CHECK_THROWS_AS(locate_mca_roi(ph.volume, empty), ValidationError);
}

TEST_CASE("extract_hemisphere: contralateral side, rescale and shape") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.dot_side = Side::right;
    spec.seed = 2;
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    Volume win = hu_window(be.stripped, 20.0, 80.0);
    RoiPair boxes = locate_mca_roi(win, be.mask);

    // left limb weakness -> right hemisphere
    HemisphereCrops crops = extract_hemisphere(win, boxes, Side::left, 20.0, 80.0);
    CHECK(!crops.side_unknown);
    CHECK(crops.primary.hemisphere == Side::right);
    CHECK(crops.primary.nz == win.nz);
    CHECK(crops.primary.data.size() ==
          static_cast<size_t>(win.nz) * RoiBox::kSize * RoiBox::kSize);

    // rescale contract: windowed lo -> 0.0, hi -> 1.0
    int z_mid = win.nz / 2;
    bool saw_zero = false, saw_high = false;
    for (int y = 0; y < RoiBox::kSize; ++y)
        for (int x = 0; x < RoiBox::kSize; ++x) {
            double v = crops.primary.at(z_mid, y, x);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            int16_t raw = win.at(boxes.right.x0 + x, boxes.right.y0 + y, z_mid);
            CHECK(v == doctest::Approx((raw - 20.0) / 60.0).epsilon(1e-12));
            if (v == 0.0) saw_zero = true;
            if (v > 0.5) saw_high = true;
        }
    CHECK(saw_zero);
    CHECK(saw_high);  // the dot lives in this crop

    // ipsilateral flag flips the convention
    HemisphereCrops ipsi = extract_hemisphere(win, boxes, Side::left, 20.0, 80.0, true);
    CHECK(ipsi.primary.hemisphere == Side::left);

    // unknown side returns both stacks, flagged
    HemisphereCrops both = extract_hemisphere(win, boxes, std::nullopt, 20.0, 80.0);
    CHECK(both.side_unknown);
    REQUIRE(both.secondary.has_value());
    CHECK(both.primary.hemisphere == Side::left);
    CHECK(both.secondary->hemisphere == Side::right);
}

TEST_CASE("transform_mask_nearest: follows the volume under registration") {
    PhantomSpec spec = test_spec();
    spec.dot_present = true;
    spec.seed = 44;
    spec.misalignment = {4.0 * kPi / 180.0, 2.0, -3.0};
    Phantom ph = gen_phantom(spec);
    BrainExtraction be = brain_extract(ph.volume);
    RegistrationResult reg = register_symmetry(be.stripped);
    SegMask moved = transform_mask_nearest(ph.dot_mask, reg.transform);
    REQUIRE(moved.count() > 0);
    // moved dot voxels must sit on bright voxels of the aligned volume
    size_t bright = 0, total = 0;
    for (int z = 0; z < moved.nz; ++z)
        for (int y = 0; y < moved.ny; ++y)
            for (int x = 0; x < moved.nx; ++x)
                if (moved.at(x, y, z)) {
                    ++total;
                    if (reg.aligned.at(x, y, z) >= 25) ++bright;
                }
    CHECK(static_cast<double>(bright) / total > 0.9);
}
