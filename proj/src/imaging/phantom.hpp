#pragma once

#include <cstdint>

#include "imaging/transform.hpp"
#include "imaging/volume.hpp"

namespace lvo::imaging {

enum class Side : uint8_t { left, right };

// Synthetic head CT: elliptical skull ring around brain tissue with a
// mirrored ventricle pair, optionally carrying one hyperdense MCA dot at
// the sylvian anchor of one hemisphere. The whole phantom can be generated
// under a known rigid misalignment; shapes are evaluated analytically in
// the misaligned frame, so dot voxels are never blurred by resampling and
// the ground-truth mask is exact.
struct PhantomSpec {
    int nx = 512, ny = 512, nz = 28;
    double sx = 0.426, sy = 0.426, sz = 5.0;

    double head_ax = 70.0;  // semi-axis, mm, image x
    double head_ay = 88.0;  // semi-axis, mm, image y
    double skull_thickness = 6.0;
    double skull_hu = 900.0;
    double tissue_hu = 35.0;
    double tissue_sd = 4.0;
    double background_hu = -1000.0;
    double ventricle_hu = 8.0;
    double noise_sd = 2.0;  // additive on skull and ventricles

    bool dot_present = false;
    Side dot_side = Side::right;
    double dot_offset_x = 0.0;  // mm from the sylvian anchor
    double dot_offset_y = 0.0;
    int dot_slice = -1;  // -1 means the middle slice
    double dot_radius = 4.0;
    double dot_hu_lo = 30.0;
    double dot_hu_hi = 70.0;

    RigidTransform2D misalignment;  // applied rotation/translation
    uint64_t seed = 0;
};

struct Phantom {
    Volume volume;
    SegMask dot_mask;
    RigidTransform2D applied;  // ground-truth misalignment
};

Phantom gen_phantom(const PhantomSpec& spec);

// Ground-truth brain voxel count (tissue + ventricles + dot), used by
// tests to score brain-extraction overlap.
SegMask phantom_brain_mask(const PhantomSpec& spec);

}  // namespace lvo::imaging
