#pragma once

#include <optional>
#include <vector>

#include "imaging/phantom.hpp"
#include "imaging/transform.hpp"
#include "imaging/volume.hpp"

namespace lvo::imaging {

struct BrainExtraction {
    SegMask mask;      // largest in-range connected component
    Volume stripped;   // voxels outside the mask set to -1000
};

// Threshold + connected-component skull stripping: brain candidates are
// voxels with HU in (-100, 200); the largest 6-connected component is the
// brain. Idempotent on its own output. Raises "not a head CT" when there
// is neither a high-HU skull nor an already-stripped foreground.
BrainExtraction brain_extract(const Volume& vol);

struct RegistrationResult {
    Volume aligned;
    RigidTransform2D transform;
    double cost_before = 0.0;
    double cost_after = 0.0;
    bool degenerate = false;  // all-constant input, identity returned
};

// Left-right symmetry registration: coarse grid over theta (+-15 deg, 1 deg
// steps) and tx (+-12.8 mm, 2-voxel steps) minimising the SSD between the
// middle-third slices and their mirror, then golden-section refinement
// (3 sweeps per coordinate). The mirror objective cannot see translation
// along the midline, so ty comes from centring the foreground centroid row.
RegistrationResult register_symmetry(const Volume& vol);

// Voxels outside [lo,hi] are set to lo so the later [lo,hi] -> [0,1]
// rescale maps them to 0; idempotent.
Volume hu_window(const Volume& vol, double lo = 20.0, double hi = 80.0);

// Nearest-neighbour resample of a binary mask under the same pull-back
// convention as apply_transform; out-of-field is 0.
SegMask transform_mask_nearest(const SegMask& mask, const RigidTransform2D& t);

struct RoiBox {
    Side hemisphere = Side::left;
    int x0 = 0;
    int y0 = 0;
    static constexpr int kSize = 128;
};

struct RoiPair {
    RoiBox left;
    RoiBox right;
};

// 128x128 boxes at the sylvian level: vertically centred on the brain-mask
// centroid row, horizontally at the midline column +- a quarter of the
// brain width; clamped inside the slice and exactly mirror-symmetric.
RoiPair locate_mca_roi(const Volume& vol, const SegMask& brain_mask);

struct CropStack {
    Side hemisphere = Side::left;
    int nz = 0;
    std::vector<double> data;  // nz * 128 * 128, z-major, values in [0,1]
    double at(int z, int y, int x) const {
        return data[(static_cast<size_t>(z) * RoiBox::kSize + y) * RoiBox::kSize + x];
    }
};

struct HemisphereCrops {
    CropStack primary;
    std::optional<CropStack> secondary;  // filled when weak side is unknown
    bool side_unknown = false;
};

// Returns the hemisphere contralateral to the weak side (left limb
// weakness selects the right-hemisphere box), one crop per slice, values
// rescaled from [lo,hi] to [0,1]. An unset weak side returns both stacks,
// flagged. `ipsilateral` flips the contralateral convention.
HemisphereCrops extract_hemisphere(const Volume& vol, const RoiPair& boxes,
                                   std::optional<Side> weak_side, double lo = 20.0,
                                   double hi = 80.0, bool ipsilateral = false);

// Crop one box from every slice with [lo,hi] -> [0,1] rescale.
CropStack crop_stack(const Volume& vol, const RoiBox& box, double lo, double hi);

// Crop the ground-truth mask with the same geometry (values 0/1).
CropStack crop_mask_stack(const SegMask& mask, const RoiBox& box);

}  // namespace lvo::imaging
