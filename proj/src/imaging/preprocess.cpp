#include "imaging/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace lvo::imaging {

double sample_bilinear(const Volume& vol, double fx, double fy, int z) {
    if (fx < 0.0 || fy < 0.0 || fx > vol.nx - 1 || fy > vol.ny - 1) return -1000.0;
    int x0 = static_cast<int>(fx);
    int y0 = static_cast<int>(fy);
    int x1 = std::min(x0 + 1, vol.nx - 1);
    int y1 = std::min(y0 + 1, vol.ny - 1);
    double wx = fx - x0, wy = fy - y0;
    double v00 = vol.at(x0, y0, z), v10 = vol.at(x1, y0, z);
    double v01 = vol.at(x0, y1, z), v11 = vol.at(x1, y1, z);
    return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) + wy * ((1.0 - wx) * v01 + wx * v11);
}

Volume apply_transform(const Volume& vol, const RigidTransform2D& t) {
    Volume out(vol.nx, vol.ny, vol.nz, vol.sx, vol.sy, vol.sz);
    const double mid_x = 0.5 * (vol.nx - 1), mid_y = 0.5 * (vol.ny - 1);
    const double c = std::cos(t.theta), s = std::sin(t.theta);
    for (int z = 0; z < vol.nz; ++z) {
        for (int y = 0; y < vol.ny; ++y) {
            const double py = (y - mid_y) * vol.sy;
            for (int x = 0; x < vol.nx; ++x) {
                const double px = (x - mid_x) * vol.sx;
                const double qx = c * px - s * py + t.tx;
                const double qy = s * px + c * py + t.ty;
                double fx = qx / vol.sx + mid_x;
                double fy = qy / vol.sy + mid_y;
                out.at(x, y, z) =
                    static_cast<int16_t>(std::lround(sample_bilinear(vol, fx, fy, z)));
            }
        }
    }
    return out;
}

namespace {

constexpr double kBrainLo = -100.0;
constexpr double kBrainHi = 200.0;
constexpr double kSkullHu = 500.0;

bool in_brain_range(int16_t v) { return v > kBrainLo && v < kBrainHi; }

// Largest 6-connected component of in-range voxels; returns voxel count.
size_t largest_component(const Volume& vol, std::vector<uint8_t>& out_mask) {
    const size_t n = vol.size();
    std::vector<int32_t> label(n, -1);
    out_mask.assign(n, 0);
    size_t best_size = 0;
    int32_t best_label = -1;
    int32_t next_label = 0;
    std::vector<size_t> stack;
    const int nx = vol.nx, ny = vol.ny, nz = vol.nz;

    for (size_t start = 0; start < n; ++start) {
        if (label[start] >= 0 || !in_brain_range(vol.voxels[start])) continue;
        size_t size = 0;
        stack.push_back(start);
        label[start] = next_label;
        while (!stack.empty()) {
            size_t idx = stack.back();
            stack.pop_back();
            ++size;
            int x = static_cast<int>(idx % nx);
            int y = static_cast<int>((idx / nx) % ny);
            int z = static_cast<int>(idx / (static_cast<size_t>(nx) * ny));
            auto visit = [&](int xx, int yy, int zz) {
                if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) return;
                size_t j = vol.index(xx, yy, zz);
                if (label[j] >= 0 || !in_brain_range(vol.voxels[j])) return;
                label[j] = next_label;
                stack.push_back(j);
            };
            visit(x - 1, y, z);
            visit(x + 1, y, z);
            visit(x, y - 1, z);
            visit(x, y + 1, z);
            visit(x, y, z - 1);
            visit(x, y, z + 1);
        }
        if (size > best_size) {
            best_size = size;
            best_label = next_label;
        }
        ++next_label;
    }
    if (best_label >= 0)
        for (size_t i = 0; i < n; ++i) out_mask[i] = (label[i] == best_label) ? 1 : 0;
    return best_size;
}

}  // namespace

BrainExtraction brain_extract(const Volume& vol) {
    std::vector<uint8_t> cc;
    size_t cc_size = largest_component(vol, cc);
    if (cc_size == 0) throw ValidationError("brain_extract: not a head CT (no brain-range voxels)");

    bool has_skull = false;
    for (int16_t v : vol.voxels)
        if (v > kSkullHu) {
            has_skull = true;
            break;
        }
    if (!has_skull) {
        // Accept an already-stripped volume: the foreground must be
        // surrounded by background air.
        size_t outside = 0;
        for (size_t i = 0; i < vol.size(); ++i) {
            if (cc[i]) continue;
            ++outside;
            if (vol.voxels[i] > -900)
                throw ValidationError("brain_extract: not a head CT (no HU > 500 skull ring)");
        }
        if (outside == 0)
            throw ValidationError("brain_extract: not a head CT (no HU > 500 skull ring)");
    }

    BrainExtraction out;
    out.mask = SegMask(vol.nx, vol.ny, vol.nz, vol.sx, vol.sy, vol.sz);
    out.mask.voxels = std::move(cc);
    out.stripped = vol;
    for (size_t i = 0; i < vol.size(); ++i)
        if (!out.mask.voxels[i]) out.stripped.voxels[i] = -1000;
    return out;
}

namespace {

// Symmetry cost: SSD between the candidate-aligned middle-third slices and
// their left-right mirror, sampled on a decimated grid. Sample points sit
// half a voxel off the lattice so the identity transform interpolates
// exactly like its neighbours; otherwise resampling noise smoothing would
// reward spurious sub-voxel shifts.
double symmetry_cost(const Volume& vol, const RigidTransform2D& t, int step) {
    const double mid_x = 0.5 * (vol.nx - 1), mid_y = 0.5 * (vol.ny - 1);
    const double c = std::cos(t.theta), s = std::sin(t.theta);
    int z_lo = vol.nz / 3;
    int z_hi = std::max(z_lo + 1, (2 * vol.nz) / 3);
    double cost = 0.0;
    for (int z = z_lo; z < z_hi; ++z) {
        for (int y = 0; y < vol.ny - 1; y += step) {
            const double py = (y + 0.5 - mid_y) * vol.sy;
            for (int x = 0; x < vol.nx - 1; x += step) {
                const double px = (x + 0.5 - mid_x) * vol.sx;
                const double qx = c * px - s * py + t.tx;
                const double qy = s * px + c * py + t.ty;
                const double mx = -c * px - s * py + t.tx;  // mirrored point (-px, py)
                const double my = -s * px + c * py + t.ty;
                double a = sample_bilinear(vol, qx / vol.sx + mid_x, qy / vol.sy + mid_y, z);
                double b = sample_bilinear(vol, mx / vol.sx + mid_x, my / vol.sy + mid_y, z);
                cost += (a - b) * (a - b);
            }
        }
    }
    return cost;
}

struct Centroid {
    double x = 0.0, y = 0.0;  // mm relative to image centre
    bool empty = true;
};

Centroid foreground_centroid(const Volume& vol) {
    const double mid_x = 0.5 * (vol.nx - 1), mid_y = 0.5 * (vol.ny - 1);
    double sx = 0.0, sy = 0.0;
    size_t n = 0;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x)
                if (vol.at(x, y, z) > -500) {
                    sx += (x - mid_x) * vol.sx;
                    sy += (y - mid_y) * vol.sy;
                    ++n;
                }
    Centroid out;
    if (n == 0) return out;
    out.x = sx / static_cast<double>(n);
    out.y = sy / static_cast<double>(n);
    out.empty = false;
    return out;
}

double golden_section(double lo, double hi, int iters, const std::function<double(double)>& f);

}  // namespace

RegistrationResult register_symmetry(const Volume& vol) {
    RegistrationResult res;
    auto [mn, mx] = std::minmax_element(vol.voxels.begin(), vol.voxels.end());
    if (*mn == *mx) {
        res.aligned = vol;
        res.degenerate = true;
        return res;
    }

    Centroid cen = foreground_centroid(vol);
    if (cen.empty) {
        res.aligned = vol;
        res.degenerate = true;
        return res;
    }
    // ty is not observable from the mirror objective; centre the
    // foreground centroid row instead:  ty = cy + tan(theta) (tx - cx).
    auto ty_for = [&](double theta, double tx) {
        return cen.y + std::tan(theta) * (tx - cen.x);
    };

    constexpr double kPi = 3.14159265358979323846;
    const double theta_max = 15.0 * kPi / 180.0;
    const double theta_step = 1.0 * kPi / 180.0;
    const double tx_max = 12.8;
    const double tx_step = 2.0 * vol.sx;

    const int coarse_step = std::max(1, vol.nx / 64);
    double best_cost = std::numeric_limits<double>::infinity();
    double best_theta = 0.0, best_tx = 0.0;
    for (double theta = -theta_max; theta <= theta_max + 1e-12; theta += theta_step) {
        for (double tx = -tx_max; tx <= tx_max + 1e-12; tx += tx_step) {
            double cost = symmetry_cost(vol, {theta, tx, ty_for(theta, tx)}, coarse_step);
            if (cost < best_cost) {
                best_cost = cost;
                best_theta = theta;
                best_tx = tx;
            }
        }
    }

    // Golden-section refinement per coordinate on the full-resolution cost,
    // three sweeps, bracket one coarse step around the incumbent.
    const int refine_step = std::max(1, vol.nx / 256);
    auto cost_at = [&](double theta, double tx) {
        return symmetry_cost(vol, {theta, tx, ty_for(theta, tx)}, refine_step);
    };
    for (int sweep = 0; sweep < 3; ++sweep) {
        best_theta = golden_section(best_theta - theta_step, best_theta + theta_step, 18,
                                    [&](double th) { return cost_at(th, best_tx); });
        best_tx = golden_section(best_tx - tx_step, best_tx + tx_step, 18,
                                 [&](double tx) { return cost_at(best_theta, tx); });
    }

    RigidTransform2D est{best_theta, best_tx, ty_for(best_theta, best_tx)};
    res.cost_before = symmetry_cost(vol, {0.0, 0.0, 0.0}, refine_step);
    res.cost_after = symmetry_cost(vol, est, refine_step);
    if (res.cost_after > res.cost_before) {
        // No candidate beat the input; keep it untouched.
        est = RigidTransform2D{};
        res.cost_after = res.cost_before;
    }
    res.transform = est;
    res.aligned = apply_transform(vol, est);
    return res;
}

namespace {

double golden_section(double lo, double hi, int iters, const std::function<double(double)>& f) {
    const double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return f1 < f2 ? x1 : x2;
}

}  // namespace

Volume hu_window(const Volume& vol, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("hu_window: lo must be < hi");
    Volume out = vol;
    int16_t lo_i = static_cast<int16_t>(std::lround(lo));
    for (int16_t& v : out.voxels)
        if (v < lo || v > hi) v = lo_i;
    return out;
}

SegMask transform_mask_nearest(const SegMask& mask, const RigidTransform2D& t) {
    SegMask out(mask.nx, mask.ny, mask.nz, mask.sx, mask.sy, mask.sz);
    const double mid_x = 0.5 * (mask.nx - 1), mid_y = 0.5 * (mask.ny - 1);
    const double c = std::cos(t.theta), s = std::sin(t.theta);
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                double px = (x - mid_x) * mask.sx, py = (y - mid_y) * mask.sy;
                double qx = c * px - s * py + t.tx;
                double qy = s * px + c * py + t.ty;
                int fx = static_cast<int>(std::lround(qx / mask.sx + mid_x));
                int fy = static_cast<int>(std::lround(qy / mask.sy + mid_y));
                if (fx < 0 || fy < 0 || fx >= mask.nx || fy >= mask.ny) continue;
                out.at(x, y, z) = mask.at(fx, fy, z);
            }
    return out;
}

RoiPair locate_mca_roi(const Volume& vol, const SegMask& brain_mask) {
    if (!brain_mask.dims_match(vol))
        throw ValidationError("locate_mca_roi: mask dims must match volume");
    if (vol.nx < RoiBox::kSize || vol.ny < RoiBox::kSize)
        throw ValidationError("locate_mca_roi: slice smaller than the 128x128 box");

    double sum_y = 0.0;
    size_t n = 0;
    int min_x = vol.nx, max_x = -1;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
            for (int x = 0; x < vol.nx; ++x)
                if (brain_mask.at(x, y, z)) {
                    sum_y += y;
                    ++n;
                    min_x = std::min(min_x, x);
                    max_x = std::max(max_x, x);
                }
    if (n == 0) throw ValidationError("locate_mca_roi: empty brain mask");

    const double centroid_y = sum_y / static_cast<double>(n);
    const double width = static_cast<double>(max_x - min_x + 1);
    const double mid = 0.5 * (vol.nx - 1);
    const int half = RoiBox::kSize / 2;

    int y0 = static_cast<int>(std::lround(centroid_y)) - half;
    y0 = std::clamp(y0, 0, vol.ny - RoiBox::kSize);

    int x0_right = static_cast<int>(std::lround(mid + 0.25 * width - (half - 0.5)));
    x0_right = std::clamp(x0_right, 0, vol.nx - RoiBox::kSize);
    int x0_left = vol.nx - RoiBox::kSize - x0_right;  // exact mirror

    RoiPair out;
    out.left = {Side::left, x0_left, y0};
    out.right = {Side::right, x0_right, y0};
    return out;
}

CropStack crop_stack(const Volume& vol, const RoiBox& box, double lo, double hi) {
    CropStack out;
    out.hemisphere = box.hemisphere;
    out.nz = vol.nz;
    out.data.resize(static_cast<size_t>(vol.nz) * RoiBox::kSize * RoiBox::kSize);
    const double scale = 1.0 / (hi - lo);
    size_t k = 0;
    for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < RoiBox::kSize; ++y)
            for (int x = 0; x < RoiBox::kSize; ++x)
                out.data[k++] =
                    std::clamp((vol.at(box.x0 + x, box.y0 + y, z) - lo) * scale, 0.0, 1.0);
    return out;
}

CropStack crop_mask_stack(const SegMask& mask, const RoiBox& box) {
    CropStack out;
    out.hemisphere = box.hemisphere;
    out.nz = mask.nz;
    out.data.resize(static_cast<size_t>(mask.nz) * RoiBox::kSize * RoiBox::kSize);
    size_t k = 0;
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < RoiBox::kSize; ++y)
            for (int x = 0; x < RoiBox::kSize; ++x)
                out.data[k++] = mask.at(box.x0 + x, box.y0 + y, z) ? 1.0 : 0.0;
    return out;
}

HemisphereCrops extract_hemisphere(const Volume& vol, const RoiPair& boxes,
                                   std::optional<Side> weak_side, double lo, double hi,
                                   bool ipsilateral) {
    if (!(lo < hi)) throw ValidationError("extract_hemisphere: lo must be < hi");
    HemisphereCrops out;
    if (!weak_side) {
        out.side_unknown = true;
        out.primary = crop_stack(vol, boxes.left, lo, hi);
        out.secondary = crop_stack(vol, boxes.right, lo, hi);
        return out;
    }
    // Left limb weakness points at a right-hemisphere lesion.
    Side wanted;
    if (ipsilateral)
        wanted = *weak_side;
    else
        wanted = (*weak_side == Side::left) ? Side::right : Side::left;
    out.primary = crop_stack(vol, wanted == Side::left ? boxes.left : boxes.right, lo, hi);
    return out;
}

}  // namespace lvo::imaging
