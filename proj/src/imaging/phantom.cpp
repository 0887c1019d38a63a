#include "imaging/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace lvo::imaging {

namespace {

double slice_scale(int z, int nz) {
    if (nz == 1) return 1.0;
    double f = (z - 0.5 * (nz - 1)) / (0.5 * (nz - 1));
    return std::sqrt(1.0 - 0.3 * f * f);
}

int16_t to_hu(double v) {
    return static_cast<int16_t>(std::lround(std::clamp(v, -32000.0, 32000.0)));
}

struct DotGeometry {
    bool present = false;
    double cx = 0.0, cy = 0.0, cz = 0.0;  // mm, in canonical (head) frame
    double radius = 0.0;
};

DotGeometry dot_geometry(const PhantomSpec& spec) {
    DotGeometry d;
    if (!spec.dot_present) return d;
    d.present = true;
    double inner_ax = spec.head_ax - spec.skull_thickness;
    double sign = spec.dot_side == Side::right ? 1.0 : -1.0;
    d.cx = sign * 0.5 * inner_ax + spec.dot_offset_x;
    d.cy = spec.dot_offset_y;
    int slice = spec.dot_slice >= 0 ? spec.dot_slice : spec.nz / 2;
    d.cz = (slice - 0.5 * (spec.nz - 1)) * spec.sz;
    d.radius = spec.dot_radius;
    return d;
}

void validate_phantom_spec(const PhantomSpec& spec) {
    if (spec.nx < 8 || spec.ny < 8 || spec.nz < 1)
        throw ValidationError("phantom: dims too small");
    if (!(spec.sx > 0 && spec.sy > 0 && spec.sz > 0))
        throw ValidationError("phantom: spacing must be > 0");
    if (!(std::fabs(spec.misalignment.theta) <= 3.14159265358979323846) ||
        !std::isfinite(spec.misalignment.tx) || !std::isfinite(spec.misalignment.ty))
        throw ValidationError("phantom: misalignment must have |theta| <= pi, finite shifts");
    if (spec.skull_thickness <= 0 || spec.head_ax <= spec.skull_thickness ||
        spec.head_ay <= spec.skull_thickness)
        throw ValidationError("phantom: head axes must exceed skull thickness");
    if (spec.dot_present) {
        if (!(spec.dot_hu_lo >= 30.0 && spec.dot_hu_hi <= 70.0 && spec.dot_hu_lo <= spec.dot_hu_hi))
            throw ValidationError("phantom: dot HU range must lie within [30,70]");
        if (spec.dot_radius <= 0) throw ValidationError("phantom: dot radius must be > 0");
        int slice = spec.dot_slice >= 0 ? spec.dot_slice : spec.nz / 2;
        if (slice < 0 || slice >= spec.nz)
            throw ValidationError("phantom: dot slice outside the volume");
        // The dot must fit inside the brain on its own slice.
        DotGeometry d = dot_geometry(spec);
        double sc = slice_scale(slice, spec.nz);
        double bx = sc * (spec.head_ax - spec.skull_thickness);
        double by = sc * (spec.head_ay - spec.skull_thickness);
        double ex = (std::fabs(d.cx) + d.radius) / bx;
        double ey = (std::fabs(d.cy) + d.radius) / by;
        if (ex * ex + ey * ey > 1.0)
            throw ValidationError("phantom: dot lies outside the brain");
    }
}

}  // namespace

Phantom gen_phantom(const PhantomSpec& spec) {
    validate_phantom_spec(spec);
    Phantom out;
    out.volume = Volume(spec.nx, spec.ny, spec.nz, spec.sx, spec.sy, spec.sz);
    out.dot_mask = SegMask(spec.nx, spec.ny, spec.nz, spec.sx, spec.sy, spec.sz);
    out.applied = spec.misalignment;

    const DotGeometry dot = dot_geometry(spec);
    const double mid_x = 0.5 * (spec.nx - 1);
    const double mid_y = 0.5 * (spec.ny - 1);
    const double mid_z = 0.5 * (spec.nz - 1);

    // Mirrored lateral ventricles, sized relative to the head.
    const double vent_cx = 0.18 * spec.head_ax;
    const double vent_cy = -0.12 * spec.head_ay;
    const double vent_ax = 0.14 * spec.head_ax;
    const double vent_ay = 0.22 * spec.head_ay;

    for (int z = 0; z < spec.nz; ++z) {
        const double sc = slice_scale(z, spec.nz);
        const double ax = sc * spec.head_ax;
        const double ay = sc * spec.head_ay;
        const double bx = ax - spec.skull_thickness;
        const double by = ay - spec.skull_thickness;
        const double z_mm = (z - mid_z) * spec.sz;
        for (int y = 0; y < spec.ny; ++y) {
            const double py = (y - mid_y) * spec.sy;
            for (int x = 0; x < spec.nx; ++x) {
                const double px = (x - mid_x) * spec.sx;
                // Evaluate the canonical shapes at the pulled-back point, so
                // the emitted volume is the phantom under the misalignment.
                double qx, qy;
                spec.misalignment.map(px, py, qx, qy);

                const double skull_r = (qx / ax) * (qx / ax) + (qy / ay) * (qy / ay);
                if (skull_r > 1.0) continue;  // air, already -1000

                Rng rng(hash_mix(spec.seed, out.volume.index(x, y, z)));
                const double brain_r = (qx / bx) * (qx / bx) + (qy / by) * (qy / by);
                if (brain_r > 1.0) {
                    out.volume.at(x, y, z) = to_hu(spec.skull_hu + rng.normal(0.0, spec.noise_sd));
                    continue;
                }

                if (dot.present) {
                    const double dx = qx - dot.cx, dy = qy - dot.cy, dz = z_mm - dot.cz;
                    if (dx * dx + dy * dy + dz * dz <= dot.radius * dot.radius) {
                        out.volume.at(x, y, z) =
                            to_hu(rng.uniform(spec.dot_hu_lo, spec.dot_hu_hi));
                        out.dot_mask.at(x, y, z) = 1;
                        continue;
                    }
                }

                const double vl = ((qx + vent_cx) / (sc * vent_ax)) * ((qx + vent_cx) / (sc * vent_ax)) +
                                  ((qy - vent_cy) / (sc * vent_ay)) * ((qy - vent_cy) / (sc * vent_ay));
                const double vr = ((qx - vent_cx) / (sc * vent_ax)) * ((qx - vent_cx) / (sc * vent_ax)) +
                                  ((qy - vent_cy) / (sc * vent_ay)) * ((qy - vent_cy) / (sc * vent_ay));
                if (vl <= 1.0 || vr <= 1.0) {
                    out.volume.at(x, y, z) =
                        to_hu(spec.ventricle_hu + rng.normal(0.0, spec.noise_sd));
                    continue;
                }

                out.volume.at(x, y, z) = to_hu(rng.normal(spec.tissue_hu, spec.tissue_sd));
            }
        }
    }
    return out;
}

SegMask phantom_brain_mask(const PhantomSpec& spec) {
    validate_phantom_spec(spec);
    SegMask mask(spec.nx, spec.ny, spec.nz, spec.sx, spec.sy, spec.sz);
    const double mid_x = 0.5 * (spec.nx - 1);
    const double mid_y = 0.5 * (spec.ny - 1);
    for (int z = 0; z < spec.nz; ++z) {
        const double sc = slice_scale(z, spec.nz);
        const double bx = sc * spec.head_ax - spec.skull_thickness;
        const double by = sc * spec.head_ay - spec.skull_thickness;
        for (int y = 0; y < spec.ny; ++y) {
            const double py = (y - mid_y) * spec.sy;
            for (int x = 0; x < spec.nx; ++x) {
                const double px = (x - mid_x) * spec.sx;
                double qx, qy;
                spec.misalignment.map(px, py, qx, qy);
                if ((qx / bx) * (qx / bx) + (qy / by) * (qy / by) <= 1.0)
                    mask.at(x, y, z) = 1;
            }
        }
    }
    return mask;
}

}  // namespace lvo::imaging
