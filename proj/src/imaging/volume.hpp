#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace lvo::imaging {

// 3-D CT volume in Hounsfield units, x-fastest voxel layout.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    double sx = 0.426, sy = 0.426, sz = 5.0;  // spacing, mm
    std::vector<int16_t> voxels;

    Volume() = default;
    Volume(int nx_, int ny_, int nz_, double sx_ = 0.426, double sy_ = 0.426, double sz_ = 5.0,
           int16_t fill = -1000)
        : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_) {
        if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("Volume: dims must be >= 1");
        if (!(sx > 0 && sy > 0 && sz > 0)) throw ValidationError("Volume: spacing must be > 0");
        voxels.assign(static_cast<size_t>(nx) * ny * nz, fill);
    }

    size_t index(int x, int y, int z) const {
        return (static_cast<size_t>(z) * ny + static_cast<size_t>(y)) * nx +
               static_cast<size_t>(x);
    }
    int16_t at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    int16_t& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    size_t size() const { return voxels.size(); }
};

struct SegMask {
    int nx = 0, ny = 0, nz = 0;
    double sx = 0.426, sy = 0.426, sz = 5.0;
    std::vector<uint8_t> voxels;  // 0/1

    SegMask() = default;
    SegMask(int nx_, int ny_, int nz_, double sx_ = 0.426, double sy_ = 0.426, double sz_ = 5.0)
        : nx(nx_), ny(ny_), nz(nz_), sx(sx_), sy(sy_), sz(sz_) {
        if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("SegMask: dims must be >= 1");
        voxels.assign(static_cast<size_t>(nx) * ny * nz, 0);
    }

    size_t index(int x, int y, int z) const {
        return (static_cast<size_t>(z) * ny + static_cast<size_t>(y)) * nx +
               static_cast<size_t>(x);
    }
    uint8_t at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    uint8_t& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t v : voxels) n += v;
        return n;
    }
    bool dims_match(const Volume& vol) const {
        return nx == vol.nx && ny == vol.ny && nz == vol.nz;
    }
};

// SVOL1 container: magic 'SVOL', u32 LE version=1, u32 nx/ny/nz, three f32
// LE spacings (mm), u8 dtype (1 = int16, 2 = uint8), then the LE payload,
// x fastest. Bit-exact round trip.
void write_svol(const Volume& vol, const std::string& path);
void write_svol(const SegMask& mask, const std::string& path);
Volume read_svol_volume(const std::string& path);
SegMask read_svol_mask(const std::string& path);

// P5 portable graymap of one slice, window-rescaled to [lo,hi] -> 0..255.
std::string slice_to_pgm(const Volume& vol, int z, double lo, double hi);

}  // namespace lvo::imaging
