#include "imaging/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace lvo::imaging {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'O', 'L'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeInt16 = 1;
constexpr uint8_t kDtypeUint8 = 2;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Header {
    uint32_t nx, ny, nz;
    float sx, sy, sz;
    uint8_t dtype;
};

std::string header_bytes(const Header& h) {
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, h.nx);
    put_u32(out, h.ny);
    put_u32(out, h.nz);
    put_f32(out, h.sx);
    put_f32(out, h.sy);
    put_f32(out, h.sz);
    out.push_back(static_cast<char>(h.dtype));
    return out;
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float get_f32(const uint8_t* p) {
    uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_svol(const Volume& vol, const std::string& path) {
    Header h{static_cast<uint32_t>(vol.nx), static_cast<uint32_t>(vol.ny),
             static_cast<uint32_t>(vol.nz), static_cast<float>(vol.sx),
             static_cast<float>(vol.sy), static_cast<float>(vol.sz), kDtypeInt16};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write volume '" + path + "'");
    out << header_bytes(h);
    std::string payload;
    payload.reserve(vol.voxels.size() * 2);
    for (int16_t v : vol.voxels) {
        uint16_t u = static_cast<uint16_t>(v);
        payload.push_back(static_cast<char>(u & 0xff));
        payload.push_back(static_cast<char>((u >> 8) & 0xff));
    }
    out << payload;
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

void write_svol(const SegMask& mask, const std::string& path) {
    Header h{static_cast<uint32_t>(mask.nx), static_cast<uint32_t>(mask.ny),
             static_cast<uint32_t>(mask.nz), static_cast<float>(mask.sx),
             static_cast<float>(mask.sy), static_cast<float>(mask.sz), kDtypeUint8};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write mask '" + path + "'");
    out << header_bytes(h);
    out.write(reinterpret_cast<const char*>(mask.voxels.data()),
              static_cast<std::streamsize>(mask.voxels.size()));
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

namespace {

struct RawFile {
    Header h;
    std::vector<uint8_t> payload;
};

RawFile read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open volume '" + path + "'");
    uint8_t raw[33];
    in.read(reinterpret_cast<char*>(raw), sizeof(raw));
    if (in.gcount() != sizeof(raw)) throw FormatError("SVOL1: '" + path + "' truncated header");
    if (std::memcmp(raw, kMagic, 4) != 0)
        throw FormatError("SVOL1: '" + path + "' bad magic (expected SVOL)");
    uint32_t version = get_u32(raw + 4);
    if (version != kVersion)
        throw FormatError("SVOL1: '" + path + "' unsupported version " + std::to_string(version));
    RawFile f;
    f.h.nx = get_u32(raw + 8);
    f.h.ny = get_u32(raw + 12);
    f.h.nz = get_u32(raw + 16);
    f.h.sx = get_f32(raw + 20);
    f.h.sy = get_f32(raw + 24);
    f.h.sz = get_f32(raw + 28);
    f.h.dtype = raw[32];
    if (f.h.nx < 1 || f.h.ny < 1 || f.h.nz < 1)
        throw FormatError("SVOL1: '" + path + "' invalid dimensions");
    size_t n = static_cast<size_t>(f.h.nx) * f.h.ny * f.h.nz;
    size_t bytes = n * (f.h.dtype == kDtypeInt16 ? 2 : 1);
    f.payload.resize(bytes);
    in.read(reinterpret_cast<char*>(f.payload.data()), static_cast<std::streamsize>(bytes));
    if (in.gcount() != static_cast<std::streamsize>(bytes))
        throw FormatError("SVOL1: '" + path + "' truncated payload");
    return f;
}

}  // namespace

Volume read_svol_volume(const std::string& path) {
    RawFile f = read_file(path);
    if (f.h.dtype != kDtypeInt16)
        throw FormatError("SVOL1: '" + path + "' has dtype " + std::to_string(f.h.dtype) +
                          ", expected 1 (int16 volume)");
    Volume vol(static_cast<int>(f.h.nx), static_cast<int>(f.h.ny), static_cast<int>(f.h.nz),
               f.h.sx, f.h.sy, f.h.sz);
    for (size_t i = 0; i < vol.voxels.size(); ++i) {
        uint16_t u = static_cast<uint16_t>(f.payload[2 * i]) |
                     (static_cast<uint16_t>(f.payload[2 * i + 1]) << 8);
        vol.voxels[i] = static_cast<int16_t>(u);
    }
    return vol;
}

SegMask read_svol_mask(const std::string& path) {
    RawFile f = read_file(path);
    if (f.h.dtype != kDtypeUint8)
        throw FormatError("SVOL1: '" + path + "' has dtype " + std::to_string(f.h.dtype) +
                          ", expected 2 (uint8 mask)");
    SegMask mask(static_cast<int>(f.h.nx), static_cast<int>(f.h.ny), static_cast<int>(f.h.nz),
                 f.h.sx, f.h.sy, f.h.sz);
    for (size_t i = 0; i < mask.voxels.size(); ++i) {
        if (f.payload[i] > 1)
            throw FormatError("SVOL1: '" + path + "' mask voxel out of {0,1}");
        mask.voxels[i] = f.payload[i];
    }
    return mask;
}

std::string slice_to_pgm(const Volume& vol, int z, double lo, double hi) {
    if (z < 0 || z >= vol.nz) throw UsageError("slice_to_pgm: slice out of range");
    if (!(lo < hi)) throw UsageError("slice_to_pgm: lo must be < hi");
    std::string out = "P5\n" + std::to_string(vol.nx) + " " + std::to_string(vol.ny) + "\n255\n";
    for (int y = 0; y < vol.ny; ++y) {
        for (int x = 0; x < vol.nx; ++x) {
            double v = (vol.at(x, y, z) - lo) / (hi - lo);
            int g = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            out.push_back(static_cast<char>(g));
        }
    }
    return out;
}

}  // namespace lvo::imaging
