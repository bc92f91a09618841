/*
 * Copyright 2026 petgrid authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "petgrid/nifti.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <vector>

namespace petgrid {

namespace {

// NIfTI-1 on-disk header, 348 bytes. Field names follow the published layout.
#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

// Datatype codes from the NIfTI-1 standard.
constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;
constexpr std::int16_t DT_INT8 = 256;
constexpr std::int16_t DT_UINT16 = 512;
constexpr std::int16_t DT_UINT32 = 768;

template <typename T>
void byteswap_inplace(T& value) {
    auto* p = reinterpret_cast<unsigned char*>(&value);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
        std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
}

void swap_header(Nifti1Header& h) {
    byteswap_inplace(h.sizeof_hdr);
    for (auto& d : h.dim) byteswap_inplace(d);
    byteswap_inplace(h.datatype);
    byteswap_inplace(h.bitpix);
    for (auto& p : h.pixdim) byteswap_inplace(p);
    byteswap_inplace(h.vox_offset);
    byteswap_inplace(h.scl_slope);
    byteswap_inplace(h.scl_inter);
    byteswap_inplace(h.qform_code);
    byteswap_inplace(h.sform_code);
    byteswap_inplace(h.qoffset_x);
    byteswap_inplace(h.qoffset_y);
    byteswap_inplace(h.qoffset_z);
    for (auto& v : h.srow_x) byteswap_inplace(v);
    for (auto& v : h.srow_y) byteswap_inplace(v);
    for (auto& v : h.srow_z) byteswap_inplace(v);
}

class GzReader {
public:
    explicit GzReader(const std::string& path) : file_(gzopen(path.c_str(), "rb")) {
        if (!file_) throw Error("cannot open file: " + path);
    }
    ~GzReader() {
        if (file_) gzclose(file_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* dst, std::size_t len, const std::string& what) {
        auto* p = static_cast<char*>(dst);
        while (len > 0) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(len, 1u << 30));
            const int got = gzread(file_, p, chunk);
            if (got <= 0) throw MalformedHeader("truncated file while reading " + what);
            p += got;
            len -= static_cast<std::size_t>(got);
        }
    }

    void skip(std::size_t len) {
        std::vector<char> sink(std::min<std::size_t>(len, 1 << 16));
        while (len > 0) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(len, sink.size()));
            const int got = gzread(file_, sink.data(), chunk);
            if (got <= 0) throw MalformedHeader("truncated file while skipping data");
            len -= static_cast<std::size_t>(got);
        }
    }

private:
    gzFile file_;
};

class GzWriter {
public:
    explicit GzWriter(const std::string& path) {
        const bool compress = path.size() > 3 && path.ends_with(".gz");
        // "wbT" writes transparently (no compression wrapper) for plain .nii.
        file_ = gzopen(path.c_str(), compress ? "wb6" : "wbT");
        if (!file_) throw Error("cannot open file for writing: " + path);
    }
    ~GzWriter() {
        if (file_) gzclose(file_);
    }
    GzWriter(const GzWriter&) = delete;
    GzWriter& operator=(const GzWriter&) = delete;

    void write(const void* src, std::size_t len) {
        const auto* p = static_cast<const char*>(src);
        while (len > 0) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(len, 1u << 30));
            if (gzwrite(file_, p, chunk) != static_cast<int>(chunk)) {
                throw Error("short write to NIfTI file");
            }
            p += chunk;
            len -= chunk;
        }
    }

private:
    gzFile file_;
};

template <typename Src>
void convert_payload(const std::vector<char>& raw, std::vector<float>& out,
                     bool swapped, double slope, double inter) {
    const std::size_t n = out.size();
    const auto* src = reinterpret_cast<const Src*>(raw.data());
    for (std::size_t i = 0; i < n; ++i) {
        Src v = src[i];
        if (swapped && sizeof(Src) > 1) byteswap_inplace(v);
        out[i] = static_cast<float>(static_cast<double>(v) * slope + inter);
    }
}

struct ParsedHeader {
    Index3 dims;
    Vec3 spacing;
    Vec3 origin;
    std::int16_t datatype;
    std::size_t payload_bytes;
    std::size_t data_offset;
    double slope;
    double inter;
    bool swapped;
};

ParsedHeader parse_header(const Nifti1Header& raw_hdr) {
    Nifti1Header hdr = raw_hdr;
    bool swapped = false;
    if (hdr.sizeof_hdr != 348) {
        swap_header(hdr);
        swapped = true;
        if (hdr.sizeof_hdr != 348) throw MalformedHeader("sizeof_hdr is not 348");
    }
    if (std::memcmp(hdr.magic, "n+1", 3) != 0 && std::memcmp(hdr.magic, "ni1", 3) != 0) {
        throw MalformedHeader("bad magic, expected n+1 or ni1");
    }
    if (std::memcmp(hdr.magic, "ni1", 3) == 0) {
        throw MalformedHeader("two-file (.hdr/.img) datasets are not supported");
    }

    int ndim = hdr.dim[0];
    if (ndim < 1 || ndim > 7) throw MalformedHeader("dim[0] out of range");
    // Trailing singleton dims (e.g. a 4D file with one timepoint) are fine.
    int effective = ndim;
    while (effective > 3 && hdr.dim[effective] <= 1) --effective;
    if (effective != 3) throw UnsupportedDimensionality(effective);

    const std::int64_t nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
    if (nx <= 0 || ny <= 0 || nz <= 0) throw MalformedHeader("non-positive dim");

    ParsedHeader out;
    out.swapped = swapped;
    out.datatype = hdr.datatype;
    // depth = file z, width = file y, height = file x (see nifti.hpp).
    out.dims = {nz, ny, nx};
    out.spacing = {std::abs(hdr.pixdim[3]), std::abs(hdr.pixdim[2]),
                   std::abs(hdr.pixdim[1])};
    for (int a = 0; a < 3; ++a) {
        if (!(out.spacing[a] > 0.0f)) out.spacing[a] = 1.0;  // header omitted spacing
    }

    if (hdr.sform_code > 0) {
        out.origin = {hdr.srow_z[3], hdr.srow_y[3], hdr.srow_x[3]};
    } else if (hdr.qform_code > 0) {
        out.origin = {hdr.qoffset_z, hdr.qoffset_y, hdr.qoffset_x};
    } else {
        out.origin = {0.0, 0.0, 0.0};
    }

    std::size_t elem = 0;
    switch (hdr.datatype) {
        case DT_UINT8:
        case DT_INT8: elem = 1; break;
        case DT_INT16:
        case DT_UINT16: elem = 2; break;
        case DT_INT32:
        case DT_UINT32:
        case DT_FLOAT32: elem = 4; break;
        case DT_FLOAT64: elem = 8; break;
        default:
            throw MalformedHeader("unsupported datatype code " +
                                  std::to_string(hdr.datatype));
    }
    out.payload_bytes = static_cast<std::size_t>(nx * ny * nz) * elem;

    if (hdr.vox_offset < 348.0f) throw MalformedHeader("vox_offset before header end");
    out.data_offset = static_cast<std::size_t>(hdr.vox_offset);

    out.slope = (hdr.scl_slope == 0.0f) ? 1.0 : static_cast<double>(hdr.scl_slope);
    out.inter = static_cast<double>(hdr.scl_inter);
    return out;
}

}  // namespace

Volume3D load_nifti(const std::string& path, Modality modality) {
    if (!std::filesystem::exists(path)) throw Error("file does not exist: " + path);
    GzReader in(path);

    Nifti1Header raw_hdr;
    in.read_exact(&raw_hdr, sizeof(raw_hdr), "header");
    const ParsedHeader hdr = parse_header(raw_hdr);

    in.skip(hdr.data_offset - sizeof(raw_hdr));
    std::vector<char> raw(hdr.payload_bytes);
    in.read_exact(raw.data(), raw.size(), "voxel data");

    std::vector<float> data(static_cast<std::size_t>(volume_of(hdr.dims)));
    switch (hdr.datatype) {
        case DT_UINT8: convert_payload<std::uint8_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_INT8: convert_payload<std::int8_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_INT16: convert_payload<std::int16_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_UINT16: convert_payload<std::uint16_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_INT32: convert_payload<std::int32_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_UINT32: convert_payload<std::uint32_t>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_FLOAT32: convert_payload<float>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        case DT_FLOAT64: convert_payload<double>(raw, data, hdr.swapped, hdr.slope, hdr.inter); break;
        default: throw MalformedHeader("unreachable datatype");
    }

    Volume3D v(hdr.dims, hdr.spacing, hdr.origin, modality, std::move(data));
    v.ensure_finite();
    return v;
}

namespace {

Nifti1Header make_header(const Index3& dims, const Vec3& spacing, const Vec3& origin,
                         std::int16_t datatype, std::int16_t bitpix) {
    Nifti1Header h;
    std::memset(&h, 0, sizeof(h));
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(dims[2]);  // file x = height
    h.dim[2] = static_cast<std::int16_t>(dims[1]);  // file y = width
    h.dim[3] = static_cast<std::int16_t>(dims[0]);  // file z = depth
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(spacing[2]);
    h.pixdim[2] = static_cast<float>(spacing[1]);
    h.pixdim[3] = static_cast<float>(spacing[0]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    h.sform_code = 1;
    h.srow_x[0] = static_cast<float>(spacing[2]);
    h.srow_x[3] = static_cast<float>(origin[2]);
    h.srow_y[1] = static_cast<float>(spacing[1]);
    h.srow_y[3] = static_cast<float>(origin[1]);
    h.srow_z[2] = static_cast<float>(spacing[0]);
    h.srow_z[3] = static_cast<float>(origin[0]);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_with_payload(const std::string& path, const Nifti1Header& h,
                        const void* payload, std::size_t payload_bytes) {
    GzWriter out(path);
    out.write(&h, sizeof(h));
    const char pad[4] = {0, 0, 0, 0};  // extension flag, all zero
    out.write(pad, 4);
    out.write(payload, payload_bytes);
}

}  // namespace

void save_nifti(const Volume3D& v, const std::string& path) {
    for (int a = 0; a < 3; ++a) {
        if (v.dims()[a] > 32767) throw Error("dims exceed NIfTI-1 short range");
    }
    const Nifti1Header h = make_header(v.dims(), v.spacing(), v.origin(), DT_FLOAT32, 32);
    write_with_payload(path, h, v.data().data(), v.data().size() * sizeof(float));
}

void save_nifti_mask(const LesionMask& m, const Vec3& spacing, const Vec3& origin,
                     const std::string& path) {
    for (int a = 0; a < 3; ++a) {
        if (m.dims()[a] > 32767) throw Error("dims exceed NIfTI-1 short range");
    }
    const Nifti1Header h = make_header(m.dims(), spacing, origin, DT_UINT8, 8);
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(m.size()));
    for (std::int64_t i = 0; i < m.size(); ++i) payload[static_cast<std::size_t>(i)] = m.test(i) ? 1 : 0;
    write_with_payload(path, h, payload.data(), payload.size());
}

LesionMask load_nifti_mask(const std::string& path) {
    const Volume3D v = load_nifti(path, Modality::PET);
    LesionMask m(v.dims());
    for (std::int64_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0f) m.set(i);
    }
    return m;
}

}  // namespace petgrid
