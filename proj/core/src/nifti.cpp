#include "airad/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>

namespace airad {
namespace {

static_assert(std::endian::native == std::endian::little, "host must be little-endian");

template <typename T>
T load(const std::uint8_t* p, bool swapped) {
  std::array<std::uint8_t, sizeof(T)> buf;
  std::memcpy(buf.data(), p, sizeof(T));
  if (swapped) std::reverse(buf.begin(), buf.end());
  T value;
  std::memcpy(&value, buf.data(), sizeof(T));
  return value;
}

template <typename T>
void store(std::uint8_t* p, T value) {
  std::memcpy(p, &value, sizeof(T));
}

struct GzFile {
  gzFile handle = nullptr;
  explicit GzFile(const std::filesystem::path& path, const char* mode)
      : handle(gzopen(path.c_str(), mode)) {}
  ~GzFile() {
    if (handle) gzclose(handle);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
};

std::size_t datatype_size(std::int16_t code) {
  switch (static_cast<NiftiDatatype>(code)) {
    case NiftiDatatype::UInt8: return 1;
    case NiftiDatatype::Int16: return 2;
    case NiftiDatatype::Float32: return 4;
    case NiftiDatatype::Float64: return 8;
  }
  throw Error(ErrorCode::UnsupportedDatatype, "NIfTI datatype code " + std::to_string(code));
}

template <typename Raw>
void convert_payload(const std::uint8_t* src, std::size_t count, bool swapped, float slope,
                     float inter, std::vector<float>& out) {
  const bool rescale = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
  for (std::size_t i = 0; i < count; ++i) {
    const Raw raw = load<Raw>(src + i * sizeof(Raw), swapped);
    if (rescale) {
      out[i] = static_cast<float>(static_cast<double>(raw) * slope + inter);
    } else {
      out[i] = static_cast<float>(raw);
    }
  }
}

std::vector<std::uint8_t> encode_header(const Dims& d, const Spacing& s, const Affine& a,
                                        NiftiDatatype dt, std::size_t payload_bytes) {
  constexpr std::size_t kVoxOffset = 352;
  if (d.nx > 32767 || d.ny > 32767 || d.nz > 32767)
    throw Error(ErrorCode::InvalidArgument, "dimension exceeds NIfTI-1 int16 range");
  std::vector<std::uint8_t> out(kVoxOffset + payload_bytes, 0);
  std::uint8_t* h = out.data();
  store<std::int32_t>(h + 0, 348);
  store<std::int16_t>(h + 40, 3);
  store<std::int16_t>(h + 42, static_cast<std::int16_t>(d.nx));
  store<std::int16_t>(h + 44, static_cast<std::int16_t>(d.ny));
  store<std::int16_t>(h + 46, static_cast<std::int16_t>(d.nz));
  for (int i = 4; i < 8; ++i) store<std::int16_t>(h + 40 + 2 * i, 1);
  store<std::int16_t>(h + 70, static_cast<std::int16_t>(dt));
  store<std::int16_t>(h + 72, static_cast<std::int16_t>(datatype_size(static_cast<std::int16_t>(dt)) * 8));
  store<float>(h + 76, 1.0f);  // qfac
  for (int i = 0; i < 3; ++i) store<float>(h + 80 + 4 * i, static_cast<float>(s[i]));
  for (int i = 4; i < 8; ++i) store<float>(h + 76 + 4 * i, 1.0f);
  store<float>(h + 108, static_cast<float>(kVoxOffset));
  store<float>(h + 112, 1.0f);
  store<float>(h + 116, 0.0f);
  h[123] = 2;  // xyzt_units: mm
  const char descrip[] = "airad";
  std::memcpy(h + 148, descrip, sizeof(descrip) - 1);
  store<std::int16_t>(h + 252, 0);
  store<std::int16_t>(h + 254, 1);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) store<float>(h + 280 + 16 * r + 4 * c, static_cast<float>(a.m[r][c]));
  std::memcpy(h + 344, "n+1\0", 4);
  // Bytes 348..351 are the zeroed extension flag.
  return out;
}

}  // namespace

Dims NiftiHeader::dims() const noexcept {
  auto axis = [this](int i) -> std::size_t {
    if (i > dim[0]) return 1;
    return static_cast<std::size_t>(std::max<std::int16_t>(dim[i], 1));
  };
  return {axis(1), axis(2), axis(3)};
}

Spacing NiftiHeader::spacing() const noexcept {
  Spacing s{};
  for (int i = 0; i < 3; ++i) {
    const float p = std::fabs(pixdim[i + 1]);
    s[i] = p > 0.0f ? p : 1.0;
  }
  return s;
}

Affine NiftiHeader::affine() const noexcept {
  Affine a;
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) a.m[r][c] = srow[r][c];
    return a;
  }
  const Spacing s = spacing();
  if (qform_code > 0) {
    const double b = quatern_b, c = quatern_c, d = quatern_d;
    const double aa = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double qfac = pixdim[0] < 0.0f ? -1.0 : 1.0;
    const double rot[3][3] = {
        {aa * aa + b * b - c * c - d * d, 2 * (b * c - aa * d), 2 * (b * d + aa * c)},
        {2 * (b * c + aa * d), aa * aa + c * c - b * b - d * d, 2 * (c * d - aa * b)},
        {2 * (b * d - aa * c), 2 * (c * d + aa * b), aa * aa + d * d - c * c - b * b}};
    for (int r = 0; r < 3; ++r) {
      a.m[r][0] = rot[r][0] * s[0];
      a.m[r][1] = rot[r][1] * s[1];
      a.m[r][2] = rot[r][2] * s[2] * qfac;
    }
    a.m[0][3] = qoffset_x;
    a.m[1][3] = qoffset_y;
    a.m[2][3] = qoffset_z;
    return a;
  }
  return Affine::diagonal(s);
}

NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kNiftiHeaderSize) throw Error(ErrorCode::TruncatedFile, "header shorter than 348 bytes");
  const std::uint8_t* p = bytes.data();
  NiftiHeader h;
  const std::int16_t dim0 = load<std::int16_t>(p + 40, false);
  if (dim0 >= 1 && dim0 <= 7) {
    h.byte_swapped = false;
  } else {
    const std::int16_t swapped = load<std::int16_t>(p + 40, true);
    if (swapped < 1 || swapped > 7) throw Error(ErrorCode::BadMagic, "dim[0] out of range in either byte order");
    h.byte_swapped = true;
  }
  const bool sw = h.byte_swapped;
  const char* magic = reinterpret_cast<const char*>(p + 344);
  if (std::memcmp(magic, "n+1\0", 4) == 0) {
    h.magic = "n+1";
  } else if (std::memcmp(magic, "ni1\0", 4) == 0) {
    h.magic = "ni1";
  } else {
    throw Error(ErrorCode::BadMagic, "magic is neither \"n+1\" nor \"ni1\"");
  }
  for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(p + 40 + 2 * i, sw);
  h.datatype = load<std::int16_t>(p + 70, sw);
  h.bitpix = load<std::int16_t>(p + 72, sw);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(p + 76 + 4 * i, sw);
  h.vox_offset = load<float>(p + 108, sw);
  h.scl_slope = load<float>(p + 112, sw);
  h.scl_inter = load<float>(p + 116, sw);
  h.qform_code = load<std::int16_t>(p + 252, sw);
  h.sform_code = load<std::int16_t>(p + 254, sw);
  h.quatern_b = load<float>(p + 256, sw);
  h.quatern_c = load<float>(p + 260, sw);
  h.quatern_d = load<float>(p + 264, sw);
  h.qoffset_x = load<float>(p + 268, sw);
  h.qoffset_y = load<float>(p + 272, sw);
  h.qoffset_z = load<float>(p + 276, sw);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) h.srow[r][c] = load<float>(p + 280 + 16 * r + 4 * c, sw);
  for (int i = 1; i <= std::min<int>(h.dim[0], 3); ++i) {
    if (h.dim[i] < 1) throw Error(ErrorCode::BadMagic, "non-positive spatial dimension");
  }
  return h;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  GzFile f(path, "rb");
  if (!f.handle) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  for (;;) {
    const int n = gzread(f.handle, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) throw Error(ErrorCode::IoFailure, "read error in " + path.string());
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes, bool gzip) {
  // "wb6" writes gzip; "wbT" writes transparently (no compression).
  GzFile f(path, gzip ? "wb6" : "wbT");
  if (!f.handle) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  std::size_t written = 0;
  while (written < bytes.size()) {
    const auto n = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - written, 1u << 30));
    if (gzwrite(f.handle, bytes.data() + written, n) != static_cast<int>(n))
      throw Error(ErrorCode::IoFailure, "write error in " + path.string());
    written += n;
  }
}

NiftiHeader read_nifti_header(const std::filesystem::path& path) {
  GzFile f(path, "rb");
  if (!f.handle) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::array<std::uint8_t, kNiftiHeaderSize> buf{};
  const int n = gzread(f.handle, buf.data(), static_cast<unsigned>(buf.size()));
  if (n < 0) throw Error(ErrorCode::IoFailure, "read error in " + path.string());
  return parse_nifti_header(std::span(buf.data(), static_cast<std::size_t>(n)));
}

Volume decode_nifti(std::span<const std::uint8_t> bytes, std::string source_id) {
  const NiftiHeader h = parse_nifti_header(bytes);
  if (h.magic != "n+1") throw Error(ErrorCode::BadMagic, "two-file (ni1) NIfTI pairs are not supported");
  const std::size_t elem = datatype_size(h.datatype);
  for (int i = 4; i <= std::min<int>(h.dim[0], 7); ++i) {
    if (h.dim[i] > 1) throw Error(ErrorCode::InvalidArgument, "only 3D volumes are supported");
  }
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < kNiftiHeaderSize) throw Error(ErrorCode::BadMagic, "vox_offset below 348");

  Volume v;
  v.dims = h.dims();
  v.spacing = h.spacing();
  v.affine = h.affine();
  v.source_id = std::move(source_id);
  const std::size_t count = v.dims.count();
  if (bytes.size() < offset || bytes.size() - offset < count * elem) {
    throw Error(ErrorCode::TruncatedFile, "payload shorter than dims imply");
  }
  v.voxels.resize(count);
  const std::uint8_t* src = bytes.data() + offset;
  const bool sw = h.byte_swapped;
  switch (static_cast<NiftiDatatype>(h.datatype)) {
    case NiftiDatatype::UInt8: convert_payload<std::uint8_t>(src, count, sw, h.scl_slope, h.scl_inter, v.voxels); break;
    case NiftiDatatype::Int16: convert_payload<std::int16_t>(src, count, sw, h.scl_slope, h.scl_inter, v.voxels); break;
    case NiftiDatatype::Float32: convert_payload<float>(src, count, sw, h.scl_slope, h.scl_inter, v.voxels); break;
    case NiftiDatatype::Float64: convert_payload<double>(src, count, sw, h.scl_slope, h.scl_inter, v.voxels); break;
  }
  for (float x : v.voxels) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "non-finite voxel intensity");
  }
  return v;
}

std::string nifti_stem(const std::filesystem::path& path) {
  std::string name = path.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".gz"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      return name.substr(0, name.size() - e.size());
    }
  }
  return path.stem().string();
}

Volume read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_nifti(bytes, nifti_stem(path));
}

LabelMask read_nifti_mask(const std::filesystem::path& path) {
  const Volume v = read_nifti(path);
  LabelMask m;
  m.dims = v.dims;
  m.copy_meta_from(v);
  m.voxels.resize(v.voxels.size());
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    const float x = v.voxels[i];
    if (x < 0.0f || x > 3.0f || x != std::floor(x))
      throw Error(ErrorCode::InvalidLabel, "label value " + std::to_string(x) + " outside {0,1,2,3}");
    m.voxels[i] = static_cast<std::uint8_t>(x);
  }
  return m;
}

std::vector<std::uint8_t> encode_nifti(const Volume& v) {
  if (v.dims.empty()) throw Error(ErrorCode::EmptyInput, "cannot write an empty volume");
  auto out = encode_header(v.dims, v.spacing, v.affine, NiftiDatatype::Float32, v.voxels.size() * sizeof(float));
  std::memcpy(out.data() + 352, v.voxels.data(), v.voxels.size() * sizeof(float));
  return out;
}

std::vector<std::uint8_t> encode_nifti(const LabelMask& m) {
  if (m.dims.empty()) throw Error(ErrorCode::EmptyInput, "cannot write an empty mask");
  auto out = encode_header(m.dims, m.spacing, m.affine, NiftiDatatype::UInt8, m.voxels.size());
  std::memcpy(out.data() + 352, m.voxels.data(), m.voxels.size());
  return out;
}

void write_nifti(const Volume& v, const std::filesystem::path& path, bool gzip) {
  write_file_bytes(path, encode_nifti(v), gzip);
}

void write_nifti(const LabelMask& m, const std::filesystem::path& path, bool gzip) {
  write_file_bytes(path, encode_nifti(m), gzip);
}

}  // namespace airad
