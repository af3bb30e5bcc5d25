#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "airad/image.hpp"

namespace airad {

enum class NiftiDatatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
  Float64 = 64,
};

/// Parsed NIfTI-1 header (the 348-byte layout). Only the fields this
/// project consumes are kept.
struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0, quatern_c = 0, quatern_d = 0;
  float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
  std::array<std::array<float, 4>, 3> srow{};
  std::string magic;       // "n+1" or "ni1"
  bool byte_swapped = false;

  Dims dims() const noexcept;
  Spacing spacing() const noexcept;
  /// sform if sform_code > 0, else qform if qform_code > 0, else diag(pixdim).
  Affine affine() const noexcept;
};

inline constexpr std::size_t kNiftiHeaderSize = 348;

/// Decodes a header from the first bytes of an (already decompressed) file.
NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes);

/// Reads only the header; transparently handles gzip.
NiftiHeader read_nifti_header(const std::filesystem::path& path);

/// Decodes a complete in-memory single-file NIfTI-1 image to f32.
Volume decode_nifti(std::span<const std::uint8_t> bytes, std::string source_id = {});

Volume read_nifti(const std::filesystem::path& path);

/// Reads a label image. Values must be integers in [0, 3].
LabelMask read_nifti_mask(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_nifti(const Volume& v);
std::vector<std::uint8_t> encode_nifti(const LabelMask& m);

void write_nifti(const Volume& v, const std::filesystem::path& path, bool gzip);
void write_nifti(const LabelMask& m, const std::filesystem::path& path, bool gzip);

/// File stem with ".nii" / ".nii.gz" stripped.
std::string nifti_stem(const std::filesystem::path& path);

/// Whole-file read with transparent gzip decompression.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes, bool gzip);

}  // namespace airad
