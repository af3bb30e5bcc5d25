#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "airad/error.hpp"

namespace airad {

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const noexcept { return nx * ny * nz; }
  std::size_t slice_size() const noexcept { return nx * ny; }
  bool empty() const noexcept { return count() == 0; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

using Spacing = std::array<double, 3>;

/// Voxel-to-world transform in mm. Rows are world axes, columns 0..2 the
/// voxel axes, column 3 the translation.
struct Affine {
  std::array<std::array<double, 4>, 3> m{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}}};

  static Affine diagonal(const Spacing& s) {
    Affine a;
    a.m = {{{s[0], 0, 0, 0}, {0, s[1], 0, 0}, {0, 0, s[2], 0}}};
    return a;
  }

  std::array<double, 3> apply(double i, double j, double k) const noexcept {
    std::array<double, 3> w{};
    for (int r = 0; r < 3; ++r) w[r] = m[r][0] * i + m[r][1] * j + m[r][2] * k + m[r][3];
    return w;
  }
  friend bool operator==(const Affine&, const Affine&) = default;
};

/// Dense 3D grid with x fastest. Shared by intensity volumes and label masks.
template <typename T>
struct Image3 {
  Dims dims;
  std::vector<T> voxels;
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine;
  std::string source_id;
  // Provenance: set once the intensity preprocessing chain has run.
  bool preprocessed = false;

  Image3() = default;
  explicit Image3(Dims d, T fill = T{}) : dims(d), voxels(d.count(), fill) {
    affine = Affine::diagonal(spacing);
  }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + dims.nx * (y + dims.ny * z);
  }
  T& at(std::size_t x, std::size_t y, std::size_t z) noexcept { return voxels[index(x, y, z)]; }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return voxels[index(x, y, z)];
  }

  T* slice(std::size_t z) noexcept { return voxels.data() + z * dims.slice_size(); }
  const T* slice(std::size_t z) const noexcept { return voxels.data() + z * dims.slice_size(); }

  void set_spacing(const Spacing& s) {
    spacing = s;
    affine = Affine::diagonal(s);
  }

  /// Copies geometry and provenance, not voxels.
  template <typename U>
  void copy_meta_from(const Image3<U>& other) {
    spacing = other.spacing;
    affine = other.affine;
    source_id = other.source_id;
  }
};

using Volume = Image3<float>;
using LabelMask = Image3<std::uint8_t>;

enum class Tissue : std::uint8_t { Background = 0, Liver = 1, Tumor = 2, Vessel = 3 };

/// Single 2D f32 image, row-major (x fastest).
struct Image2 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image2() = default;
  Image2(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h, fill) {}

  float& at(std::size_t x, std::size_t y) noexcept { return pixels[x + width * y]; }
  float at(std::size_t x, std::size_t y) const noexcept { return pixels[x + width * y]; }
  friend bool operator==(const Image2&, const Image2&) = default;
};

template <typename T, typename U>
void require_same_dims(const Image3<T>& a, const Image3<U>& b, const char* what) {
  if (!(a.dims == b.dims)) throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": grid dimensions differ");
}

/// Binary mask (0/1) of voxels whose label equals `label`.
LabelMask extract_label(const LabelMask& merged, std::uint8_t label);

/// Binary mask of voxels with any nonzero label.
LabelMask nonzero_mask(const LabelMask& merged);

std::size_t count_nonzero(const LabelMask& m) noexcept;

Image2 slice_image(const Volume& v, std::size_t z);

}  // namespace airad
