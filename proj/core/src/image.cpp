#include "airad/image.hpp"

#include <algorithm>
#include <cstring>

namespace airad {

LabelMask extract_label(const LabelMask& merged, std::uint8_t label) {
  LabelMask out(merged.dims);
  out.copy_meta_from(merged);
  std::transform(merged.voxels.begin(), merged.voxels.end(), out.voxels.begin(),
                 [label](std::uint8_t v) { return static_cast<std::uint8_t>(v == label); });
  return out;
}

LabelMask nonzero_mask(const LabelMask& merged) {
  LabelMask out(merged.dims);
  out.copy_meta_from(merged);
  std::transform(merged.voxels.begin(), merged.voxels.end(), out.voxels.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
  return out;
}

std::size_t count_nonzero(const LabelMask& m) noexcept {
  return static_cast<std::size_t>(
      std::count_if(m.voxels.begin(), m.voxels.end(), [](std::uint8_t v) { return v != 0; }));
}

Image2 slice_image(const Volume& v, std::size_t z) {
  Image2 img(v.dims.nx, v.dims.ny);
  std::memcpy(img.pixels.data(), v.slice(z), v.dims.slice_size() * sizeof(float));
  return img;
}

}  // namespace airad
