#include "airad/tiff.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace airad {
namespace {

constexpr std::uint16_t kShort = 3;
constexpr std::uint16_t kLong = 4;

enum Tag : std::uint16_t {
  ImageWidth = 256,
  ImageLength = 257,
  BitsPerSample = 258,
  Compression = 259,
  PhotometricInterpretation = 262,
  StripOffsets = 273,
  SamplesPerPixel = 277,
  RowsPerStrip = 278,
  StripByteCounts = 279,
  PlanarConfiguration = 284,
  SampleFormat = 339,
};

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  template <typename T>
  void patch(std::size_t at, T v) {
    std::memcpy(bytes.data() + at, &v, sizeof(T));
  }
  void entry(std::uint16_t tag, std::uint16_t type, std::uint32_t value) {
    put(tag);
    put(type);
    put<std::uint32_t>(1);
    if (type == kShort) {
      put(static_cast<std::uint16_t>(value));
      put<std::uint16_t>(0);
    } else {
      put(value);
    }
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get(std::size_t at) const {
    if (at + sizeof(T) > bytes_.size()) throw Error(ErrorCode::TruncatedFile, "TIFF offset beyond end of file");
    T v;
    std::memcpy(&v, bytes_.data() + at, sizeof(T));
    return v;
  }

  // Value(s) of an IFD entry of SHORT or LONG type.
  std::vector<std::uint32_t> values(std::size_t entry_at) const {
    const auto type = get<std::uint16_t>(entry_at + 2);
    const auto count = get<std::uint32_t>(entry_at + 4);
    std::size_t elem = 0;
    if (type == kShort) elem = 2;
    else if (type == kLong) elem = 4;
    else throw Error(ErrorCode::UnsupportedTiffFeature, "tag value type " + std::to_string(type));
    std::size_t data_at = entry_at + 8;
    if (static_cast<std::size_t>(count) * elem > 4) data_at = get<std::uint32_t>(entry_at + 8);
    std::vector<std::uint32_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      out[i] = elem == 2 ? get<std::uint16_t>(data_at + 2 * i) : get<std::uint32_t>(data_at + 4 * i);
    }
    return out;
  }

  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

std::vector<std::uint8_t> encode_tiff_stack(std::span<const Image2> slices) {
  if (slices.empty()) throw Error(ErrorCode::EmptyInput, "no slices to write");
  const std::size_t w = slices.front().width;
  const std::size_t h = slices.front().height;
  if (w == 0 || h == 0) throw Error(ErrorCode::EmptyInput, "zero-sized slice");
  for (const auto& s : slices) {
    if (s.width != w || s.height != h) throw Error(ErrorCode::ShapeMismatch, "TIFF slices differ in size");
  }
  const std::size_t strip_bytes = w * h * sizeof(float);

  Writer out;
  out.put<std::uint8_t>('I');
  out.put<std::uint8_t>('I');
  out.put<std::uint16_t>(42);
  std::size_t next_ifd_slot = out.bytes.size();
  out.put<std::uint32_t>(0);

  for (const auto& s : slices) {
    const std::size_t strip_at = out.bytes.size();
    const auto* px = reinterpret_cast<const std::uint8_t*>(s.pixels.data());
    out.bytes.insert(out.bytes.end(), px, px + strip_bytes);
    if (out.bytes.size() % 2) out.put<std::uint8_t>(0);  // IFDs start on a word boundary

    const std::size_t ifd_at = out.bytes.size();
    out.patch<std::uint32_t>(next_ifd_slot, static_cast<std::uint32_t>(ifd_at));
    constexpr std::uint16_t kEntries = 11;
    out.put(kEntries);
    out.entry(ImageWidth, kLong, static_cast<std::uint32_t>(w));
    out.entry(ImageLength, kLong, static_cast<std::uint32_t>(h));
    out.entry(BitsPerSample, kShort, 32);
    out.entry(Compression, kShort, 1);
    out.entry(PhotometricInterpretation, kShort, 1);
    out.entry(StripOffsets, kLong, static_cast<std::uint32_t>(strip_at));
    out.entry(SamplesPerPixel, kShort, 1);
    out.entry(RowsPerStrip, kLong, static_cast<std::uint32_t>(h));
    out.entry(StripByteCounts, kLong, static_cast<std::uint32_t>(strip_bytes));
    out.entry(PlanarConfiguration, kShort, 1);
    out.entry(SampleFormat, kShort, 3);
    next_ifd_slot = out.bytes.size();
    out.put<std::uint32_t>(0);
    if (out.bytes.size() > 0xFFFFFFFFull) throw Error(ErrorCode::IoFailure, "TIFF exceeds 4 GiB");
  }
  return std::move(out.bytes);
}

std::vector<Image2> decode_tiff_stack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw Error(ErrorCode::TruncatedFile, "TIFF header too short");
  if (bytes[0] == 'M' && bytes[1] == 'M')
    throw Error(ErrorCode::UnsupportedTiffFeature, "big-endian TIFF");
  if (bytes[0] != 'I' || bytes[1] != 'I') throw Error(ErrorCode::BadMagic, "not a TIFF file");
  const Reader in(bytes);
  if (in.get<std::uint16_t>(2) != 42) throw Error(ErrorCode::BadMagic, "TIFF version is not 42");

  std::vector<Image2> pages;
  std::uint32_t ifd = in.get<std::uint32_t>(4);
  while (ifd != 0) {
    if (pages.size() > bytes.size()) throw Error(ErrorCode::BadMagic, "IFD chain loops");
    const auto n = in.get<std::uint16_t>(ifd);
    std::uint32_t width = 0, height = 0, bits = 1, compression = 1, spp = 1, format = 1;
    std::vector<std::uint32_t> offsets, counts;
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t e = ifd + 2 + 12 * static_cast<std::size_t>(i);
      const auto tag = in.get<std::uint16_t>(e);
      switch (tag) {
        case ImageWidth: width = in.values(e).at(0); break;
        case ImageLength: height = in.values(e).at(0); break;
        case BitsPerSample: bits = in.values(e).at(0); break;
        case Compression: compression = in.values(e).at(0); break;
        case SamplesPerPixel: spp = in.values(e).at(0); break;
        case SampleFormat: format = in.values(e).at(0); break;
        case StripOffsets: offsets = in.values(e); break;
        case StripByteCounts: counts = in.values(e); break;
        default: break;
      }
    }
    if (bits != 32 || format != 3 || spp != 1)
      throw Error(ErrorCode::UnsupportedTiffFeature, "only single-sample 32-bit float pages are supported");
    if (compression != 1) throw Error(ErrorCode::UnsupportedTiffFeature, "compressed TIFF");
    if (offsets.size() != counts.size() || offsets.empty())
      throw Error(ErrorCode::UnsupportedTiffFeature, "missing or inconsistent strip tags");

    Image2 page(width, height);
    auto* dst = reinterpret_cast<std::uint8_t*>(page.pixels.data());
    const std::size_t total = page.pixels.size() * sizeof(float);
    std::size_t filled = 0;
    for (std::size_t s = 0; s < offsets.size(); ++s) {
      const std::size_t len = std::min<std::size_t>(counts[s], total - filled);
      if (static_cast<std::size_t>(offsets[s]) + len > bytes.size())
        throw Error(ErrorCode::TruncatedFile, "strip beyond end of file");
      std::memcpy(dst + filled, bytes.data() + offsets[s], len);
      filled += len;
    }
    if (filled != total) throw Error(ErrorCode::TruncatedFile, "strip data shorter than image");
    pages.push_back(std::move(page));
    ifd = in.get<std::uint32_t>(ifd + 2 + 12 * static_cast<std::size_t>(n));
  }
  return pages;
}

void write_tiff_stack(std::span<const Image2> slices, const std::filesystem::path& path) {
  const auto bytes = encode_tiff_stack(slices);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "write error in " + path.string());
}

std::vector<Image2> read_tiff_stack(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return decode_tiff_stack(bytes);
}

}  // namespace airad
