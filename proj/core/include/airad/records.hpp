#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "airad/image.hpp"

namespace airad {

struct RecordMetadata {
  std::string source_id;
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  std::size_t slice_count = 0;
  std::string datatype;
  std::uintmax_t file_size = 0;
};

/// One row per requested path: metadata, or the error that prevented it.
struct RecordEntry {
  std::filesystem::path path;
  std::optional<RecordMetadata> metadata;
  std::string error;
};

/// Header-only parse. Throws on failure.
RecordMetadata inspect_record(const std::filesystem::path& path);
/// Never throws for per-file problems; they land in RecordEntry::error.
std::vector<RecordEntry> inspect_records(const std::vector<std::filesystem::path>& paths);

std::string to_json(const RecordMetadata& m);
std::string to_json(const std::vector<RecordEntry>& entries);

}  // namespace airad
