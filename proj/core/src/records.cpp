#include "airad/records.hpp"

#include <nlohmann/json.hpp>

#include "airad/nifti.hpp"

namespace airad {
namespace {

std::string datatype_name(std::int16_t code) {
  switch (static_cast<NiftiDatatype>(code)) {
    case NiftiDatatype::UInt8: return "uint8";
    case NiftiDatatype::Int16: return "int16";
    case NiftiDatatype::Float32: return "float32";
    case NiftiDatatype::Float64: return "float64";
  }
  return "code " + std::to_string(code);
}

nlohmann::json metadata_json(const RecordMetadata& m) {
  return {{"source_id", m.source_id},
          {"dims", {m.dims.nx, m.dims.ny, m.dims.nz}},
          {"spacing", m.spacing},
          {"slice_count", m.slice_count},
          {"datatype", m.datatype},
          {"file_size", m.file_size}};
}

}  // namespace

RecordMetadata inspect_record(const std::filesystem::path& path) {
  const NiftiHeader h = read_nifti_header(path);
  RecordMetadata m;
  m.source_id = nifti_stem(path);
  m.dims = h.dims();
  m.spacing = h.spacing();
  m.slice_count = m.dims.nz;
  m.datatype = datatype_name(h.datatype);
  m.file_size = std::filesystem::file_size(path);
  return m;
}

std::vector<RecordEntry> inspect_records(const std::vector<std::filesystem::path>& paths) {
  std::vector<RecordEntry> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    RecordEntry e;
    e.path = p;
    try {
      e.metadata = inspect_record(p);
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string to_json(const RecordMetadata& m) { return metadata_json(m).dump(); }

std::string to_json(const std::vector<RecordEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json row = {{"path", e.path.string()}};
    if (e.metadata)
      row["metadata"] = metadata_json(*e.metadata);
    else
      row["error"] = e.error;
    j.push_back(row);
  }
  return j.dump();
}

}  // namespace airad
