#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "airad/image.hpp"

namespace airad {

using Vec3 = std::array<double, 3>;
using Vec2 = std::array<double, 2>;

/// Indices of one face corner into the v, vt and vn arrays (0-based in memory).
struct FaceCorner {
  std::uint32_t v = 0;
  std::uint32_t vt = 0;
  std::uint32_t vn = 0;
  friend bool operator==(const FaceCorner&, const FaceCorner&) = default;
};

using Face = std::array<FaceCorner, 3>;

struct TissueMesh {
  std::string material;
  std::vector<Vec3> vertices;
  std::vector<Vec2> texcoords;
  std::vector<Vec3> normals;
  std::vector<Face> faces;

  bool empty() const noexcept { return faces.empty() && vertices.empty(); }
};

/// Isosurface of a binary mask (nonzero = 1) at `iso` in (0, 1). The mask is
/// padded with one background voxel per side, so the result is closed.
/// Vertices are at index * spacing in mm; normals point out of the foreground.
/// Faces carry matching v and vn indices; call assign_texcoords for vt.
TissueMesh marching_cubes(const LabelMask& m, float iso = 0.5f);

/// One placeholder (0, 0) texcoord per vertex; face vt indices follow v.
TissueMesh assign_texcoords(TissueMesh mesh);

double surface_area(const TissueMesh& mesh);
/// Volume enclosed by a closed, outward-oriented mesh.
double signed_volume(const TissueMesh& mesh);
/// Number of undirected edges not shared by exactly two faces.
std::size_t open_or_nonmanifold_edges(const TissueMesh& mesh);

struct Material {
  std::string name;
  std::array<float, 3> kd{0.0f, 0.0f, 0.0f};
  friend bool operator==(const Material&, const Material&) = default;
};

/// Liver green, tumor blue, vessel red.
std::vector<Material> default_materials();

/// Objects hold face indices already shifted into the shared index space.
struct SceneDocument {
  std::vector<TissueMesh> objects;
  std::string mtl_name = "complete_model";
  std::vector<Material> materials;

  std::size_t vertex_count() const noexcept;
  std::size_t texcoord_count() const noexcept;
  std::size_t normal_count() const noexcept;
};

SceneDocument merge_scene(const std::vector<TissueMesh>& meshes, std::vector<Material> materials = default_materials());
/// Inverse of merge_scene's index shift: each object with 0-based local indices.
std::vector<TissueMesh> split_scene(const SceneDocument& doc);

/// OBJ text with header comments, mtllib, v, vt, vn and per-object f blocks.
std::string format_obj(const SceneDocument& doc, const std::string& mtl_file);
std::string format_mtl(const SceneDocument& doc);
/// IoFailure on write errors. The mtllib line names mtl_path's file name.
void write_obj_mtl(const SceneDocument& doc, const std::filesystem::path& obj_path,
                   const std::filesystem::path& mtl_path);

/// MalformedLine with a 1-based line number on bad input.
SceneDocument parse_obj_text(const std::string& obj_text, const std::string& mtl_text);
SceneDocument parse_obj(const std::filesystem::path& obj_path, const std::filesystem::path& mtl_path);

/// Same structure and materials; coordinates within `tol`.
bool scenes_close(const SceneDocument& a, const SceneDocument& b, double tol);

}  // namespace airad
