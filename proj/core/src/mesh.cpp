#include "airad/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace airad {
namespace {

// Cube corners are numbered by bits (dx, dy, dz). Each face lists its corners
// counter-clockwise as seen from outside the cube: x0, x1, y0, y1, z0, z1.
constexpr int kFaces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};

struct CubeEdge {
  int low = 0;   // corner with the smaller coordinate along `axis`
  int axis = 0;
  int faces = 0;  // bitmask over kFaces
};

struct CubeTables {
  CubeEdge edges[12];
  int edge_of[8][8];

  CubeTables() {
    int n = 0;
    for (auto& row : edge_of)
      for (int& e : row) e = -1;
    for (int c = 0; c < 8; ++c)
      for (int a = 0; a < 3; ++a) {
        if (c & (1 << a)) continue;
        CubeEdge e{c, a, 0};
        for (int b = 0; b < 3; ++b)
          if (b != a) e.faces |= 1 << (2 * b + ((c >> b) & 1));
        edges[n] = e;
        edge_of[c][c | (1 << a)] = edge_of[c | (1 << a)][c] = n;
        ++n;
      }
  }
};

const CubeTables& tables() {
  static const CubeTables t;
  return t;
}

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

class Extractor {
 public:
  Extractor(const LabelMask& m, float iso) : iso_(iso), spacing_(m.spacing) {
    n_ = {m.dims.nx + 2, m.dims.ny + 2, m.dims.nz + 2};
    field_.assign(n_[0] * n_[1] * n_[2], 0);
    for (std::size_t z = 0; z < m.dims.nz; ++z)
      for (std::size_t y = 0; y < m.dims.ny; ++y)
        for (std::size_t x = 0; x < m.dims.nx; ++x)
          field_[point(x + 1, y + 1, z + 1)] = m.voxels[m.index(x, y, z)] ? 1 : 0;
  }

  TissueMesh run() {
    const auto& T = tables();
    std::size_t offset[8];
    for (int c = 0; c < 8; ++c) offset[c] = point(c & 1, (c >> 1) & 1, (c >> 2) & 1);
    for (std::size_t z = 0; z + 1 < n_[2]; ++z)
      for (std::size_t y = 0; y + 1 < n_[1]; ++y)
        for (std::size_t x = 0; x + 1 < n_[0]; ++x) {
          const std::size_t base = point(x, y, z);
          int index = 0;
          for (int c = 0; c < 8; ++c) index |= (field_[base + offset[c]] ? 1 : 0) << c;
          if (index == 0 || index == 255) continue;
          cell(base, index, T);
        }
    finish_normals();
    mesh_.texcoords.clear();
    return std::move(mesh_);
  }

 private:
  std::size_t point(std::size_t x, std::size_t y, std::size_t z) const { return x + n_[0] * (y + n_[1] * z); }

  double value(std::size_t p) const { return field_[p]; }

  // Central-difference gradient in physical units, one-sided at the border.
  Vec3 gradient(std::size_t p) const {
    const std::size_t c[3] = {p % n_[0], (p / n_[0]) % n_[1], p / (n_[0] * n_[1])};
    const std::size_t stride[3] = {1, n_[0], n_[0] * n_[1]};
    Vec3 g{};
    for (int a = 0; a < 3; ++a) {
      const std::size_t lo = c[a] > 0 ? p - stride[a] : p;
      const std::size_t hi = c[a] + 1 < n_[a] ? p + stride[a] : p;
      const double span = static_cast<double>((c[a] + 1 < n_[a] ? 1 : 0) + (c[a] > 0 ? 1 : 0)) * spacing_[a];
      g[a] = span > 0 ? (value(hi) - value(lo)) / span : 0.0;
    }
    return g;
  }

  std::uint32_t vertex_on(std::size_t low_point, int axis) {
    const std::uint64_t key = 3 * static_cast<std::uint64_t>(low_point) + static_cast<std::uint64_t>(axis);
    const auto [it, fresh] = ids_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (!fresh) return it->second;
    const std::size_t stride[3] = {1, n_[0], n_[0] * n_[1]};
    const std::size_t high_point = low_point + stride[axis];
    const double v0 = value(low_point), v1 = value(high_point);
    const double t = (iso_ - v0) / (v1 - v0);
    const std::size_t c[3] = {low_point % n_[0], (low_point / n_[0]) % n_[1], low_point / (n_[0] * n_[1])};
    Vec3 pos;
    for (int a = 0; a < 3; ++a) {
      const double idx = static_cast<double>(c[a]) - 1.0 + (a == axis ? t : 0.0);
      pos[a] = idx * spacing_[a];
    }
    const Vec3 g0 = gradient(low_point), g1 = gradient(high_point);
    Vec3 n{-(g0[0] + t * (g1[0] - g0[0])), -(g0[1] + t * (g1[1] - g0[1])), -(g0[2] + t * (g1[2] - g0[2]))};
    const double len = norm(n);
    if (len > 1e-12) {
      for (double& e : n) e /= len;
      fallback_.push_back(false);
    } else {
      n = {0.0, 0.0, 0.0};
      fallback_.push_back(true);
    }
    mesh_.vertices.push_back(pos);
    mesh_.normals.push_back(n);
    return it->second;
  }

  void cell(std::size_t base, int index, const CubeTables& T) {
    auto inside = [index](int c) { return (index >> c) & 1; };
    int next[12];
    std::fill(std::begin(next), std::end(next), -1);
    for (const auto& face : kFaces) {
      int cross_edge[4], cross_entry[4], n = 0;
      for (int k = 0; k < 4; ++k) {
        const int a = face[k], b = face[(k + 1) % 4];
        if (inside(a) != inside(b)) {
          cross_edge[n] = T.edge_of[a][b];
          cross_entry[n] = !inside(a);
          ++n;
        }
      }
      if (n == 2) {
        const int exit = cross_entry[0] ? 1 : 0;
        next[cross_edge[exit]] = cross_edge[1 - exit];
      } else if (n == 4) {
        // Asymptotic decider on the bilinear face interpolant; a saddle exactly
        // at the iso-level keeps diagonal inside corners apart.
        const double a = inside(face[0]), b = inside(face[1]), c = inside(face[2]), d = inside(face[3]);
        const double saddle = (a * c - b * d) / (a + c - b - d);
        const bool join_inside = saddle > iso_;
        for (int i = 0; i < 4; ++i) {
          if (cross_entry[i]) continue;
          next[cross_edge[i]] = cross_edge[join_inside ? (i + 1) % 4 : (i + 3) % 4];
        }
      }
    }
    bool seen[12] = {};
    int loop[12];
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || seen[start]) continue;
      int len = 0;
      for (int e = start; !seen[e]; e = next[e]) {
        seen[e] = true;
        loop[len++] = e;
      }
      std::reverse(loop, loop + len);
      emit_loop(base, loop, len, T);
    }
  }

  void emit_loop(std::size_t base, const int* loop, int len, const CubeTables& T) {
    std::uint32_t ids[12];
    int faces[12];
    for (int i = 0; i < len; ++i) {
      const CubeEdge& e = T.edges[loop[i]];
      ids[i] = vertex_on(base + point(e.low & 1, (e.low >> 1) & 1, (e.low >> 2) & 1), e.axis);
      faces[i] = e.faces;
    }
    if (len == 3) {
      add_triangle(ids[0], ids[1], ids[2]);
      return;
    }
    // Fan from an apex whose diagonals all cross the cube interior; a diagonal
    // lying in a cube face could be duplicated by the neighbouring cell.
    for (int a = 0; a < len; ++a) {
      bool ok = true;
      for (int k = 2; k < len - 1 && ok; ++k) ok = (faces[a] & faces[(a + k) % len]) == 0;
      if (!ok) continue;
      for (int k = 1; k < len - 1; ++k) add_triangle(ids[a], ids[(a + k) % len], ids[(a + k + 1) % len]);
      return;
    }
    Vec3 centre{}, normal{};
    for (int i = 0; i < len; ++i)
      for (int c = 0; c < 3; ++c) {
        centre[c] += mesh_.vertices[ids[i]][c] / len;
        normal[c] += mesh_.normals[ids[i]][c];
      }
    const double nl = norm(normal);
    const auto mid = static_cast<std::uint32_t>(mesh_.vertices.size());
    mesh_.vertices.push_back(centre);
    if (nl > 1e-12) {
      mesh_.normals.push_back({normal[0] / nl, normal[1] / nl, normal[2] / nl});
      fallback_.push_back(false);
    } else {
      mesh_.normals.push_back({0.0, 0.0, 0.0});
      fallback_.push_back(true);
    }
    for (int i = 0; i < len; ++i) add_triangle(mid, ids[i], ids[(i + 1) % len]);
  }

  void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    mesh_.faces.push_back(Face{FaceCorner{a, a, a}, FaceCorner{b, b, b}, FaceCorner{c, c, c}});
  }

  // Vertices whose gradient vanished take the area-weighted face normal.
  void finish_normals() {
    if (std::none_of(fallback_.begin(), fallback_.end(), [](bool b) { return b; })) return;
    for (const Face& f : mesh_.faces) {
      const Vec3 fn = cross(sub(mesh_.vertices[f[1].v], mesh_.vertices[f[0].v]),
                            sub(mesh_.vertices[f[2].v], mesh_.vertices[f[0].v]));
      for (const auto& corner : f)
        if (fallback_[corner.v])
          for (int c = 0; c < 3; ++c) mesh_.normals[corner.v][c] += fn[c];
    }
    for (std::size_t i = 0; i < fallback_.size(); ++i) {
      if (!fallback_[i]) continue;
      Vec3& n = mesh_.normals[i];
      const double len = norm(n);
      n = len > 1e-12 ? Vec3{n[0] / len, n[1] / len, n[2] / len} : Vec3{0.0, 0.0, 1.0};
    }
  }

  double iso_;
  Spacing spacing_;
  std::array<std::size_t, 3> n_{};
  std::vector<std::uint8_t> field_;
  std::unordered_map<std::uint64_t, std::uint32_t> ids_;
  std::vector<bool> fallback_;
  TissueMesh mesh_;
};

// Appends fixed-point text without locale or stream overhead.
void put(std::string& out, double v, int decimals) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  out.append(buf, r.ptr);
}

void put(std::string& out, std::uint64_t v) {
  char buf[24];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

constexpr int kDecimals = 6;

template <typename Sink>
void emit_obj(const SceneDocument& doc, const std::string& mtl_file, Sink&& sink) {
  std::string out;
  out.reserve(1 << 20);
  auto flush_if_big = [&] {
    if (out.size() >= (1u << 20)) {
      sink(out);
      out.clear();
    }
  };
  out += "# airad complete model\n";
  for (const auto& o : doc.objects) {
    out += "# object ";
    out += o.material;
    out += " v ";
    put(out, o.vertices.size());
    out += " vt ";
    put(out, o.texcoords.size());
    out += " vn ";
    put(out, o.normals.size());
    out += " f ";
    put(out, o.faces.size());
    out += '\n';
  }
  out += "mtllib ";
  out += mtl_file;
  out += '\n';
  for (const auto& o : doc.objects)
    for (const auto& v : o.vertices) {
      out += "v ";
      put(out, v[0], kDecimals);
      out += ' ';
      put(out, v[1], kDecimals);
      out += ' ';
      put(out, v[2], kDecimals);
      out += '\n';
      flush_if_big();
    }
  for (const auto& o : doc.objects)
    for (const auto& t : o.texcoords) {
      out += "vt ";
      put(out, t[0], kDecimals);
      out += ' ';
      put(out, t[1], kDecimals);
      out += '\n';
      flush_if_big();
    }
  for (const auto& o : doc.objects)
    for (const auto& n : o.normals) {
      out += "vn ";
      put(out, n[0], kDecimals);
      out += ' ';
      put(out, n[1], kDecimals);
      out += ' ';
      put(out, n[2], kDecimals);
      out += '\n';
      flush_if_big();
    }
  for (const auto& o : doc.objects) {
    out += "usemtl ";
    out += o.material;
    out += '\n';
    for (const auto& f : o.faces) {
      out += 'f';
      for (const auto& c : f) {
        out += ' ';
        put(out, static_cast<std::uint64_t>(c.v) + 1);
        out += '/';
        put(out, static_cast<std::uint64_t>(c.vt) + 1);
        out += '/';
        put(out, static_cast<std::uint64_t>(c.vn) + 1);
      }
      out += '\n';
      flush_if_big();
    }
  }
  sink(out);
}

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t j = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > j) out.push_back(s.substr(j, i - j));
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) malformed(line, "bad number '" + std::string(s) + "'");
  return v;
}

std::uint32_t parse_index(std::string_view s, std::size_t line) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v == 0 || v > 0xffffffffULL)
    malformed(line, "bad index '" + std::string(s) + "'");
  return static_cast<std::uint32_t>(v - 1);
}

FaceCorner parse_corner(std::string_view s, std::size_t line) {
  FaceCorner c;
  const std::size_t p1 = s.find('/');
  if (p1 == std::string_view::npos) {
    c.v = c.vt = c.vn = parse_index(s, line);
    return c;
  }
  c.v = parse_index(s.substr(0, p1), line);
  const std::size_t p2 = s.find('/', p1 + 1);
  const std::string_view vt = s.substr(p1 + 1, p2 == std::string_view::npos ? std::string_view::npos : p2 - p1 - 1);
  c.vt = vt.empty() ? c.v : parse_index(vt, line);
  c.vn = p2 == std::string_view::npos ? c.v : parse_index(s.substr(p2 + 1), line);
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TissueMesh marching_cubes(const LabelMask& m, float iso) {
  if (!(iso > 0.0f && iso < 1.0f)) throw Error(ErrorCode::InvalidArgument, "iso-level must lie in (0, 1) for a binary mask");
  if (count_nonzero(m) == 0) throw Error(ErrorCode::EmptyMask, "marching cubes on an empty mask");
  return Extractor(m, iso).run();
}

TissueMesh assign_texcoords(TissueMesh mesh) {
  mesh.texcoords.assign(mesh.vertices.size(), Vec2{0.0, 0.0});
  for (auto& f : mesh.faces)
    for (auto& c : f) c.vt = c.v;
  return mesh;
}

double surface_area(const TissueMesh& mesh) {
  double area = 0.0;
  for (const Face& f : mesh.faces)
    area += 0.5 * norm(cross(sub(mesh.vertices[f[1].v], mesh.vertices[f[0].v]),
                             sub(mesh.vertices[f[2].v], mesh.vertices[f[0].v])));
  return area;
}

double signed_volume(const TissueMesh& mesh) {
  double vol = 0.0;
  for (const Face& f : mesh.faces)
    vol += dot(mesh.vertices[f[0].v], cross(mesh.vertices[f[1].v], mesh.vertices[f[2].v])) / 6.0;
  return vol;
}

std::size_t open_or_nonmanifold_edges(const TissueMesh& mesh) {
  std::unordered_map<std::uint64_t, int> uses;
  uses.reserve(mesh.faces.size() * 2);
  for (const Face& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t a = f[k].v, b = f[(k + 1) % 3].v;
      ++uses[std::min(a, b) << 32 | std::max(a, b)];
    }
  return static_cast<std::size_t>(std::count_if(uses.begin(), uses.end(), [](const auto& kv) { return kv.second != 2; }));
}

std::vector<Material> default_materials() {
  return {{"liver", {0.0f, 0.6f, 0.0f}}, {"tumor", {0.0f, 0.0f, 0.8f}}, {"vessel", {0.8f, 0.0f, 0.0f}}};
}

std::size_t SceneDocument::vertex_count() const noexcept {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.vertices.size();
  return n;
}
std::size_t SceneDocument::texcoord_count() const noexcept {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.texcoords.size();
  return n;
}
std::size_t SceneDocument::normal_count() const noexcept {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.normals.size();
  return n;
}

SceneDocument merge_scene(const std::vector<TissueMesh>& meshes, std::vector<Material> materials) {
  if (meshes.empty()) throw Error(ErrorCode::InvalidArgument, "merge_scene needs at least one mesh");
  SceneDocument doc;
  doc.materials = std::move(materials);
  std::uint32_t v0 = 0, vt0 = 0, vn0 = 0;
  for (const auto& m : meshes) {
    if (m.material.empty() || m.material.find_first_of(" \t\r\n") != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "mesh material must be a single non-empty word");
    TissueMesh o = m;
    for (auto& f : o.faces)
      for (auto& c : f) {
        c.v += v0;
        c.vt += vt0;
        c.vn += vn0;
      }
    v0 += static_cast<std::uint32_t>(m.vertices.size());
    vt0 += static_cast<std::uint32_t>(m.texcoords.size());
    vn0 += static_cast<std::uint32_t>(m.normals.size());
    doc.objects.push_back(std::move(o));
  }
  return doc;
}

std::vector<TissueMesh> split_scene(const SceneDocument& doc) {
  std::vector<TissueMesh> out;
  std::uint32_t v0 = 0, vt0 = 0, vn0 = 0;
  for (const auto& o : doc.objects) {
    TissueMesh m = o;
    for (auto& f : m.faces)
      for (auto& c : f) {
        c.v -= v0;
        c.vt -= vt0;
        c.vn -= vn0;
      }
    v0 += static_cast<std::uint32_t>(o.vertices.size());
    vt0 += static_cast<std::uint32_t>(o.texcoords.size());
    vn0 += static_cast<std::uint32_t>(o.normals.size());
    out.push_back(std::move(m));
  }
  return out;
}

std::string format_obj(const SceneDocument& doc, const std::string& mtl_file) {
  std::string text;
  emit_obj(doc, mtl_file, [&](const std::string& chunk) { text += chunk; });
  return text;
}

std::string format_mtl(const SceneDocument& doc) {
  std::string out = "# airad materials\n";
  for (const auto& m : doc.materials) {
    out += "newmtl " + m.name + "\nKd";
    for (float c : m.kd) {
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, c);
      out += ' ';
      out.append(buf, r.ptr);
    }
    out += '\n';
  }
  return out;
}

void write_obj_mtl(const SceneDocument& doc, const std::filesystem::path& obj_path,
                   const std::filesystem::path& mtl_path) {
  {
    std::ofstream f(obj_path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + obj_path.string() + " for writing");
    emit_obj(doc, mtl_path.filename().string(), [&](const std::string& chunk) { f.write(chunk.data(), static_cast<std::streamsize>(chunk.size())); });
    if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + obj_path.string());
  }
  std::ofstream f(mtl_path, std::ios::binary);
  const std::string mtl = format_mtl(doc);
  f.write(mtl.data(), static_cast<std::streamsize>(mtl.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + mtl_path.string());
}

SceneDocument parse_obj_text(const std::string& obj_text, const std::string& mtl_text) {
  SceneDocument doc;
  struct Declared {
    std::string name;
    std::size_t v = 0, vt = 0, vn = 0;
  };
  std::vector<Declared> declared;
  std::vector<Vec3> vs, vns;
  std::vector<Vec2> vts;
  std::vector<std::pair<std::string, std::vector<Face>>> blocks;

  std::size_t line_no = 0, pos = 0;
  const std::string_view text(obj_text);
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string_view key = tok[0];
    if (key[0] == '#') {
      if (tok.size() == 11 && tok[1] == "object" && tok[3] == "v" && tok[5] == "vt" && tok[7] == "vn" && tok[9] == "f") {
        Declared d;
        d.name = std::string(tok[2]);
        d.v = static_cast<std::size_t>(parse_double(tok[4], line_no));
        d.vt = static_cast<std::size_t>(parse_double(tok[6], line_no));
        d.vn = static_cast<std::size_t>(parse_double(tok[8], line_no));
        declared.push_back(d);
      }
    } else if (key == "v") {
      if (tok.size() < 4) malformed(line_no, "vertex needs three coordinates");
      vs.push_back({parse_double(tok[1], line_no), parse_double(tok[2], line_no), parse_double(tok[3], line_no)});
    } else if (key == "vt") {
      if (tok.size() < 3) malformed(line_no, "texcoord needs two coordinates");
      vts.push_back({parse_double(tok[1], line_no), parse_double(tok[2], line_no)});
    } else if (key == "vn") {
      if (tok.size() != 4) malformed(line_no, "normal needs three components");
      vns.push_back({parse_double(tok[1], line_no), parse_double(tok[2], line_no), parse_double(tok[3], line_no)});
    } else if (key == "f") {
      if (tok.size() != 4) malformed(line_no, "faces must be triangles");
      if (blocks.empty()) blocks.emplace_back("", std::vector<Face>{});
      Face f;
      for (int k = 0; k < 3; ++k) f[k] = parse_corner(tok[k + 1], line_no);
      for (const auto& c : f)
        if (c.v >= vs.size() || c.vt >= std::max<std::size_t>(vts.size(), 1) || c.vn >= std::max<std::size_t>(vns.size(), 1))
          malformed(line_no, "face index out of range");
      blocks.back().second.push_back(f);
    } else if (key == "usemtl") {
      if (tok.size() != 2) malformed(line_no, "usemtl needs one name");
      blocks.emplace_back(std::string(tok[1]), std::vector<Face>{});
    } else if (key == "mtllib") {
      if (tok.size() != 2) malformed(line_no, "mtllib needs one file name");
      std::string name(tok[1]);
      if (name.size() > 4 && name.ends_with(".mtl")) name.resize(name.size() - 4);
      doc.mtl_name = name;
    } else if (key == "o" || key == "g" || key == "s") {
      continue;
    } else {
      malformed(line_no, "unknown statement '" + std::string(key) + "'");
    }
  }

  // Per-object ranges come from the header counts when present, otherwise
  // from the largest index each face block references.
  std::size_t v0 = 0, vt0 = 0, vn0 = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    TissueMesh o;
    o.material = blocks[i].first;
    o.faces = std::move(blocks[i].second);
    std::size_t v1, vt1, vn1;
    if (declared.size() == blocks.size()) {
      v1 = v0 + declared[i].v;
      vt1 = vt0 + declared[i].vt;
      vn1 = vn0 + declared[i].vn;
    } else {
      v1 = v0, vt1 = vt0, vn1 = vn0;
      for (const auto& f : o.faces)
        for (const auto& c : f) {
          v1 = std::max<std::size_t>(v1, c.v + 1);
          vt1 = std::max<std::size_t>(vt1, vts.empty() ? 0 : c.vt + 1);
          vn1 = std::max<std::size_t>(vn1, vns.empty() ? 0 : c.vn + 1);
        }
      if (i + 1 == blocks.size()) v1 = vs.size(), vt1 = vts.size(), vn1 = vns.size();
    }
    if (v1 > vs.size() || vt1 > vts.size() || vn1 > vns.size())
      throw Error(ErrorCode::MalformedLine, "object '" + o.material + "' declares more elements than the file holds");
    o.vertices.assign(vs.begin() + static_cast<std::ptrdiff_t>(v0), vs.begin() + static_cast<std::ptrdiff_t>(v1));
    o.texcoords.assign(vts.begin() + static_cast<std::ptrdiff_t>(vt0), vts.begin() + static_cast<std::ptrdiff_t>(vt1));
    o.normals.assign(vns.begin() + static_cast<std::ptrdiff_t>(vn0), vns.begin() + static_cast<std::ptrdiff_t>(vn1));
    v0 = v1, vt0 = vt1, vn0 = vn1;
    doc.objects.push_back(std::move(o));
  }

  line_no = 0;
  std::istringstream mtl(mtl_text);
  std::string line;
  while (std::getline(mtl, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "newmtl") {
      if (tok.size() != 2) malformed(line_no, "newmtl needs one name");
      doc.materials.push_back({std::string(tok[1]), {0.0f, 0.0f, 0.0f}});
    } else if (tok[0] == "Kd") {
      if (tok.size() != 4 || doc.materials.empty()) malformed(line_no, "Kd needs three components after newmtl");
      for (int c = 0; c < 3; ++c) doc.materials.back().kd[c] = static_cast<float>(parse_double(tok[c + 1], line_no));
    }
  }
  return doc;
}

SceneDocument parse_obj(const std::filesystem::path& obj_path, const std::filesystem::path& mtl_path) {
  return parse_obj_text(read_text(obj_path), read_text(mtl_path));
}

bool scenes_close(const SceneDocument& a, const SceneDocument& b, double tol) {
  if (a.mtl_name != b.mtl_name || a.materials != b.materials || a.objects.size() != b.objects.size()) return false;
  auto close3 = [tol](const Vec3& p, const Vec3& q) {
    return std::abs(p[0] - q[0]) <= tol && std::abs(p[1] - q[1]) <= tol && std::abs(p[2] - q[2]) <= tol;
  };
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const auto &x = a.objects[i], &y = b.objects[i];
    if (x.material != y.material || x.faces != y.faces || x.vertices.size() != y.vertices.size() ||
        x.texcoords.size() != y.texcoords.size() || x.normals.size() != y.normals.size())
      return false;
    for (std::size_t k = 0; k < x.vertices.size(); ++k)
      if (!close3(x.vertices[k], y.vertices[k])) return false;
    for (std::size_t k = 0; k < x.normals.size(); ++k)
      if (!close3(x.normals[k], y.normals[k])) return false;
    for (std::size_t k = 0; k < x.texcoords.size(); ++k)
      if (std::abs(x.texcoords[k][0] - y.texcoords[k][0]) > tol || std::abs(x.texcoords[k][1] - y.texcoords[k][1]) > tol)
        return false;
  }
  return true;
}

}  // namespace airad
