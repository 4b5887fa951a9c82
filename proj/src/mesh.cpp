#include "cso/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cso/error.hpp"

namespace cso::mesh {

namespace {

// Outward faces of a positively oriented tet (a, b, c, d).
constexpr std::array<std::array<int, 3>, 4> kTetFaces = {{{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}}};

std::array<int, 3> sorted(Facet f) {
  std::sort(f.begin(), f.end());
  return f;
}

std::shared_ptr<const Topology> build_topology(const std::vector<Vec3>& vertices, std::vector<Tet> tets) {
  auto topo = std::make_shared<Topology>();
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < tets.size(); ++t) {
    for (int v : tets[t]) {
      if (v < 0 || v >= nv) {
        throw DomainError("tet " + std::to_string(t) + " references vertex " + std::to_string(v) +
                          " out of range [0, " + std::to_string(nv) + ")");
      }
    }
  }
  auto boundary = extract_boundary(vertices, tets);
  topo->tets = std::move(tets);
  topo->boundary_facets = std::move(boundary.facets);
  topo->boundary_vertices = std::move(boundary.vertices);
  topo->boundary_index.assign(nv, -1);
  for (std::size_t i = 0; i < topo->boundary_vertices.size(); ++i) {
    topo->boundary_index[topo->boundary_vertices[i]] = static_cast<int>(i);
  }

  // Rings: rotate each incident facet so that z comes last; (z_i, z_{i+1}, z)
  // then yields the directed ring edge z_i -> z_{i+1}.
  std::vector<std::vector<std::pair<int, int>>> incident(topo->boundary_vertices.size());
  for (const auto& f : topo->boundary_facets) {
    for (int k = 0; k < 3; ++k) {
      const int z = f[k];
      incident[topo->boundary_index[z]].emplace_back(f[(k + 1) % 3], f[(k + 2) % 3]);
    }
  }
  topo->rings.resize(incident.size());
  for (std::size_t bi = 0; bi < incident.size(); ++bi) {
    const auto& edges = incident[bi];
    const int z = topo->boundary_vertices[bi];
    std::unordered_map<int, int> next;
    for (auto [a, b] : edges) {
      if (!next.emplace(a, b).second) {
        throw StructureError("boundary vertex " + std::to_string(z) + " has a non-manifold patch");
      }
    }
    std::vector<int> ring;
    int cur = edges.front().first;
    for (std::size_t step = 0; step < edges.size(); ++step) {
      ring.push_back(cur);
      auto it = next.find(cur);
      if (it == next.end()) {
        throw StructureError("patch of boundary vertex " + std::to_string(z) + " is not a closed ring");
      }
      cur = it->second;
    }
    if (cur != ring.front() || ring.size() < 3) {
      throw StructureError("patch of boundary vertex " + std::to_string(z) + " is disconnected");
    }
    topo->rings[bi] = std::move(ring);
  }

  std::vector<std::set<int>> adj(nv);
  for (const auto& t : topo->tets) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i != j) adj[t[i]].insert(t[j]);
      }
    }
  }
  topo->neighbors.resize(nv);
  for (int v = 0; v < nv; ++v) topo->neighbors[v].assign(adj[v].begin(), adj[v].end());
  return topo;
}

void check_orientation(const std::vector<Vec3>& x, const std::vector<Tet>& tets) {
  int worst = -1;
  double worst_vol = 0;
  for (std::size_t t = 0; t < tets.size(); ++t) {
    const auto& k = tets[t];
    const double vol = signed_volume(x[k[0]], x[k[1]], x[k[2]], x[k[3]]);
    if (vol <= 0 && (worst < 0 || vol < worst_vol)) {
      worst = static_cast<int>(t);
      worst_vol = vol;
    }
  }
  if (worst >= 0) {
    std::ostringstream os;
    os << "element " << worst << " has non-positive volume " << worst_vol;
    throw InversionError(os.str(), worst);
  }
}

}  // namespace

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

double tet_quality(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const double l2 = (b - a).squaredNorm() + (c - a).squaredNorm() + (d - a).squaredNorm() +
                    (c - b).squaredNorm() + (d - b).squaredNorm() + (d - c).squaredNorm();
  const double lrms = std::sqrt(l2 / 6.0);
  if (lrms == 0) return 0;
  return 6.0 * std::sqrt(2.0) * signed_volume(a, b, c, d) / (lrms * lrms * lrms);
}

TetMesh::TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets) : vertices_(std::move(vertices)) {
  topo_ = build_topology(vertices_, std::move(tets));
  check_orientation(vertices_, topo_->tets);
}

double TetMesh::tet_volume(int t) const {
  const auto& k = topo_->tets[t];
  return signed_volume(vertices_[k[0]], vertices_[k[1]], vertices_[k[2]], vertices_[k[3]]);
}

double TetMesh::volume() const {
  double v = 0;
  for (int t = 0; t < num_tets(); ++t) v += tet_volume(t);
  return v;
}

double TetMesh::h() const {
  double h2 = 0;
  for (const auto& k : topo_->tets) {
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) h2 = std::max(h2, (vertices_[k[i]] - vertices_[k[j]]).squaredNorm());
    }
  }
  return std::sqrt(h2);
}

TetMesh TetMesh::with_vertices(std::vector<Vec3> vertices) const {
  if (vertices.size() != vertices_.size()) {
    throw DomainError("vertex count mismatch in with_vertices");
  }
  check_orientation(vertices, topo_->tets);
  TetMesh out;
  out.vertices_ = std::move(vertices);
  out.topo_ = topo_;
  return out;
}

BoundaryExtraction extract_boundary(const std::vector<Vec3>& vertices, const std::vector<Tet>& tets) {
  std::map<std::array<int, 3>, std::pair<int, Facet>> faces;
  for (const auto& t : tets) {
    const bool positive = signed_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]) > 0;
    for (const auto& lf : kTetFaces) {
      Facet f{t[lf[0]], t[lf[1]], t[lf[2]]};
      if (!positive) std::swap(f[1], f[2]);
      auto [it, inserted] = faces.try_emplace(sorted(f), 1, f);
      if (!inserted) ++it->second.first;
    }
  }
  BoundaryExtraction out;
  std::set<int> verts;
  for (const auto& [key, entry] : faces) {
    if (entry.first > 2) {
      throw StructureError("facet shared by more than two tets");
    }
    if (entry.first == 1) {
      out.facets.push_back(entry.second);
      verts.insert(key.begin(), key.end());
    }
  }
  // Each directed boundary edge must appear exactly once.
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : out.facets) {
    for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
  }
  for (const auto& [e, n] : directed) {
    auto rev = directed.find({e.second, e.first});
    if (n != 1 || rev == directed.end() || rev->second != 1) {
      throw StructureError("non-manifold boundary edge (" + std::to_string(e.first) + ", " +
                           std::to_string(e.second) + ")");
    }
  }
  out.vertices.assign(verts.begin(), verts.end());
  return out;
}

std::vector<Vec3> facet_normals(const Vec3& z, const std::vector<Vec3>& ring) {
  const std::size_t m = ring.size();
  std::vector<Vec3> n(m);
  for (std::size_t i = 0; i < m; ++i) n[i] = (z - ring[i]).cross(z - ring[(i + 1) % m]);
  return n;
}

BoundaryNodePatch boundary_node_patch(const TetMesh& mesh, int z) {
  if (z < 0 || z >= mesh.num_vertices()) {
    throw DomainError("vertex " + std::to_string(z) + " out of range");
  }
  const int bi = mesh.topology().boundary_index[z];
  if (bi < 0) {
    throw DomainError("vertex " + std::to_string(z) + " is not a boundary vertex");
  }
  BoundaryNodePatch p;
  p.center = z;
  p.ring = mesh.topology().rings[bi];
  std::vector<Vec3> pts;
  pts.reserve(p.ring.size());
  for (int v : p.ring) pts.push_back(mesh.vertices()[v]);
  p.facet_normals = facet_normals(mesh.vertices()[z], pts);
  return p;
}

BoundaryNodePatch make_patch(const Vec3& z, const std::vector<Vec3>& ring_points, std::vector<Vec3>* positions) {
  if (ring_points.size() < 3) throw DomainError("a patch needs at least three ring vertices");
  BoundaryNodePatch p;
  p.center = 0;
  for (std::size_t i = 0; i < ring_points.size(); ++i) p.ring.push_back(static_cast<int>(i) + 1);
  p.facet_normals = facet_normals(z, ring_points);
  if (positions) {
    positions->clear();
    positions->push_back(z);
    positions->insert(positions->end(), ring_points.begin(), ring_points.end());
  }
  return p;
}

TetMesh generate_ellipsoid_mesh(const EllipsoidSpec& spec) {
  if (!(spec.a > 0) || !(spec.b > 0)) throw DomainError("ellipsoid semi-axes must be positive");
  if (spec.level < 0) throw DomainError("refinement level must be nonnegative");
  if (spec.level > 7) throw ResourceError("refinement level " + std::to_string(spec.level) + " exceeds the memory budget (max 7)");
  const int n = 1 << spec.level;

  // Lattice points q with |q|_1 <= n; index via a dense cube.
  const int side = 2 * n + 1;
  std::vector<int> index(static_cast<std::size_t>(side) * side * side, -1);
  std::vector<Vec3> points;
  auto id = [&](int i, int j, int k) -> int& {
    return index[(static_cast<std::size_t>(i + n) * side + (j + n)) * side + (k + n)];
  };
  const Vec3 scale(spec.a, spec.b, spec.c());
  for (int i = -n; i <= n; ++i) {
    for (int j = -n; j <= n; ++j) {
      for (int k = -n; k <= n; ++k) {
        const int l1 = std::abs(i) + std::abs(j) + std::abs(k);
        if (l1 > n || (spec.half && k < 0)) continue;
        Vec3 q(i, j, k);
        Vec3 x = Vec3::Zero();
        if (l1 > 0) x = q * (static_cast<double>(l1) / q.norm()) / n;
        if (l1 == n) x.normalize();
        id(i, j, k) = static_cast<int>(points.size());
        points.push_back(spec.center + x.cwiseProduct(scale));
      }
    }
  }

  // Freudenthal subdivision of the Kuhn simplex n >= x >= y >= z >= 0, mapped
  // linearly onto the corner simplex {a, b, c >= 0, a + b + c <= n}.
  std::vector<std::array<Eigen::Vector3i, 4>> octant;
  const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      for (int k = 0; k <= j; ++k) {
        for (const auto& p : perms) {
          std::array<Eigen::Vector3i, 4> v;
          v[0] = Eigen::Vector3i(i, j, k);
          for (int s = 0; s < 3; ++s) {
            v[s + 1] = v[s];
            v[s + 1][p[s]] += 1;
          }
          Eigen::Vector3d c = Eigen::Vector3d::Zero();
          for (const auto& w : v) c += w.cast<double>();
          c /= 4.0;
          if (!(c.x() < n && c.x() > c.y() && c.y() > c.z() && c.z() > 0)) continue;
          for (auto& w : v) w = Eigen::Vector3i(w.x() - w.y(), w.y() - w.z(), w.z());
          octant.push_back(v);
        }
      }
    }
  }

  std::vector<Tet> tets;
  for (int sx : {1, -1}) {
    for (int sy : {1, -1}) {
      for (int sz : {1, -1}) {
        if (spec.half && sz < 0) continue;
        for (const auto& v : octant) {
          Tet t;
          for (int c = 0; c < 4; ++c) t[c] = id(sx * v[c].x(), sy * v[c].y(), sz * v[c].z());
          if (signed_volume(points[t[0]], points[t[1]], points[t[2]], points[t[3]]) < 0) std::swap(t[2], t[3]);
          tets.push_back(t);
        }
      }
    }
  }
  return TetMesh(std::move(points), std::move(tets));
}

TetMesh generate_box_mesh(const Vec3& lo, const Vec3& hi, int n) {
  if (n < 1) throw DomainError("box mesh needs at least one cell per axis");
  if (!((hi - lo).minCoeff() > 0)) throw DomainError("box mesh needs hi > lo componentwise");
  if (n > 128) throw ResourceError("box mesh resolution " + std::to_string(n) + " exceeds the memory budget");
  auto id = [n](int i, int j, int k) { return (i * (n + 1) + j) * (n + 1) + k; };
  std::vector<Vec3> points;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k)
        points.push_back(lo + Vec3(i, j, k).cwiseProduct(hi - lo) / n);
  const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Tet> tets;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          Tet t;
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[p[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          if (signed_volume(points[t[0]], points[t[1]], points[t[2]], points[t[3]]) < 0) std::swap(t[2], t[3]);
          tets.push_back(t);
        }
      }
    }
  }
  return TetMesh(std::move(points), std::move(tets));
}

TetMesh deform(const TetMesh& mesh, const std::vector<Vec3>& field, double t) {
  if (static_cast<int>(field.size()) != mesh.num_vertices()) {
    throw DomainError("deformation field size does not match the vertex count");
  }
  std::vector<Vec3> x = mesh.vertices();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += t * field[i];
  return mesh.with_vertices(std::move(x));
}

MeshQuality mesh_quality(const TetMesh& mesh) {
  MeshQuality q;
  q.min_volume = std::numeric_limits<double>::infinity();
  q.min_quality = std::numeric_limits<double>::infinity();
  q.min_dihedral_deg = 180.0;
  const auto& x = mesh.vertices();
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto& k = mesh.tets()[t];
    q.min_volume = std::min(q.min_volume, mesh.tet_volume(t));
    q.min_quality = std::min(q.min_quality, tet_quality(x[k[0]], x[k[1]], x[k[2]], x[k[3]]));
    // Dihedral angle along edge (i, j) between the faces containing it.
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        int o[2], c = 0;
        for (int l = 0; l < 4; ++l) {
          if (l != i && l != j) o[c++] = l;
        }
        const Vec3 e = (x[k[j]] - x[k[i]]).normalized();
        Vec3 u = x[k[o[0]]] - x[k[i]];
        Vec3 w = x[k[o[1]]] - x[k[i]];
        u -= u.dot(e) * e;
        w -= w.dot(e) * e;
        const double cosang = std::clamp(u.normalized().dot(w.normalized()), -1.0, 1.0);
        q.min_dihedral_deg = std::min(q.min_dihedral_deg, std::acos(cosang) * 180.0 / std::numbers::pi);
      }
    }
  }
  q.h = mesh.h();
  return q;
}

namespace {

struct Lines {
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // (line number, tokens)
};

Lines tokenize(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  Lines out;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (!tok.empty()) out.rows.emplace_back(no, std::move(tok));
  }
  return out;
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  return std::all_of(s.begin() + i, s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// A TetGen header is all-integer, carries the row count first and the
// per-row arity second.
bool has_header(const Lines& l, const std::string& arity) {
  if (l.rows.empty()) return false;
  const auto& tok = l.rows.front().second;
  if (tok.size() < 2 || tok[1] != arity) return false;
  if (!std::all_of(tok.begin(), tok.end(), is_integer)) return false;
  return std::stol(tok[0]) == static_cast<long>(l.rows.size()) - 1;
}

double to_double(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line) + ": invalid number '" + s + "'", line);
  }
}

}  // namespace

TetMesh read_mesh(const std::string& base) {
  const std::string node_path = base + ".node";
  const std::string ele_path = base + ".ele";
  Lines nodes = tokenize(node_path);
  Lines eles = tokenize(ele_path);
  const std::size_t n0 = has_header(nodes, "3") ? 1 : 0;
  const std::size_t e0 = has_header(eles, "4") ? 1 : 0;

  std::vector<Vec3> x;
  for (std::size_t r = n0; r < nodes.rows.size(); ++r) {
    const auto& [line, tok] = nodes.rows[r];
    if (tok.size() != 4) {
      throw ParseError(node_path + ":" + std::to_string(line) + ": node row must have 4 fields (index x y z), got " +
                           std::to_string(tok.size()),
                       line);
    }
    const auto idx = static_cast<std::size_t>(to_double(tok[0], node_path, line));
    if (idx != x.size()) {
      throw ParseError(node_path + ":" + std::to_string(line) + ": expected node index " + std::to_string(x.size()), line);
    }
    x.emplace_back(to_double(tok[1], node_path, line), to_double(tok[2], node_path, line),
                   to_double(tok[3], node_path, line));
  }
  std::vector<Tet> tets;
  for (std::size_t r = e0; r < eles.rows.size(); ++r) {
    const auto& [line, tok] = eles.rows[r];
    if (tok.size() != 5) {
      throw ParseError(ele_path + ":" + std::to_string(line) + ": element row must have 5 fields (index v1 v2 v3 v4), got " +
                           std::to_string(tok.size()),
                       line);
    }
    Tet t;
    for (int c = 0; c < 4; ++c) {
      if (!is_integer(tok[c + 1])) {
        throw ParseError(ele_path + ":" + std::to_string(line) + ": invalid vertex index '" + tok[c + 1] + "'", line);
      }
      t[c] = std::stoi(tok[c + 1]);
      if (t[c] < 0 || t[c] >= static_cast<int>(x.size())) {
        throw ParseError(ele_path + ":" + std::to_string(line) + ": vertex index " + tok[c + 1] + " out of range", line);
      }
    }
    tets.push_back(t);
  }
  return TetMesh(std::move(x), std::move(tets));
}

void write_mesh(const TetMesh& mesh, const std::string& base) {
  std::ofstream node(base + ".node");
  std::ofstream ele(base + ".ele");
  if (!node || !ele) throw Error("cannot write mesh to " + base);
  node << mesh.num_vertices() << " 3 0 0\n";
  node.precision(17);
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    const auto& p = mesh.vertices()[i];
    node << i << ' ' << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  ele << mesh.num_tets() << " 4 0\n";
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto& k = mesh.tets()[t];
    ele << t << ' ' << k[0] << ' ' << k[1] << ' ' << k[2] << ' ' << k[3] << '\n';
  }
}

}  // namespace cso::mesh
