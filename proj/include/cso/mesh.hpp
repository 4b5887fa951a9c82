#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cso {

using Vec3 = Eigen::Vector3d;
using Tet = std::array<int, 4>;
using Facet = std::array<int, 3>;

namespace mesh {

// Shared, immutable connectivity of a tetrahedral mesh. Deformed meshes reuse
// the topology of their parent.
struct Topology {
  std::vector<Tet> tets;
  std::vector<Facet> boundary_facets;     // outward oriented
  std::vector<int> boundary_vertices;     // sorted
  std::vector<int> boundary_index;        // vertex -> position in boundary_vertices, or -1
  std::vector<std::vector<int>> rings;    // per boundary vertex (boundary order), ccw from outside
  std::vector<std::vector<int>> neighbors;  // vertex adjacency through tet edges
};

class TetMesh {
 public:
  TetMesh() = default;
  // Builds the boundary and the patch rings. Throws StructureError on a
  // non-manifold boundary and DomainError on out-of-range indices. Tets with
  // non-positive signed volume raise InversionError.
  TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Tet>& tets() const { return topo_->tets; }
  const std::vector<Facet>& boundary_facets() const { return topo_->boundary_facets; }
  const std::vector<int>& boundary_vertices() const { return topo_->boundary_vertices; }
  const Topology& topology() const { return *topo_; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_tets() const { return static_cast<int>(topo_->tets.size()); }
  bool is_boundary_vertex(int v) const { return topo_->boundary_index[v] >= 0; }

  double tet_volume(int t) const;
  double volume() const;
  // Maximal element diameter.
  double h() const;

  // Same connectivity, new coordinates. Throws InversionError carrying the
  // index of the worst element if any tet volume is non-positive.
  TetMesh with_vertices(std::vector<Vec3> vertices) const;

 private:
  std::vector<Vec3> vertices_;
  std::shared_ptr<const Topology> topo_;
};

struct BoundaryNodePatch {
  int center = -1;
  std::vector<int> ring;
  std::vector<Vec3> facet_normals;  // n_i = (z - z_i) x (z - z_{i+1})

  int size() const { return static_cast<int>(ring.size()); }
};

struct EllipsoidSpec {
  double a = 1.0;
  double b = 1.0;
  Vec3 center = Vec3::Zero();
  int level = 3;
  bool half = false;

  double c() const { return 1.0 / (a * b); }
};

struct MeshQuality {
  double min_volume = 0;
  double min_quality = 0;        // signed mean-ratio, 1 for the regular tet
  double min_dihedral_deg = 0;
  double h = 0;
};

// Octahedron-based ball mesh scaled by diag(a, b, c). The lattice resolution
// is 2^level per semi-axis, so h <= sqrt(6) 2^-level for the unit ball.
TetMesh generate_ellipsoid_mesh(const EllipsoidSpec& spec);

// Axis-aligned box split into n^3 cubes of six Kuhn tets each.
TetMesh generate_box_mesh(const Vec3& lo, const Vec3& hi, int n);

// Boundary of a tet soup: facets incident to exactly one tet, oriented outward.
struct BoundaryExtraction {
  std::vector<Facet> facets;
  std::vector<int> vertices;
};
BoundaryExtraction extract_boundary(const std::vector<Vec3>& vertices, const std::vector<Tet>& tets);

BoundaryNodePatch boundary_node_patch(const TetMesh& mesh, int z);
// Builds a patch directly from coordinates; used for tests and by dconvex.
BoundaryNodePatch make_patch(const Vec3& z, const std::vector<Vec3>& ring_points,
                             std::vector<Vec3>* positions = nullptr);
std::vector<Vec3> facet_normals(const Vec3& z, const std::vector<Vec3>& ring_points);

TetMesh deform(const TetMesh& mesh, const std::vector<Vec3>& field, double t);

MeshQuality mesh_quality(const TetMesh& mesh);
double tet_quality(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// TetGen-style ".node"/".ele" pair; `base` is the path without extension.
TetMesh read_mesh(const std::string& base);
void write_mesh(const TetMesh& mesh, const std::string& base);

}  // namespace mesh
}  // namespace cso
