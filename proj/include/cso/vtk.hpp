#pragma once

#include <array>
#include <string>
#include <vector>

#include "cso/mesh.hpp"

namespace cso::vtk {

// Per-vertex field; `components` is 1 (SCALARS) or 3 (VECTORS).
struct PointField {
  std::string name;
  int components = 1;
  std::vector<double> data;
};

PointField scalar_field(std::string name, const std::vector<double>& values);
PointField vector_field(std::string name, const std::vector<Vec3>& values);

// Legacy ASCII 3.0 UNSTRUCTURED_GRID with tetrahedral cells (type 10).
void write_vtk(const mesh::TetMesh& mesh, const std::vector<PointField>& fields, const std::string& path);

// Surface output: triangles (type 5) or quadratic triangles (type 22, six
// nodes: three corners then edge nodes 01, 12, 20).
void write_surface_vtk(const std::vector<Vec3>& points, const std::vector<std::vector<int>>& cells, int cell_type,
                       const std::vector<PointField>& fields, const std::string& path);

}  // namespace cso::vtk
