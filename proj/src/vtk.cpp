#include "cso/vtk.hpp"

#include <fstream>

#include "cso/error.hpp"

namespace cso::vtk {

namespace {

void write_header(std::ofstream& out, const std::vector<Vec3>& points) {
  out << "# vtk DataFile Version 3.0\n"
      << "cso output\n"
      << "ASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << points.size() << " double\n";
  out.precision(17);
  for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

void write_fields(std::ofstream& out, std::size_t npoints, const std::vector<PointField>& fields) {
  if (fields.empty()) return;
  out << "POINT_DATA " << npoints << '\n';
  for (const auto& f : fields) {
    if (f.data.size() != npoints * static_cast<std::size_t>(f.components)) {
      throw Error("field '" + f.name + "' has the wrong length for VTK output");
    }
    if (f.components == 1) {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : f.data) out << v << '\n';
    } else {
      out << "VECTORS " << f.name << " double\n";
      for (std::size_t i = 0; i < npoints; ++i) {
        out << f.data[3 * i] << ' ' << f.data[3 * i + 1] << ' ' << f.data[3 * i + 2] << '\n';
      }
    }
  }
}

}  // namespace

PointField scalar_field(std::string name, const std::vector<double>& values) {
  return {std::move(name), 1, values};
}

PointField vector_field(std::string name, const std::vector<Vec3>& values) {
  PointField f{std::move(name), 3, {}};
  f.data.reserve(3 * values.size());
  for (const auto& v : values) f.data.insert(f.data.end(), {v.x(), v.y(), v.z()});
  return f;
}

void write_vtk(const mesh::TetMesh& mesh, const std::vector<PointField>& fields, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_header(out, mesh.vertices());
  const auto nt = static_cast<std::size_t>(mesh.num_tets());
  out << "CELLS " << nt << ' ' << 5 * nt << '\n';
  for (const auto& t : mesh.tets()) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << nt << '\n';
  for (std::size_t i = 0; i < nt; ++i) out << "10\n";
  write_fields(out, mesh.vertices().size(), fields);
}

void write_surface_vtk(const std::vector<Vec3>& points, const std::vector<std::vector<int>>& cells, int cell_type,
                       const std::vector<PointField>& fields, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_header(out, points);
  std::size_t total = 0;
  for (const auto& c : cells) total += c.size() + 1;
  out << "CELLS " << cells.size() << ' ' << total << '\n';
  for (const auto& c : cells) {
    out << c.size();
    for (int v : c) out << ' ' << v;
    out << '\n';
  }
  out << "CELL_TYPES " << cells.size() << '\n';
  for (std::size_t i = 0; i < cells.size(); ++i) out << cell_type << '\n';
  write_fields(out, points.size(), fields);
}

}  // namespace cso::vtk
