#include "mona/field.hpp"

#include "mona/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace mona {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

struct Gradients {
  double area;
  std::array<double, 3> gx;
  std::array<double, 3> gy;
};

Gradients p1_gradients(const TriMesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point& p0 = mesh.vertices[tri[0]];
  const Point& p1 = mesh.vertices[tri[1]];
  const Point& p2 = mesh.vertices[tri[2]];
  const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  if (!(det > 0.0)) throw InputError("degenerate or clockwise triangle " + std::to_string(t));
  const double inv = 1.0 / det;
  return {0.5 * det,
          {(p1.y - p2.y) * inv, (p2.y - p0.y) * inv, (p0.y - p1.y) * inv},
          {(p2.x - p1.x) * inv, (p0.x - p2.x) * inv, (p1.x - p0.x) * inv}};
}

SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols, const Triplets& triplets) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

void check_materials(const TriMesh& mesh, const MaterialMap& materials) {
  if (static_cast<int>(materials.reluctivity.size()) != mesh.triangle_count() ||
      static_cast<int>(materials.conductivity.size()) != mesh.triangle_count())
    throw InputError("material map does not match the triangle count");
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!(materials.reluctivity[t] > 0.0)) throw InputError("non-positive reluctivity on triangle " + std::to_string(t));
    if (!(materials.conductivity[t] >= 0.0)) throw InputError("negative conductivity on triangle " + std::to_string(t));
  }
}

// Degree-5 rule on the reference triangle: barycentric points and weights
// (weights sum to one).
struct QuadPoint {
  double l0, l1, l2, w;
};

constexpr double kA1 = 0.059715871789769820, kB1 = 0.470142064105115090, kW1 = 0.132394152788506181;
constexpr double kA2 = 0.797426985353087322, kB2 = 0.101286507323456339, kW2 = 0.125939180544827153;

constexpr std::array<QuadPoint, 7> kDegree5 = {{
    {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225},
    {kA1, kB1, kB1, kW1},
    {kB1, kA1, kB1, kW1},
    {kB1, kB1, kA1, kW1},
    {kA2, kB2, kB2, kW2},
    {kB2, kA2, kB2, kW2},
    {kB2, kB2, kA2, kW2},
}};

}  // namespace

double TriMesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  const Point& p0 = vertices[tri[0]];
  const Point& p1 = vertices[tri[1]];
  const Point& p2 = vertices[tri[2]];
  return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

void TriMesh::validate() const {
  if (!(depth > 0.0)) throw InputError("mesh depth must be positive");
  if (triangles.empty()) throw InputError("mesh has no triangles");
  for (int t = 0; t < triangle_count(); ++t) {
    for (int v : triangles[t])
      if (v < 0 || v >= vertex_count())
        throw InputError("triangle " + std::to_string(t) + " references vertex " + std::to_string(v));
    if (!(signed_area(t) > 0.0)) throw InputError("triangle " + std::to_string(t) + " has non-positive area");
  }
  if (boundary_vertices.empty()) throw InputError("mesh has no boundary vertices");
  for (int v : boundary_vertices)
    if (v < 0 || v >= vertex_count()) throw InputError("boundary vertex " + std::to_string(v) + " out of range");
}

std::vector<int> detect_boundary(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tri : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  std::vector<int> boundary;
  for (const auto& [edge, count] : edge_count)
    if (count == 1) {
      boundary.push_back(edge.first);
      boundary.push_back(edge.second);
    }
  std::sort(boundary.begin(), boundary.end());
  boundary.erase(std::unique(boundary.begin(), boundary.end()), boundary.end());
  return boundary;
}

TriMesh rectilinear_mesh(std::span<const double> xs, std::span<const double> ys, double depth) {
  if (xs.size() < 2 || ys.size() < 2) throw InputError("rectilinear mesh needs at least two grid lines per axis");
  if (!std::is_sorted(xs.begin(), xs.end(), std::less_equal<>()) ||
      !std::is_sorted(ys.begin(), ys.end(), std::less_equal<>()))
    throw InputError("grid lines must be strictly increasing");
  if (std::adjacent_find(xs.begin(), xs.end()) != xs.end() || std::adjacent_find(ys.begin(), ys.end()) != ys.end())
    throw InputError("grid lines must be strictly increasing");

  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());
  TriMesh mesh;
  mesh.depth = depth;
  mesh.vertices.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) mesh.vertices.push_back({xs[i], ys[j]});

  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) mesh.boundary_vertices.push_back(id(i, j));
  return mesh;
}

TriMesh structured_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny, double depth) {
  if (nx < 1 || ny < 1) throw InputError("structured mesh needs at least one cell per direction");
  std::vector<double> xs(nx + 1), ys(ny + 1);
  for (int i = 0; i <= nx; ++i) xs[i] = x0 + (x1 - x0) * i / nx;
  for (int j = 0; j <= ny; ++j) ys[j] = y0 + (y1 - y0) * j / ny;
  return rectilinear_mesh(xs, ys, depth);
}

MaterialMap uniform_materials(const TriMesh& mesh, double reluctivity, double conductivity) {
  return {std::vector<double>(mesh.triangles.size(), reluctivity),
          std::vector<double>(mesh.triangles.size(), conductivity)};
}

Winding make_winding(const TriMesh& mesh, std::vector<int> triangles, std::vector<int> orientation, double turns) {
  Winding w;
  w.area = 0.0;
  for (int t : triangles) {
    if (t < 0 || t >= mesh.triangle_count()) throw InputError("winding references triangle " + std::to_string(t));
    w.area += mesh.signed_area(t);
  }
  w.triangles = std::move(triangles);
  w.orientation = std::move(orientation);
  w.turns = turns;
  return w;
}

SparseMatrix assemble_stiffness(const TriMesh& mesh, const MaterialMap& materials) {
  check_materials(mesh, materials);
  Triplets triplets;
  triplets.reserve(9 * mesh.triangles.size());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto g = p1_gradients(mesh, t);
    const double scale = materials.reluctivity[t] * mesh.depth * g.area;
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        triplets.emplace_back(tri[a], tri[b], scale * (g.gx[a] * g.gx[b] + g.gy[a] * g.gy[b]));
  }
  return from_triplets(mesh.vertex_count(), mesh.vertex_count(), triplets);
}

SparseMatrix assemble_mass(const TriMesh& mesh, const MaterialMap& materials) {
  check_materials(mesh, materials);
  Triplets triplets;
  triplets.reserve(9 * mesh.triangles.size());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double area = mesh.signed_area(t);
    if (!(area > 0.0)) throw InputError("degenerate or clockwise triangle " + std::to_string(t));
    const double sigma = materials.conductivity[t];
    if (sigma == 0.0) continue;
    const double scale = sigma * mesh.depth * area / 12.0;
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) triplets.emplace_back(tri[a], tri[b], a == b ? 2.0 * scale : scale);
  }
  return from_triplets(mesh.vertex_count(), mesh.vertex_count(), triplets);
}

SparseMatrix assemble_winding(const TriMesh& mesh, const MaterialMap& materials, const WindingSpec& windings) {
  check_materials(mesh, materials);
  Triplets triplets;
  for (int k = 0; k < windings.count(); ++k) {
    const Winding& w = windings.windings[k];
    if (w.triangles.empty() || !(w.area > 0.0))
      throw InputError("winding " + std::to_string(k + 1) + " has an empty region");
    if (w.orientation.size() != w.triangles.size())
      throw InputError("winding " + std::to_string(k + 1) + ": orientation list does not match its triangles");
    const double density = w.turns / w.area;
    for (std::size_t n = 0; n < w.triangles.size(); ++n) {
      const int t = w.triangles[n];
      if (t < 0 || t >= mesh.triangle_count())
        throw InputError("winding " + std::to_string(k + 1) + " references triangle " + std::to_string(t));
      if (materials.conductivity[t] > 0.0)
        throw InputError("winding " + std::to_string(k + 1) + " overlaps conducting triangle " + std::to_string(t));
      const int s = w.orientation[n];
      if (s != 1 && s != -1) throw InputError("winding orientation must be +1 or -1");
      const double area = mesh.signed_area(t);
      if (!(area > 0.0)) throw InputError("degenerate or clockwise triangle " + std::to_string(t));
      const double value = s * density * mesh.depth * area / 3.0;
      for (int v : mesh.triangles[t]) triplets.emplace_back(v, k, value);
    }
  }
  return from_triplets(mesh.vertex_count(), windings.count(), triplets);
}

Vector assemble_load(const TriMesh& mesh, const std::function<double(double, double)>& f) {
  Vector load = Vector::Zero(mesh.vertex_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point& p0 = mesh.vertices[tri[0]];
    const Point& p1 = mesh.vertices[tri[1]];
    const Point& p2 = mesh.vertices[tri[2]];
    const double area = mesh.signed_area(t);
    for (const auto& q : kDegree5) {
      const double x = q.l0 * p0.x + q.l1 * p1.x + q.l2 * p2.x;
      const double y = q.l0 * p0.y + q.l1 * p1.y + q.l2 * p2.y;
      const double fw = f(x, y) * q.w * area * mesh.depth;
      load[tri[0]] += fw * q.l0;
      load[tri[1]] += fw * q.l1;
      load[tri[2]] += fw * q.l2;
    }
  }
  return load;
}

Vector FieldModel::to_vertices(const Vector& a) const {
  Vector full = Vector::Zero(mesh.vertex_count());
  for (int d = 0; d < dofs(); ++d) full[vertex_of_dof[d]] = a[d];
  return full;
}

FieldModel apply_gauge(TriMesh mesh, MaterialMap materials, WindingSpec windings, const UngaugedMatrices& full) {
  if (mesh.boundary_vertices.empty()) throw InputError("gauge needs a non-empty boundary set (stiffness is singular)");

  FieldModel model;
  model.dof_of_vertex.assign(mesh.vertices.size(), 0);
  for (int v : mesh.boundary_vertices) model.dof_of_vertex.at(v) = -1;
  for (int v = 0; v < mesh.vertex_count(); ++v)
    if (model.dof_of_vertex[v] >= 0) {
      model.dof_of_vertex[v] = static_cast<int>(model.vertex_of_dof.size());
      model.vertex_of_dof.push_back(v);
    }

  const int n = model.dofs();
  auto restrict_square = [&](const SparseMatrix& m) {
    Triplets triplets;
    for (int col = 0; col < m.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
        const int r = model.dof_of_vertex[it.row()];
        const int c = model.dof_of_vertex[it.col()];
        if (r >= 0 && c >= 0) triplets.emplace_back(r, c, it.value());
      }
    return from_triplets(n, n, triplets);
  };

  model.stiffness = restrict_square(full.stiffness);
  model.mass = restrict_square(full.mass);
  {
    Triplets triplets;
    for (int col = 0; col < full.winding.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(full.winding, col); it; ++it) {
        const int r = model.dof_of_vertex[it.row()];
        if (r >= 0) triplets.emplace_back(r, it.col(), it.value());
      }
    model.winding = from_triplets(n, full.winding.cols(), triplets);
  }

  if (n > 0) {
    Eigen::SimplicialLLT<SparseMatrix> llt(model.stiffness);
    if (llt.info() != Eigen::Success)
      throw SolverError("gauge failure: reduced stiffness matrix is not positive definite");
  }

  model.mesh = std::move(mesh);
  model.materials = std::move(materials);
  model.windings = std::move(windings);
  return model;
}

FieldModel build_field_model(TriMesh mesh, MaterialMap materials, WindingSpec windings) {
  mesh.validate();
  UngaugedMatrices full{assemble_stiffness(mesh, materials), assemble_mass(mesh, materials),
                        assemble_winding(mesh, materials, windings)};
  return apply_gauge(std::move(mesh), std::move(materials), std::move(windings), full);
}

namespace {

// Flux density components (curl of a e_z up to a rotation) from differences.
std::pair<double, double> element_gradient(const Gradients& g, const Vector& v, const std::array<int, 3>& tri) {
  const double d1 = v[tri[1]] - v[tri[0]];
  const double d2 = v[tri[2]] - v[tri[0]];
  return {d1 * g.gx[1] + d2 * g.gx[2], d1 * g.gy[1] + d2 * g.gy[2]};
}

}  // namespace

Vector apply_stiffness(const FieldModel& field, const Vector& a, Vector* magnitude) {
  const Vector v = field.to_vertices(a);
  const TriMesh& mesh = field.mesh;
  Vector out = Vector::Zero(mesh.vertex_count());
  Vector mag = Vector::Zero(magnitude ? mesh.vertex_count() : 0);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto g = p1_gradients(mesh, t);
    const auto& tri = mesh.triangles[t];
    const auto [bx, by] = element_gradient(g, v, tri);
    const double scale = field.materials.reluctivity[t] * mesh.depth * g.area;
    for (int k = 0; k < 3; ++k) {
      const double c = scale * (bx * g.gx[k] + by * g.gy[k]);
      out[tri[k]] += c;
      if (magnitude) mag[tri[k]] += std::abs(c);
    }
  }
  Vector result(field.dofs());
  if (magnitude) magnitude->resize(field.dofs());
  for (int d = 0; d < field.dofs(); ++d) {
    result[d] = out[field.vertex_of_dof[d]];
    if (magnitude) (*magnitude)[d] = mag[field.vertex_of_dof[d]];
  }
  return result;
}

double magnetic_energy(const FieldModel& field, const Vector& a) {
  const Vector v = field.to_vertices(a);
  const TriMesh& mesh = field.mesh;
  double sum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto g = p1_gradients(mesh, t);
    const auto [bx, by] = element_gradient(g, v, mesh.triangles[t]);
    sum += field.materials.reluctivity[t] * g.area * (bx * bx + by * by);
  }
  return 0.5 * mesh.depth * sum;
}

double eddy_power(const FieldModel& field, const Vector& a_dot) {
  const Vector v = field.to_vertices(a_dot);
  const TriMesh& mesh = field.mesh;
  double sum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double sigma = field.materials.conductivity[t];
    if (sigma == 0.0) continue;
    const auto& tri = mesh.triangles[t];
    const double v0 = v[tri[0]], v1 = v[tri[1]], v2 = v[tri[2]];
    const double total = v0 + v1 + v2;
    sum += sigma * mesh.signed_area(t) * (v0 * v0 + v1 * v1 + v2 * v2 + total * total);
  }
  return mesh.depth * sum / 12.0;
}

namespace {

struct Rect {
  double x0, x1, y0, y1;

  bool contains(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
  bool overlaps(const Rect& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
};

// Sorted breakpoints, each interval split into ceil(length / h) equal pieces.
std::vector<double> grid_lines(std::vector<double> breaks, double h) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> lines{breaks.front()};
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k], b = breaks[k + 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    for (int p = 1; p < pieces; ++p) lines.push_back(a + (b - a) * p / pieces);
    lines.push_back(b);
  }
  return lines;
}

}  // namespace

TransformerGeometry generate_transformer_mesh(const TransformerParams& p) {
  for (double v : {p.core_width, p.core_height, p.window_width, p.window_height, p.coil_width, p.coil_height,
                   p.air_margin, p.depth, p.turns_primary, p.turns_secondary, p.relative_permeability, p.mesh_size})
    if (!(v > 0.0)) throw InputError("transformer parameters must be positive");
  if (p.coil_gap < 0.0 || p.core_conductivity < 0.0) throw InputError("transformer parameters must be non-negative");
  if (p.window_width >= p.core_width || p.window_height >= p.core_height)
    throw InputError("window must be smaller than the core");
  if (2.0 * (p.coil_width + p.coil_gap) > p.window_width || p.coil_height > p.window_height)
    throw InputError("windings do not fit into the core window");
  if (2.0 * (p.coil_width + p.coil_gap) >= p.air_margin)
    throw InputError("return conductors do not fit between the core and the outer boundary");

  const double cx = 0.5 * p.core_width, cy = 0.5 * p.core_height;
  const double wx = 0.5 * p.window_width, wy = 0.5 * p.window_height;
  const double hy = 0.5 * p.coil_height;
  const double bx = cx + p.air_margin, by = cy + p.air_margin;

  const Rect core{-cx, cx, -cy, cy};
  const Rect window{-wx, wx, -wy, wy};
  // Go sides inside the window next to the left leg, returns mirrored outside it.
  const Rect pri_go{-wx + p.coil_gap, -wx + p.coil_gap + p.coil_width, -hy, hy};
  const Rect sec_go{pri_go.x1 + p.coil_gap, pri_go.x1 + p.coil_gap + p.coil_width, -hy, hy};
  const Rect pri_ret{-cx - p.coil_gap - p.coil_width, -cx - p.coil_gap, -hy, hy};
  const Rect sec_ret{pri_ret.x0 - p.coil_gap - p.coil_width, pri_ret.x0 - p.coil_gap, -hy, hy};
  const Rect coils[] = {pri_go, pri_ret, sec_go, sec_ret};
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      if (coils[a].overlaps(coils[b])) throw InputError("transformer windings overlap");

  std::vector<double> xb{-bx, bx, -cx, cx, -wx, wx}, yb{-by, by, -cy, cy, -wy, wy, -hy, hy};
  for (const auto& r : coils) {
    xb.push_back(r.x0);
    xb.push_back(r.x1);
  }
  const auto xs = grid_lines(xb, p.mesh_size);
  const auto ys = grid_lines(yb, p.mesh_size);

  TransformerGeometry geo;
  geo.mesh = rectilinear_mesh(xs, ys, p.depth);
  const int nt = geo.mesh.triangle_count();
  const double nu_air = 1.0 / kVacuumPermeability;
  geo.materials = uniform_materials(geo.mesh, nu_air, 0.0);

  std::vector<int> pri_tris, pri_sign, sec_tris, sec_sign;
  for (int t = 0; t < nt; ++t) {
    const auto& tri = geo.mesh.triangles[t];
    double x = 0.0, y = 0.0;
    for (int v : tri) {
      x += geo.mesh.vertices[v].x / 3.0;
      y += geo.mesh.vertices[v].y / 3.0;
    }
    if (core.contains(x, y) && !window.contains(x, y)) {
      geo.materials.reluctivity[t] = nu_air / p.relative_permeability;
      geo.materials.conductivity[t] = p.core_conductivity;
    } else if (pri_go.contains(x, y) || pri_ret.contains(x, y)) {
      pri_tris.push_back(t);
      pri_sign.push_back(pri_go.contains(x, y) ? 1 : -1);
    } else if (sec_go.contains(x, y) || sec_ret.contains(x, y)) {
      sec_tris.push_back(t);
      sec_sign.push_back(sec_go.contains(x, y) ? 1 : -1);
    }
  }
  if (pri_tris.size() < 2 || sec_tris.size() < 2)
    throw InputError("mesh size too coarse to resolve the windings");

  geo.windings.windings.push_back(make_winding(geo.mesh, std::move(pri_tris), std::move(pri_sign), p.turns_primary));
  geo.windings.windings.push_back(
      make_winding(geo.mesh, std::move(sec_tris), std::move(sec_sign), p.turns_secondary));
  geo.nominal_area = {pri_go.area() + pri_ret.area(), sec_go.area() + sec_ret.area()};
  return geo;
}

}  // namespace mona
