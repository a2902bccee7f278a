#pragma once

// Piecewise-linear finite elements for the 2D eddy-current problem
//   sigma d/dt a + curl(nu curl a) = chi i_M,   a = a_z(x, y) e_z,
// on a triangle mesh of depth l_z. Produces M_sigma, K_nu and the winding
// matrix X of stranded conductors, and gauges the problem by a = 0 on the
// outer boundary.

#include "mona/circuit.hpp"

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace mona {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct TriMesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<int> boundary_vertices;         // sorted, unique
  double depth = 1.0;                         // l_z [m]

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  // Signed area; positive for counter-clockwise triangles.
  double signed_area(int t) const;

  // Throws InputError on out-of-range indices, non-positive areas, an empty
  // boundary set or a non-positive depth.
  void validate() const;
};

// Vertices on edges that belong to exactly one triangle.
std::vector<int> detect_boundary(const TriMesh& mesh);

// Tensor-product grid with the given (strictly increasing) grid lines, each
// cell split into two triangles along the same diagonal. Boundary = outer rim.
TriMesh rectilinear_mesh(std::span<const double> xs, std::span<const double> ys, double depth = 1.0);

// Uniform n x n cells over [x0, x1] x [y0, y1].
TriMesh structured_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny, double depth = 1.0);

struct MaterialMap {
  std::vector<double> reluctivity;   // nu per triangle [m/H]
  std::vector<double> conductivity;  // sigma per triangle [S/m]
};

MaterialMap uniform_materials(const TriMesh& mesh, double reluctivity, double conductivity);

struct Winding {
  std::vector<int> triangles;
  std::vector<int> orientation;  // +1 go side, -1 return side, per triangle
  double turns = 1.0;
  double area = 0.0;  // summed triangle area [m^2]
};

struct WindingSpec {
  std::vector<Winding> windings;

  int count() const { return static_cast<int>(windings.size()); }
};

// Area is taken as the sum of the listed triangle areas.
Winding make_winding(const TriMesh& mesh, std::vector<int> triangles, std::vector<int> orientation, double turns);

// K_ij = sum_T nu_T l_z |T| grad(lambda_i) . grad(lambda_j), all vertices.
SparseMatrix assemble_stiffness(const TriMesh& mesh, const MaterialMap& materials);

// Consistent P1 mass: sigma_T l_z |T| / 12 [[2,1,1],[1,2,1],[1,1,2]] per triangle.
SparseMatrix assemble_mass(const TriMesh& mesh, const MaterialMap& materials);

// X_ik = sum_{T in winding k} s_T (N_k / A_k) l_z |T| / 3 for each vertex i of T.
SparseMatrix assemble_winding(const TriMesh& mesh, const MaterialMap& materials, const WindingSpec& windings);

// sum_T l_z * integral_T f lambda_i, degree-5 quadrature.
Vector assemble_load(const TriMesh& mesh, const std::function<double(double, double)>& f);

struct FieldModel {
  TriMesh mesh;
  MaterialMap materials;
  WindingSpec windings;

  std::vector<int> dof_of_vertex;  // -1 on gauged (boundary) vertices
  std::vector<int> vertex_of_dof;

  SparseMatrix mass;       // M_sigma on dofs
  SparseMatrix stiffness;  // K_nu on dofs, positive definite
  SparseMatrix winding;    // X, dofs x windings

  int dofs() const { return static_cast<int>(vertex_of_dof.size()); }
  int winding_count() const { return static_cast<int>(winding.cols()); }

  // Scatter dof values back to all vertices (zero on the boundary).
  Vector to_vertices(const Vector& a) const;
};

struct UngaugedMatrices {
  SparseMatrix stiffness;
  SparseMatrix mass;
  SparseMatrix winding;
};

// Eliminates the rows/columns of boundary vertices (a = 0 there) and checks
// that the reduced stiffness factorizes as positive definite.
FieldModel apply_gauge(TriMesh mesh, MaterialMap materials, WindingSpec windings, const UngaugedMatrices& full);

// Validate, assemble and gauge in one go.
FieldModel build_field_model(TriMesh mesh, MaterialMap materials, WindingSpec windings);

// K a evaluated triangle by triangle from vertex differences, which avoids
// the cancellation of the assembled row sum. `magnitude`, when given,
// receives the summed absolute element contributions per dof.
Vector apply_stiffness(const FieldModel& field, const Vector& a, Vector* magnitude = nullptr);

// a^T K a / 2 and a'^T M a' summed triangle by triangle from non-negative
// contributions, so both are accurate to a few ulps of the result.
double magnetic_energy(const FieldModel& field, const Vector& a);
double eddy_power(const FieldModel& field, const Vector& a_dot);

// Built-in transformer cross-section: a rectangular core frame with one
// window; both windings sit around the left leg with the go side inside the
// window and the return side outside the core. Coordinates in metres.
struct TransformerParams {
  double core_width = 0.08;
  double core_height = 0.08;
  double window_width = 0.04;
  double window_height = 0.04;
  double coil_width = 0.008;   // per side, each winding
  double coil_height = 0.03;
  double coil_gap = 0.002;     // between core and coils and between coils
  double air_margin = 0.04;    // core to outer boundary
  double depth = 0.05;
  double turns_primary = 400.0;
  double turns_secondary = 50.0;
  double relative_permeability = 1000.0;
  double core_conductivity = 1e6;
  double mesh_size = 0.005;
};

struct TransformerGeometry {
  TriMesh mesh;
  MaterialMap materials;
  WindingSpec windings;  // 0 = primary, 1 = secondary

  // Nominal rectangle area of each winding (go + return).
  std::array<double, 2> nominal_area{};
};

inline constexpr double kVacuumPermeability = 1.25663706212e-6;

TransformerGeometry generate_transformer_mesh(const TransformerParams& params);

}  // namespace mona
