#pragma once

// Fixtures and independent dense oracles shared by the test suites. The
// oracles are written from the element list and the model equations, not
// from the library's sparse assembly.

#include "mona/coupled.hpp"
#include "mona/field.hpp"
#include "mona/integrator.hpp"
#include "mona/scenario.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace mona::test {

using Dense = Eigen::MatrixXd;

inline NetlistElement element(ElementKind kind, std::string name, int plus, int minus, double value = 0.0) {
  NetlistElement e;
  e.kind = kind;
  e.name = std::move(name);
  e.nodes = {plus, minus};
  e.value = value;
  return e;
}

inline NetlistElement source(ElementKind kind, std::string name, int plus, int minus, Waveform w) {
  NetlistElement e = element(kind, std::move(name), plus, minus);
  e.waveform = w;
  return e;
}

inline NetlistElement diode(std::string name, int plus, int minus, DiodeParams p = {}) {
  NetlistElement e = element(ElementKind::Diode, std::move(name), plus, minus);
  e.diode = p;
  return e;
}

inline NetlistElement device(std::string name, std::vector<int> nodes) {
  NetlistElement e;
  e.kind = ElementKind::Device;
  e.name = std::move(name);
  e.nodes = std::move(nodes);
  e.field_ref = "builtin";
  return e;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline double relative_error(const Vector& a, const Vector& b) {
  const double s = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / s;
}

// Dense incidence of the branches of one kind; a device contributes one
// column per winding.
inline Dense dense_incidence(const std::vector<NetlistElement>& elements, int n_nodes, ElementKind kind) {
  std::vector<std::pair<int, int>> columns;
  for (const auto& e : elements)
    if (e.kind == kind)
      for (std::size_t w = 0; w + 1 < e.nodes.size(); w += 2) columns.emplace_back(e.nodes[w], e.nodes[w + 1]);
  Dense a = Dense::Zero(n_nodes, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k].first > 0) a(columns[k].first - 1, static_cast<Eigen::Index>(k)) += 1.0;
    if (columns[k].second > 0) a(columns[k].second - 1, static_cast<Eigen::Index>(k)) -= 1.0;
  }
  return a;
}

inline Vector parameters(const std::vector<NetlistElement>& elements, ElementKind kind) {
  std::vector<double> v;
  for (const auto& e : elements)
    if (e.kind == kind) v.push_back(e.value);
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline double diode_law(const DiodeParams& p, double v) {
  return p.saturation_current * (std::exp(v / p.thermal_voltage) - 1.0) + v / p.parallel_resistance;
}

// The five residual blocks and the energy evaluated with dense matrices.
struct DenseSystem {
  int n = 0;
  Dense AR, AD, AC, AL, AV, AI, AM;
  Vector G, C, L;
  std::vector<DiodeParams> diodes;
  Dense M, K, X;
  std::vector<Waveform> vsrc, isrc;

  Eigen::Index size() const { return n + AC.cols() + AV.cols() + AM.cols() + K.rows(); }

  struct Parts {
    Vector psi, qc, qv, qm, a;
  };

  Parts split(const Vector& y) const {
    Eigen::Index at = 0;
    auto take = [&](Eigen::Index len) {
      Vector v = y.segment(at, len);
      at += len;
      return v;
    };
    Parts p;
    p.psi = take(n);
    p.qc = take(AC.cols());
    p.qv = take(AV.cols());
    p.qm = take(AM.cols());
    p.a = take(K.rows());
    return p;
  }

  Vector sources_v(double t) const {
    Vector v(static_cast<Eigen::Index>(vsrc.size()));
    for (std::size_t k = 0; k < vsrc.size(); ++k) v[static_cast<Eigen::Index>(k)] = vsrc[k](t);
    return v;
  }

  Vector sources_i(double t) const {
    Vector v(static_cast<Eigen::Index>(isrc.size()));
    for (std::size_t k = 0; k < isrc.size(); ++k) v[static_cast<Eigen::Index>(k)] = isrc[k](t);
    return v;
  }

  Vector diode_currents(const Vector& v) const {
    Vector i(v.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) i[k] = diode_law(diodes[static_cast<std::size_t>(k)], v[k]);
    return i;
  }

  Vector residual(const Vector& y, const Vector& ydot, double t) const {
    const Parts s = split(y), d = split(ydot);
    Vector r(size());
    Eigen::Index at = 0;
    auto put = [&](const Vector& b) {
      r.segment(at, b.size()) = b;
      at += b.size();
    };
    Vector kcl = AR * G.cwiseProduct(AR.transpose() * d.psi) + AC * d.qc + AV * d.qv + AM * d.qm +
                 AL * (AL.transpose() * s.psi).cwiseQuotient(L) + AI * sources_i(t);
    if (AD.cols() > 0) kcl += AD * diode_currents(AD.transpose() * d.psi);
    put(kcl);
    put(-AC.transpose() * d.psi + s.qc.cwiseQuotient(C));
    put(-AV.transpose() * d.psi + sources_v(t));
    put(-AM.transpose() * d.psi + X.transpose() * d.a);
    put(M * d.a + K * s.a - X * d.qm);
    return r;
  }

  double energy(const Vector& y) const {
    const Parts s = split(y);
    const Vector flux = AL.transpose() * s.psi;
    return 0.5 * (flux.cwiseProduct(flux).cwiseQuotient(L).sum() + s.qc.cwiseProduct(s.qc).cwiseQuotient(C).sum() +
                  s.a.dot(K * s.a));
  }
};

// Dense P1 matrices assembled triangle by triangle from barycentric
// gradients, restricted to the dofs in `vertex_of_dof`.
struct DenseField {
  Dense M, K, X;
};

inline DenseField dense_field(const TriMesh& mesh, const MaterialMap& mat, const WindingSpec& windings,
                              const std::vector<int>& vertex_of_dof) {
  const int nv = mesh.vertex_count();
  Dense m = Dense::Zero(nv, nv), k = Dense::Zero(nv, nv), x = Dense::Zero(nv, windings.count());
  std::vector<double> area(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    Eigen::Matrix3d p;
    for (int i = 0; i < 3; ++i) p.row(i) << 1.0, mesh.vertices[tri[i]].x, mesh.vertices[tri[i]].y;
    const Eigen::Matrix3d c = p.inverse();
    area[t] = 0.5 * p.determinant();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        k(tri[i], tri[j]) += mat.reluctivity[t] * mesh.depth * area[t] * (c(1, i) * c(1, j) + c(2, i) * c(2, j));
        m(tri[i], tri[j]) += mat.conductivity[t] * mesh.depth * area[t] * (i == j ? 2.0 : 1.0) / 12.0;
      }
  }
  for (int w = 0; w < windings.count(); ++w) {
    const Winding& wd = windings.windings[w];
    double total = 0.0;
    for (int t : wd.triangles) total += area[t];
    for (std::size_t n = 0; n < wd.triangles.size(); ++n) {
      const int t = wd.triangles[n];
      const double chi = wd.orientation[n] * wd.turns / total;
      for (int v : mesh.triangles[t]) x(v, w) += chi * mesh.depth * area[t] / 3.0;
    }
  }
  const auto nd = static_cast<Eigen::Index>(vertex_of_dof.size());
  DenseField f{Dense(nd, nd), Dense(nd, nd), Dense(nd, windings.count())};
  for (Eigen::Index i = 0; i < nd; ++i) {
    f.X.row(i) = x.row(vertex_of_dof[i]);
    for (Eigen::Index j = 0; j < nd; ++j) {
      f.M(i, j) = m(vertex_of_dof[i], vertex_of_dof[j]);
      f.K(i, j) = k(vertex_of_dof[i], vertex_of_dof[j]);
    }
  }
  return f;
}

inline DenseSystem dense_system(const std::vector<NetlistElement>& elements, int n_nodes, const FieldModel& field) {
  DenseSystem d;
  d.n = n_nodes;
  d.AR = dense_incidence(elements, n_nodes, ElementKind::Resistor);
  d.AD = dense_incidence(elements, n_nodes, ElementKind::Diode);
  d.AC = dense_incidence(elements, n_nodes, ElementKind::Capacitor);
  d.AL = dense_incidence(elements, n_nodes, ElementKind::Inductor);
  d.AV = dense_incidence(elements, n_nodes, ElementKind::VoltageSource);
  d.AI = dense_incidence(elements, n_nodes, ElementKind::CurrentSource);
  d.AM = dense_incidence(elements, n_nodes, ElementKind::Device);
  d.G = parameters(elements, ElementKind::Resistor);
  d.C = parameters(elements, ElementKind::Capacitor);
  d.L = parameters(elements, ElementKind::Inductor);
  for (const auto& e : elements) {
    if (e.kind == ElementKind::Diode) d.diodes.push_back(e.diode);
    if (e.kind == ElementKind::VoltageSource) d.vsrc.push_back(e.waveform);
    if (e.kind == ElementKind::CurrentSource) d.isrc.push_back(e.waveform);
  }
  if (field.dofs() > 0 || field.winding_count() > 0) {
    DenseField f = dense_field(field.mesh, field.materials, field.windings, field.vertex_of_dof);
    d.M = std::move(f.M);
    d.K = std::move(f.K);
    d.X = std::move(f.X);
  } else {
    d.M = d.K = Dense(0, 0);
    d.X = Dense(0, d.AM.cols());
  }
  return d;
}

inline FieldSource coarse_transformer(double mesh_size = 0.01) {
  FieldSource fs;
  fs.builtin = rectifier_transformer();
  fs.builtin.mesh_size = mesh_size;
  return fs;
}

inline CoupledSystem system_from(const Circuit& c, const FieldSource& fs = coarse_transformer()) {
  return build_system(c, fs);
}

// Central difference of f along every coordinate, as a dense matrix.
template <class F>
Dense finite_difference(const F& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Dense J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x[j]));
    xp[j] += step;
    xm[j] -= step;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return J;
}

// Linear transformer benchmark: sinusoidal source through a series resistor
// into the primary; the secondary feeds R, L and C loads.
inline const char* kLinearCoupledNetlist = R"(V src 1 0 SIN(160 60)
R rs 1 5 1
M xfmr 5 0 2 0 FIELD=builtin
R load 2 3 10
L l1 3 0 10m
C c1 2 0 100u
)";

// Series RLC driven by a sinusoid.
inline const char* kRlcNetlist = R"(V src 1 0 SIN(10 50)
R r1 1 2 10
L l1 2 3 100m
C c1 3 0 100u
)";

}  // namespace mona::test
