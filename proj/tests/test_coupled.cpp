#include "mona/coupled.hpp"
#include "mona/error.hpp"
#include "mona/scenario.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mona;
using namespace mona::test;

namespace {

Dense block(const SparseMatrix& m, const BlockLayout& l, Block rows, Block cols) {
  return Dense(m).block(l.start(rows), l.start(cols), l.size(rows), l.size(cols));
}

// Column-wise relative deviation of a Jacobian from its finite-difference estimate.
double jacobian_error(const Dense& exact, const Dense& fd) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < exact.cols(); ++j) {
    const double scale = std::max(exact.col(j).cwiseAbs().maxCoeff(), fd.col(j).cwiseAbs().maxCoeff());
    if (scale == 0.0) continue;
    worst = std::max(worst, (exact.col(j) - fd.col(j)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

Vector random_state(const CoupledSystem& sys, std::mt19937_64& rng, double psi_scale) {
  Vector y = random_vector(sys.size(), rng, 1e-3);
  sys.layout()(y, Block::Psi) = random_vector(sys.layout().size(Block::Psi), rng, psi_scale);
  return y;
}

}  // namespace

TEST_CASE("block layout") {
  const Circuit c = load_circuit(rectifier_netlist());
  const CoupledSystem sys = system_from(c);
  const BlockLayout& l = sys.layout();
  CHECK(l.size(Block::Psi) == 4);
  CHECK(l.size(Block::ChargeC) == 0);
  CHECK(l.size(Block::ChargeV) == 1);
  CHECK(l.size(Block::ChargeM) == 2);
  CHECK(l.size(Block::Potential) == sys.field().dofs());
  Eigen::Index at = 0;
  for (Block b : kAllBlocks) {
    CHECK(l.start(b) == at);
    at += l.size(b);
  }
  CHECK(sys.size() == at);

  const CoupledSystem circuit_only = system_from(load_circuit(kRlcNetlist));
  CHECK(circuit_only.layout().size(Block::ChargeM) == 0);
  CHECK(circuit_only.layout().size(Block::Potential) == 0);
}

TEST_CASE("assemble_coupled rejects inconsistent terminal maps") {
  const Circuit c = load_circuit(rectifier_netlist());
  const auto geo = generate_transformer_mesh(coarse_transformer().builtin);
  const FieldModel f = build_field_model(geo.mesh, geo.materials, geo.windings);
  const SourceSet s = collect_sources(c.netlist.elements);
  const std::vector<int> twice = {0, 0};
  CHECK_THROWS_AS(assemble_coupled(c.graph, f, s, twice), InputError);
  const std::vector<int> short_map = {1};
  CHECK_THROWS_AS(assemble_coupled(c.graph, f, s, short_map), InputError);
  const std::vector<int> swapped = {1, 0};
  const CoupledSystem sys = assemble_coupled(c.graph, f, s, swapped);
  CHECK(sys.size() == 7 + f.dofs());

  const Circuit no_device = load_circuit(kRlcNetlist);
  CHECK_THROWS_AS(assemble_coupled(no_device.graph, f, collect_sources(no_device.netlist.elements)), InputError);
}

TEST_CASE("zero is an equilibrium without sources") {
  Circuit c = load_circuit(rectifier_netlist());
  c.netlist.elements[0].waveform = Waveform::dc(0.0);
  const CoupledSystem sys = system_from(c);
  const Vector zero = Vector::Zero(sys.size());
  CHECK(sys.residual(zero, zero, 0.3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sys.energy(zero) == 0.0);
}

TEST_CASE("rectifier residual matches the dense oracle") {
  const Circuit c = load_circuit(rectifier_netlist());
  const CoupledSystem sys = system_from(c);
  const DenseSystem oracle = dense_system(c.netlist.elements, c.graph.n_nodes, sys.field());
  REQUIRE(oracle.size() == sys.size());
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector y = random_state(sys, rng, 1.0);
    const Vector ydot = random_state(sys, rng, 0.8);
    const double t = 0.001 * trial;
    CHECK(relative_error(sys.residual(y, ydot, t), oracle.residual(y, ydot, t)) <= 1e-12);
    CHECK(sys.energy(y) == doctest::Approx(oracle.energy(y)).epsilon(1e-12));
  }
}

TEST_CASE("Jacobians") {
  std::mt19937_64 rng(8);
  SUBCASE("constant for linear systems") {
    const CoupledSystem sys = system_from(load_circuit(kLinearCoupledNetlist));
    const auto j1 = sys.jacobians(random_state(sys, rng, 1.0), random_state(sys, rng, 1.0), 0.1);
    const auto j2 = sys.jacobians(random_state(sys, rng, 1.0), random_state(sys, rng, 1.0), 0.7);
    CHECK(Dense(j1.d_state) == Dense(j2.d_state));
    CHECK(Dense(j1.d_rate) == Dense(j2.d_rate));
  }
  SUBCASE("match central differences on the rectifier") {
    const CoupledSystem sys = system_from(load_circuit(rectifier_netlist()));
    for (int trial = 0; trial < 3; ++trial) {
      const Vector y = random_state(sys, rng, 1.0);
      const Vector ydot = random_state(sys, rng, 0.8);
      const auto j = sys.jacobians(y, ydot, 0.002);
      const Dense fd_y = finite_difference([&](const Vector& x) { return sys.residual(x, ydot, 0.002); }, y, 1e-6);
      const Dense fd_dot = finite_difference([&](const Vector& x) { return sys.residual(y, x, 0.002); }, ydot, 1e-6);
      CHECK(jacobian_error(Dense(j.d_state), fd_y) <= 1e-6);
      CHECK(jacobian_error(Dense(j.d_rate), fd_dot) <= 1e-6);
    }
  }
  SUBCASE("diode conductance at zero voltage") {
    const Circuit c = load_circuit(rectifier_netlist());
    const CoupledSystem sys = system_from(c);
    const Vector zero = Vector::Zero(sys.size());
    const auto j = sys.jacobians(zero, zero, 0.0);
    const DiodeParams p;
    const double g_eq = p.saturation_current / p.thermal_voltage + 1.0 / p.parallel_resistance;
    const Dense ad = dense_incidence(c.netlist.elements, 4, ElementKind::Diode);
    const Dense ar = dense_incidence(c.netlist.elements, 4, ElementKind::Resistor);
    const Dense expected = g_eq * ad * ad.transpose() + 0.1 * ar * ar.transpose();
    const Dense got = block(j.d_rate, sys.layout(), Block::Psi, Block::Psi);
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-15 * expected.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("combined Jacobian") {
  const CoupledSystem sys = system_from(load_circuit(rectifier_netlist()));
  std::mt19937_64 rng(4);
  const Vector y = random_state(sys, rng, 1.0);
  const Vector ydot = random_state(sys, rng, 0.5);
  const auto j = sys.jacobians(y, ydot, 0.0);
  const Dense c(sys.combined_jacobian(ydot, 400.0, 0.5));
  CHECK((c - (400.0 * Dense(j.d_rate) + 0.5 * Dense(j.d_state))).cwiseAbs().maxCoeff() <= 1e-12 * c.cwiseAbs().maxCoeff());
  CHECK(sys.combined_jacobian(ydot, 1.0, 1.0).nonZeros() == sys.combined_jacobian(Vector::Zero(sys.size()), 1.0, 1.0).nonZeros());
}

TEST_CASE("energy") {
  const CoupledSystem sys = system_from(load_circuit(kLinearCoupledNetlist));
  std::mt19937_64 rng(13);
  const Dense k(sys.field().stiffness);
  for (int trial = 0; trial < 10; ++trial) {
    Vector y = Vector::Zero(sys.size());
    sys.layout()(y, Block::Potential) = random_vector(sys.field().dofs(), rng, 1e-3);
    const Vector a = sys.layout()(y, Block::Potential);
    CHECK(sys.energy(y) == doctest::Approx(0.5 * a.dot(k * a)).epsilon(1e-12));
    const Vector z = random_state(sys, rng, 0.1);
    CHECK(sys.energy(z) >= 0.0);
    CHECK(sys.energy(2.0 * z) == doctest::Approx(4.0 * sys.energy(z)).epsilon(1e-13));
  }
}

TEST_CASE("energy gradient matches finite differences") {
  const CoupledSystem sys = system_from(load_circuit(kLinearCoupledNetlist));
  std::mt19937_64 rng(29);
  const Vector y = random_state(sys, rng, 0.1);
  const Vector g = sys.energy_gradient(y);
  Vector fd(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    Vector yp = y, ym = y;
    const double h = 1e-6 * std::max(1e-3, std::abs(y[i]));
    yp[i] += h;
    ym[i] -= h;
    fd[i] = (sys.energy(yp) - sys.energy(ym)) / (2.0 * h);
  }
  CHECK((g - fd).cwiseAbs().maxCoeff() <= 1e-6 * g.cwiseAbs().maxCoeff());
}

TEST_CASE("power breakdown on a closed-form RL decay") {
  // G psi' + psi / L = 0 on one node: psi(t) = psi0 exp(-t / (G L)).
  const Circuit c = load_circuit("R r 1 0 2\nL l 1 0 0.5\n");
  const CoupledSystem sys = system_from(c);
  const double g = 0.5, l = 0.5, psi0 = 3.0;
  for (double t : {0.0, 0.1, 0.7, 2.0}) {
    Vector y(1), ydot(1);
    y[0] = psi0 * std::exp(-t / (g * l));
    ydot[0] = -y[0] / (g * l);
    const PowerBreakdown p = sys.power_breakdown(y, ydot, t);
    CHECK(std::abs(p.residual) <= 1e-12 * p.resistive_loss);
    CHECK(p.dH_dt == doctest::Approx(-p.resistive_loss).epsilon(1e-14));
    CHECK(p.eddy_loss == 0.0);
  }
}

TEST_CASE("dissipativity without sources") {
  // Every node has a conductance to ground, so the rates are determined by the state.
  const Circuit c = load_circuit(R"(R r1 1 0 1
R r2 2 0 4
R r3 3 0 2
R r12 1 2 1
L l1 1 3 10m
L l2 2 0 20m
C c1 2 3 1m
C c2 3 0 2m
)");
  const CoupledSystem sys = system_from(c);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector y = random_state(sys, rng, 1.0);
    const auto j = sys.jacobians(y, Vector::Zero(sys.size()), 0.0);
    const Vector r0 = sys.residual(y, Vector::Zero(sys.size()), 0.0);
    const Vector ydot = Dense(j.d_rate).fullPivLu().solve(-r0);
    REQUIRE(sys.residual(y, ydot, 0.0).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, r0.cwiseAbs().maxCoeff()));
    const PowerBreakdown p = sys.power_breakdown(y, ydot, 0.0);
    CHECK(p.dH_dt <= 0.0);
    CHECK(std::abs(p.residual) <= 1e-9 * std::max(1.0, p.resistive_loss));
  }
}

TEST_CASE("resistive loss is linear in the conductance") {
  Circuit c = load_circuit(kLinearCoupledNetlist);
  const CoupledSystem sys1 = system_from(c);
  for (auto& e : c.netlist.elements)
    if (e.kind == ElementKind::Resistor) e.value *= 2.0;
  c.graph = build_incidence(c.netlist.elements, c.netlist.node_count());
  const CoupledSystem sys2 = system_from(c);
  std::mt19937_64 rng(2);
  const Vector y = random_state(sys1, rng, 1.0);
  const Vector ydot = random_state(sys1, rng, 1.0);
  CHECK(sys2.power_breakdown(y, ydot, 0.0).resistive_loss ==
        doctest::Approx(2.0 * sys1.power_breakdown(y, ydot, 0.0).resistive_loss).epsilon(1e-14));
}

TEST_CASE("compact form") {
  const CoupledSystem sys = system_from(load_circuit(rectifier_netlist()));
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector y = random_state(sys, rng, 1.0);
    const Vector ydot = random_state(sys, rng, 0.8);
    const double t = 1e-4 * trial;
    const Vector r = sys.residual(y, ydot, t);
    const Vector parts = sys.dissipation_coupling(ydot) + sys.energy_gradient(y) - sys.source_vector(t);
    CHECK(relative_error(r, parts) <= 1e-12);

    const Vector w = random_state(sys, rng, 0.8);
    const PowerBreakdown p = sys.power_breakdown(Vector::Zero(sys.size()), w, t);
    const double pairing = sys.dissipation_coupling(w).dot(w);
    CHECK(pairing >= 0.0);
    CHECK(pairing == doctest::Approx(p.resistive_loss + p.eddy_loss).epsilon(1e-10));
  }

  Circuit with_current = load_circuit(kLinearCoupledNetlist);
  with_current.netlist.elements.push_back(source(ElementKind::CurrentSource, "isrc", 3, 0, Waveform::dc(2.0)));
  with_current.graph = build_incidence(with_current.netlist.elements, with_current.netlist.node_count());
  const CoupledSystem s2 = system_from(with_current);
  const Vector f = s2.source_vector(1.0 / 240.0);
  const BlockLayout& l = s2.layout();
  CHECK(l(f, Block::ChargeV).cwiseAbs().maxCoeff() == doctest::Approx(160.0));
  CHECK(l(f, Block::Psi).cwiseAbs().maxCoeff() == 2.0);
  CHECK(l(f, Block::ChargeC).isZero(0.0));
  CHECK(l(f, Block::ChargeM).isZero(0.0));
  CHECK(l(f, Block::Potential).isZero(0.0));
}

TEST_CASE("coupling blocks of the rate Jacobian are negative transposes") {
  const CoupledSystem sys = system_from(load_circuit(kLinearCoupledNetlist));
  const Vector zero = Vector::Zero(sys.size());
  const SparseMatrix jd = sys.jacobians(zero, zero, 0.0).d_rate;
  const BlockLayout& l = sys.layout();
  for (Block b : {Block::ChargeC, Block::ChargeV, Block::ChargeM}) {
    const Dense upper = block(jd, l, Block::Psi, b);
    CHECK(upper.cwiseAbs().maxCoeff() > 0.0);
    CHECK(upper == -block(jd, l, b, Block::Psi).transpose());
  }
  CHECK(block(jd, l, Block::ChargeM, Block::Potential) == -block(jd, l, Block::Potential, Block::ChargeM).transpose());
}

TEST_CASE("rounding magnitude bounds the residual terms") {
  const CoupledSystem sys = system_from(load_circuit(rectifier_netlist()));
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector y = random_state(sys, rng, 1.0);
    const Vector ydot = random_state(sys, rng, 0.8);
    const Vector mag = sys.residual_magnitude(y, ydot, 0.001);
    CHECK((mag.array() >= sys.residual(y, ydot, 0.001).array().abs() * (1.0 - 1e-12)).all());
    const Vector wider = sys.residual_magnitude(y, ydot, 0.001, Vector::Constant(sys.size(), 1e-3),
                                                Vector::Constant(sys.size(), 1e-3));
    CHECK((wider.array() >= mag.array()).all());
  }
}
