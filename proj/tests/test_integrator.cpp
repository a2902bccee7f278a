#include "mona/error.hpp"
#include "mona/integrator.hpp"
#include "mona/scenario.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mona;
using namespace mona::test;

namespace {

CoupledSystem linear_benchmark() { return system_from(load_circuit(kLinearCoupledNetlist)); }

CoupledSystem without_sources(Circuit c) {
  for (auto& e : c.netlist.elements)
    if (e.kind == ElementKind::VoltageSource || e.kind == ElementKind::CurrentSource) e.waveform = Waveform::dc(0.0);
  return system_from(c);
}

NewtonProblem scalar_problem(std::function<double(double)> f, std::function<double(double)> df) {
  NewtonProblem p;
  p.residual = [f](const Vector& x) { return Vector::Constant(1, f(x[0])); };
  p.jacobian = [df](const Vector& x) {
    SparseMatrix j(1, 1);
    j.insert(0, 0) = df(x[0]);
    return j;
  };
  return p;
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g = TimeGrid::make(0.0, 0.05, 0.000625);
  CHECK(g.steps() == 80);
  CHECK(g.time(80) == doctest::Approx(0.05));
  CHECK(TimeGrid::make(0.0, 0.05, 1.0 / 12000.0).steps() == 600);
  CHECK_THROWS_AS(TimeGrid::make(0.0, 0.05, 0.0), InputError);
  CHECK_THROWS_AS(TimeGrid::make(0.0, 0.05, -1e-3), InputError);
  CHECK_THROWS_AS(TimeGrid::make(0.0, 0.05, 0.003), InputError);
  CHECK_THROWS_AS(TimeGrid::make(0.1, 0.05, 0.001), InputError);
}

TEST_CASE("Newton's method") {
  SUBCASE("affine map in one iteration") {
    NewtonProblem p;
    Dense a(3, 3);
    a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const Vector b = Vector::LinSpaced(3, 1.0, 3.0);
    p.residual = [&](const Vector& x) { return Vector(a * x - b); };
    p.jacobian = [&](const Vector&) { return SparseMatrix(a.sparseView()); };
    NewtonConfig cfg;
    const auto r = newton_solve(p, Vector::Zero(3), cfg);
    CHECK(r.stats.iterations == 1);
    CHECK((a * r.solution - b).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("x^2 - 4 from 3") {
    const auto p = scalar_problem([](double x) { return x * x - 4.0; }, [](double x) { return 2.0 * x; });
    NewtonConfig cfg;
    cfg.reuse_jacobian = false;
    const auto r = newton_solve(p, Vector::Constant(1, 3.0), cfg);
    CHECK(std::abs(r.solution[0] - 2.0) <= 1e-12);
    CHECK(r.stats.iterations <= 7);
    CHECK(r.stats.residual_norm <= 1e-12);
  }
  SUBCASE("overshoot is damped") {
    const auto p = scalar_problem([](double x) { return std::atan(x); },
                                  [](double x) { return 1.0 / (1.0 + x * x); });
    NewtonConfig cfg;
    cfg.reuse_jacobian = false;
    const auto r = newton_solve(p, Vector::Constant(1, 3.0), cfg);
    CHECK(std::abs(r.solution[0]) <= 1e-12);
    CHECK(r.stats.damping_events > 0);
  }
  SUBCASE("failures") {
    const auto singular = scalar_problem([](double x) { return x * x + 1.0; }, [](double) { return 0.0; });
    CHECK_THROWS_AS(newton_solve(singular, Vector::Constant(1, 1.0), NewtonConfig{}), SolverError);
    const auto no_root = scalar_problem([](double x) { return x * x + 1.0; }, [](double x) { return 2.0 * x; });
    NewtonConfig cfg;
    cfg.max_iter = 20;
    CHECK_THROWS_AS(newton_solve(no_root, Vector::Constant(1, 1.0), cfg), SolverError);
  }
}

TEST_CASE("midpoint step of an RC discharge") {
  const CoupledSystem sys = system_from(load_circuit("C c 1 0 1\nR r 1 0 1\n"));
  Vector y0 = Vector::Zero(sys.size());
  sys.layout()(y0, Block::ChargeC)[0] = 1.0;
  const auto [y1, rec] = midpoint_step(sys, y0, 0.0, 0.1, NewtonConfig{});
  CHECK(sys.layout()(y1, Block::ChargeC)[0] == doctest::Approx(0.95 / 1.05).epsilon(1e-12));
  CHECK(rec.newton.residual_norm <= 1e-12);
  CHECK(rec.t == doctest::Approx(0.1));
}

TEST_CASE("zero stays zero without sources") {
  const CoupledSystem sys = without_sources(load_circuit(rectifier_netlist()));
  const Vector zero = Vector::Zero(sys.size());
  const auto [y1, rec] = midpoint_step(sys, zero, 0.0, 1e-3, NewtonConfig{});
  CHECK(y1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rec.audit.residual == 0.0);

  const Circuit c = load_circuit(rectifier_netlist());
  Circuit off = c;
  off.netlist.elements[0].waveform = Waveform::dc(0.0);
  const CoupledSystem quiet = system_from(off);
  const auto r = run_transient(quiet, TimeGrid::make(0.0, 0.01, 1e-3), parse_probes(kRectifierProbes, off),
                               NewtonConfig{});
  for (const auto& series : r.probe_values)
    for (double v : series) CHECK(v == 0.0);
}

TEST_CASE("linear systems take one Newton iteration per step and reuse the factorization") {
  const CoupledSystem sys = linear_benchmark();
  const auto r = run_transient(sys, TimeGrid::make(0.0, 0.01, 0.000625), {}, NewtonConfig{});
  int factorizations = 0;
  for (const auto& rec : r.records) {
    CHECK(rec.newton.iterations == 1);
    CHECK(rec.newton.residual_norm <= 1e-12);
    factorizations += rec.newton.factorizations;
  }
  CHECK(factorizations == 1);
}

TEST_CASE("discrete power balance on the linear benchmark") {
  const CoupledSystem sys = linear_benchmark();
  const NewtonConfig cfg;
  for (double tau : {0.005, 0.00125, 0.0003125}) {
    const auto r = run_transient(sys, TimeGrid::make(0.0, 0.05, tau), {}, cfg);
    for (const auto& rec : r.records)
      CHECK(std::abs(rec.audit.residual) <= 100.0 * cfg.tol * std::max(1.0, std::abs(rec.audit.dH_dt)));
  }
}

TEST_CASE("power audit detects non-solutions") {
  const CoupledSystem sys = linear_benchmark();
  const auto r = run_transient(sys, TimeGrid::make(0.0, 0.01, 0.000625), {}, NewtonConfig{});
  const Vector& y_prev = r.records[6].y;
  const Vector& y_next = r.records[7].y;
  const double t_prev = r.records[6].t;
  CHECK(std::abs(power_audit(sys, y_prev, y_next, 0.000625, t_prev).residual) <= 1e-10);
  const Vector bumped = y_next + Vector::Constant(y_next.size(), 1e-6);
  CHECK(std::abs(power_audit(sys, y_prev, bumped, 0.000625, t_prev).residual) > 1e-8);
}

TEST_CASE("energy decays once the sources are switched off") {
  const Circuit c = load_circuit(kLinearCoupledNetlist);
  const CoupledSystem driven = system_from(c);
  const auto first = run_transient(driven, TimeGrid::make(0.0, 0.01, 0.0005), {}, NewtonConfig{});
  const CoupledSystem quiet = without_sources(c);
  const auto rest = continue_transient(quiet, TimeGrid::make(0.01, 0.04, 0.0005), first.records.back().y, {},
                                       NewtonConfig{});
  double h = first.records.back().energy;
  REQUIRE(h > 0.0);
  for (const auto& rec : rest.records) {
    CHECK(rec.audit.dH_dt <= 0.0);
    CHECK(rec.energy <= h);
    h = rec.energy;
  }
  CHECK(h < 0.5 * first.records.back().energy);
}

TEST_CASE("midpoint steps are time-reversible on linear problems") {
  const CoupledSystem sys = linear_benchmark();
  const auto r = run_transient(sys, TimeGrid::make(0.0, 0.005, 0.0005), {}, NewtonConfig{});
  const Vector y0 = r.records.back().y;
  const double t0 = r.records.back().t;
  const auto [y1, fwd] = midpoint_step(sys, y0, t0, 0.0005, NewtonConfig{});
  const auto [back, bwd] = midpoint_step(sys, y1, t0 + 0.0005, -0.0005, NewtonConfig{});
  for (Block b : kAllBlocks) {
    const Vector expect = sys.layout()(y0, b);
    const Vector got = sys.layout()(back, b);
    if (expect.size() == 0) continue;
    CHECK((got - expect).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1e-12, expect.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("inconsistent initial state is rejected") {
  const CoupledSystem sys = system_from(load_circuit("V src 1 0 DC 5\nR r 1 0 10\n"));
  CHECK_THROWS_AS(run_transient(sys, TimeGrid::make(0.0, 0.01, 0.001), {}, NewtonConfig{}), InputError);
}

TEST_CASE("a failing step reports the accepted prefix") {
  const Circuit c = load_circuit(rectifier_netlist());
  const CoupledSystem sys = system_from(c);
  NewtonConfig cfg;
  cfg.max_iter = 2;
  try {
    run_transient(sys, TimeGrid::make(0.0, 0.01, 0.000625), parse_probes(kRectifierProbes, c), cfg);
    FAIL("expected a transient failure");
  } catch (const TransientFailure& f) {
    CHECK(f.partial().records.size() < 16);
    CHECK(f.partial().probe_values.size() == 4);
    CHECK(f.partial().probe_values[0].size() == f.partial().records.size());
  }
}

TEST_CASE("half-wave rectifier at the source peak") {
  const Circuit c = load_circuit("V src 1 0 SIN(160 60)\nD d1 1 2 IS=1e-14 VT=0.025 RP=1e12\nR load 2 0 10\n");
  const CoupledSystem sys = system_from(c);
  const double peak = 1.0 / 240.0, tau = 1.0 / 12000.0;
  const auto r = run_transient(sys, TimeGrid::make(0.0, 2.0 * peak, tau), parse_probes("v2=v(2)", c), NewtonConfig{});
  for (std::size_t n = 0; n < r.records.size(); ++n) {
    if (std::abs(r.records[n].t - peak) > 1.5 * tau) continue;
    CHECK(r.records[n].newton.damping_events <= 3);
    CHECK(r.probe_values[0][n] > 150.0);
    CHECK(r.probe_values[0][n] < 160.0);
  }

  // A cold start at the peak has to climb the exponential from the wrong side;
  // it needs many halvings but still converges.
  const auto [y, rec] = midpoint_step(sys, Vector::Zero(sys.size()), peak - 0.5 * tau, tau, NewtonConfig{});
  CHECK(rec.newton.residual_norm <= 1e-12);
  CHECK(sys.layout()(y, Block::Psi)[1] / tau == doctest::Approx(r.probe_values[0][49]).epsilon(1e-3));
}

TEST_CASE("full-wave rectifier over three source periods") {
  const Circuit c = load_circuit(rectifier_netlist());
  const CoupledSystem sys = build_system(c, FieldSource{});
  const double tau = 1.0 / 12000.0;
  const auto r = run_transient(sys, TimeGrid::make(0.0, 0.05, tau), parse_probes(kRectifierProbes, c), NewtonConfig{});
  const auto& v_r = r.probe_values[1];
  double peak = 0.0;
  for (std::size_t n = 0; n < r.records.size(); ++n) {
    CHECK(v_r[n] >= -1.0);
    peak = std::max(peak, v_r[n]);
    // Commutation after the start-up period: at most one step halving.
    if (r.records[n].t > 1.0 / 60.0) {
      CHECK(r.records[n].newton.iterations <= 10);
      CHECK(r.records[n].newton.damping_events <= 1);
    }
  }
  // Secondary amplitude 160 * 50 / 400 = 20 V less two diode drops and leakage.
  CHECK(peak > 16.0);
  CHECK(peak < 20.0);
}

TEST_CASE("RLC convergence study is second order") {
  const Circuit c = load_circuit(kRlcNetlist);
  const CoupledSystem sys = system_from(c);
  const auto rows = convergence_study(sys, TimeGrid::make(0.0, 0.1, 0.001), make_probe("qc=q(c1)", c),
                                      NewtonConfig{}, ConvergenceOptions{3, 3});
  REQUIRE(rows.size() == 4);
  CHECK(std::isnan(rows[0].eoc));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    INFO("tau " << rows[k].tau << " eoc " << rows[k].eoc);
    CHECK(rows[k].tau == doctest::Approx(0.5 * rows[k - 1].tau));
    CHECK(rows[k].eoc >= 1.9);
    CHECK(rows[k].eoc <= 2.1);
    CHECK(rows[k - 1].eps_tau / rows[k].eps_tau == doctest::Approx(4.0).epsilon(0.1));
  }
}

TEST_CASE("convergence study preconditions") {
  const Circuit c = load_circuit(kRlcNetlist);
  const CoupledSystem sys = system_from(c);
  const TimeGrid g = TimeGrid::make(0.0, 0.01, 0.001);
  CHECK_THROWS_AS(convergence_study(sys, g, make_probe("qc=q(c1)", c), NewtonConfig{}, {1, 3}), InputError);
  CHECK_THROWS_AS(convergence_study(sys, g, make_probe("v=v(1)", c), NewtonConfig{}), InputError);
}
