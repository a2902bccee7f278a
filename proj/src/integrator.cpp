#include "mona/integrator.hpp"

#include "mona/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mona {

TimeGrid TimeGrid::make(double t0, double t_end, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("time step must be positive");
  if (!(t_end > t0)) throw InputError("end time must exceed start time");
  const double count = (t_end - t0) / tau;
  const double rounded = std::round(count);
  if (rounded < 1.0 || std::abs(count - rounded) > 1e-10 * std::max(1.0, rounded))
    throw InputError("time span is not an integer multiple of the step size");
  return TimeGrid{t0, t_end, tau};
}

int TimeGrid::steps() const { return static_cast<int>(std::lround((t_end - t0) / tau)); }

bool JacobianCache::factorize(const SparseMatrix& jacobian) {
  if (!lu_ || jacobian.rows() != pattern_rows_ || jacobian.nonZeros() != pattern_nnz_) {
    lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lu_->analyzePattern(jacobian);
    pattern_rows_ = jacobian.rows();
    pattern_nnz_ = jacobian.nonZeros();
  }
  lu_->factorize(jacobian);
  ++factorizations_;
  valid_ = lu_->info() == Eigen::Success;
  return valid_;
}

Vector JacobianCache::solve(const Vector& rhs) const {
  Vector x = lu_->solve(rhs);
  return x;
}

namespace {

double max_abs(const Vector& r) { return r.size() == 0 ? 0.0 : r.cwiseAbs().maxCoeff(); }

}  // namespace

NewtonResult newton_solve(const NewtonProblem& problem, Vector guess, const NewtonConfig& cfg, JacobianCache* cache) {
  if (!(cfg.tol > 0.0)) throw InputError("Newton tolerance must be positive");
  JacobianCache local;
  JacobianCache& lu = cache ? *cache : local;
  const auto norm = problem.norm ? problem.norm : max_abs;
  const auto merit = problem.merit ? problem.merit : [](const Vector& v) { return v.squaredNorm(); };
  auto converged = [&](const Vector& x, const Vector& r, double& nr) {
    if (nr <= cfg.tol) return true;
    if (!problem.floor_norm) return false;
    const double nf = problem.floor_norm(x, r);
    if (nf > cfg.tol) return false;
    nr = nf;
    return true;
  };

  NewtonResult out{std::move(guess), {}};
  Vector& x = out.solution;
  NewtonStats& st = out.stats;
  const int factorizations_before = lu.factorizations();

  Vector r = problem.residual(x);
  double nr = norm(r);
  double mr = merit(r);
  int stale = 0;
  bool fresh = false;

  auto refactor = [&] {
    if (!lu.factorize(problem.jacobian(x))) throw SolverError("singular Newton iteration matrix");
    stale = 0;
    fresh = true;
  };

  while (true) {
    if (!std::isfinite(nr)) throw SolverError("non-finite residual");
    if (converged(x, r, nr)) break;
    if (st.iterations >= cfg.max_iter) {
      std::ostringstream msg;
      msg << "Newton did not converge in " << cfg.max_iter << " iterations (residual " << nr << ")";
      throw SolverError(msg.str());
    }
    if (!lu.valid() || !cfg.reuse_jacobian || stale >= cfg.refactor_after) refactor();

    Vector dx = -lu.solve(r);
    double lambda = 1.0;
    Vector x_new, r_new;
    double n_new = 0.0, m_new = 0.0;
    for (int halving = 0;; ++halving) {
      x_new = x + lambda * dx;
      r_new = problem.residual(x_new);
      n_new = norm(r_new);
      m_new = merit(r_new);
      if (!fresh && !(n_new <= cfg.reuse_contraction * nr)) {
        // A reused factorization that contracts poorly: retry with a fresh one.
        refactor();
        dx = -lu.solve(r);
        lambda = 1.0;
        halving = -1;
        continue;
      }
      if (std::isfinite(m_new) && (m_new < mr || n_new < nr)) break;
      if (halving >= cfg.max_halvings) {
        if (std::isfinite(n_new)) break;
        throw SolverError("non-finite residual after damping was exhausted");
      }
      lambda *= 0.5;
      ++st.damping_events;
    }
    x = std::move(x_new);
    r = std::move(r_new);
    nr = n_new;
    mr = m_new;
    ++st.iterations;
    ++stale;
    fresh = false;
  }
  st.residual_norm = nr;
  st.factorizations = lu.factorizations() - factorizations_before;
  return out;
}

ResidualScale::ResidualScale(const BlockLayout& layout, const Vector& source, const Vector& initial_residual)
    : layout_(layout) {
  for (Block b : kAllBlocks) {
    const int i = static_cast<int>(b);
    const Eigen::Index n = layout.size(b);
    double s = 1.0;
    if (n > 0) {
      s = std::max(s, max_abs(source.segment(layout.start(b), n)));
      s = std::max(s, max_abs(initial_residual.segment(layout.start(b), n)));
    }
    scale_[i] = s;
  }
}

double ResidualScale::operator()(const Vector& r) const {
  double norm = 0.0;
  for (Block b : kAllBlocks) {
    const Eigen::Index n = layout_.size(b);
    if (n == 0) continue;
    norm = std::max(norm, max_abs(r.segment(layout_.start(b), n)) / scale_[static_cast<int>(b)]);
  }
  return norm;
}

double ResidualScale::merit(const Vector& r) const {
  double sum = 0.0;
  for (Block b : kAllBlocks) {
    const Eigen::Index n = layout_.size(b);
    if (n > 0) sum += r.segment(layout_.start(b), n).squaredNorm() / (scale_[static_cast<int>(b)] * scale_[static_cast<int>(b)]);
  }
  return sum;
}

double ResidualScale::operator()(const Vector& r, const Vector& floor, double tol) const {
  double norm = 0.0;
  for (Block b : kAllBlocks) {
    const double s = scale_[static_cast<int>(b)];
    const Eigen::Index start = layout_.start(b);
    for (Eigen::Index i = start; i < start + layout_.size(b); ++i)
      norm = std::max(norm, std::abs(r[i]) / std::max(s, floor[i] / tol));
  }
  return norm;
}

PowerBreakdown power_audit(const CoupledSystem& sys, const Vector& y_prev, const Vector& y_next, double tau,
                           double t_prev) {
  const Vector rate = (y_next - y_prev) / tau;
  const Vector mid = 0.5 * (y_next + y_prev);
  PowerBreakdown p = sys.power_breakdown(mid, rate, t_prev + 0.5 * tau);
  p.dH_dt = (sys.energy(y_next) - sys.energy(y_prev)) / tau;
  p.residual = p.dH_dt + p.resistive_loss + p.eddy_loss + p.source_power_I + p.source_power_V;
  return p;
}

std::pair<Vector, StepRecord> midpoint_step(const CoupledSystem& sys, const Vector& y_prev, double t_prev, double tau,
                                            const NewtonConfig& cfg, JacobianCache* cache,
                                            const std::optional<Vector>& guess) {
  if (!(tau != 0.0) || !std::isfinite(tau)) throw InputError("time step must be non-zero and finite");
  if (y_prev.size() != sys.size() || !y_prev.allFinite()) throw InputError("previous state is invalid");

  const double t_mid = t_prev + 0.5 * tau;
  NewtonProblem problem;
  problem.residual = [&](const Vector& x) {
    return sys.residual(0.5 * (x + y_prev), (x - y_prev) / tau, t_mid);
  };
  problem.jacobian = [&](const Vector& x) { return sys.combined_jacobian((x - y_prev) / tau, 1.0 / tau, 0.5); };

  const ResidualScale scale(sys.layout(), sys.source_vector(t_mid), problem.residual(y_prev));
  // Start from whichever of the guess and the previous state has the smaller
  // residual; the other one is the fallback if Newton fails.
  std::vector<Vector> starts{y_prev};
  if (guess) {
    if (guess->size() != sys.size()) throw InputError("Newton guess has the wrong length");
    const bool better = scale.merit(problem.residual(*guess)) < scale.merit(problem.residual(y_prev));
    starts.insert(better ? starts.begin() : starts.end(), *guess);
  }
  // Entries of r cannot drop below the rounding error of their terms, nor
  // below the change caused by rounding x itself: |x| widens the states and
  // (|x| + |y_prev|) / tau the difference quotients.
  constexpr double kFloorFactor = 4.0 * std::numeric_limits<double>::epsilon();
  problem.norm = [&](const Vector& r) { return scale(r); };
  problem.merit = [&](const Vector& r) { return scale.merit(r); };
  problem.floor_norm = [&](const Vector& x, const Vector& r) {
    const Vector rate_slack = (x.cwiseAbs() + y_prev.cwiseAbs()) / std::abs(tau);
    const Vector floor =
        kFloorFactor * sys.residual_magnitude(0.5 * (x + y_prev), (x - y_prev) / tau, t_mid, rate_slack, x);
    return scale(r, floor, cfg.tol);
  };

  JacobianCache local;
  JacobianCache& lu = cache ? *cache : local;
  // Diodes change the iteration matrix between steps; only a linear system
  // keeps its factorization from one step to the next.
  if (!(lu.tag == tau) || !sys.is_linear()) {
    lu.invalidate();
    lu.tag = tau;
  }

  NewtonResult solved;
  NewtonStats spent;
  for (std::size_t k = 0;; ++k) {
    try {
      solved = newton_solve(problem, starts[k], cfg, &lu);
      break;
    } catch (const SolverError& e) {
      if (k + 1 < starts.size()) {
        lu.invalidate();
        spent.iterations += cfg.max_iter;
        continue;
      }
      std::ostringstream msg;
      msg.precision(17);
      msg << "midpoint step from t = " << t_prev << " with tau = " << tau << ": " << e.what();
      throw SolverError(msg.str());
    }
  }
  solved.stats.iterations += spent.iterations;

  StepRecord rec;
  rec.t = t_prev + tau;
  rec.newton = solved.stats;
  rec.energy = sys.energy(solved.solution);
  rec.audit = power_audit(sys, y_prev, solved.solution, tau, t_prev);
  rec.y = solved.solution;
  return {std::move(solved.solution), std::move(rec)};
}

double TransientResult::max_abs_balance() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, std::abs(r.audit.residual));
  return m;
}

double TransientResult::peak_supplied_power() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, std::abs(r.audit.supplied()));
  return m;
}

TransientResult continue_transient(const CoupledSystem& sys, const TimeGrid& grid, const Vector& y0,
                                   const std::vector<Probe>& probes, const NewtonConfig& cfg) {
  TransientResult result;
  result.grid = grid;
  result.initial_energy = sys.energy(y0);
  for (const auto& p : probes) result.probe_names.push_back(p.name);
  result.probe_values.assign(probes.size(), {});

  const int steps = grid.steps();
  result.records.reserve(steps);
  JacobianCache cache;
  Vector y = y0;
  Vector last_rate;
  for (int n = 1; n <= steps; ++n) {
    const double t_prev = grid.time(n - 1);
    std::optional<Vector> guess;
    if (last_rate.size() == y.size()) guess = y + grid.tau * last_rate;
    std::pair<Vector, StepRecord> step;
    try {
      step = midpoint_step(sys, y, t_prev, grid.tau, cfg, &cache, guess);
    } catch (const SolverError& e) {
      throw TransientFailure(std::string("step ") + std::to_string(n) + ": " + e.what(), std::move(result));
    }
    auto& [y_next, rec] = step;
    rec.n = n;
    rec.t = grid.time(n);
    last_rate = (y_next - y) / grid.tau;
    for (std::size_t k = 0; k < probes.size(); ++k)
      result.probe_values[k].push_back(probes[k].eval(sys, y_next, last_rate, rec.t));
    y = y_next;
    result.records.push_back(std::move(rec));
  }
  return result;
}

TransientResult run_transient(const CoupledSystem& sys, const TimeGrid& grid, const std::vector<Probe>& probes,
                              const NewtonConfig& cfg) {
  const Vector zero = Vector::Zero(sys.size());
  const Vector r0 = sys.residual(zero, zero, grid.t0);
  const ResidualScale scale(sys.layout(), sys.source_vector(grid.t0), Vector::Zero(sys.size()));
  if (scale(r0) > 1e-10) {
    std::ostringstream msg;
    msg << "zero initial state is inconsistent at t0 = " << grid.t0 << " (residual " << scale(r0)
        << "); sources must vanish at the start time";
    throw InputError(msg.str());
  }
  return continue_transient(sys, grid, zero, probes, cfg);
}

std::vector<ConvergenceRow> convergence_study(const CoupledSystem& sys, const TimeGrid& base, const Probe& probe,
                                              const NewtonConfig& cfg, const ConvergenceOptions& options) {
  if (options.halvings < 2) throw InputError("convergence study needs at least two halvings");
  if (options.reference_levels < 1) throw InputError("reference must be finer than the finest step");
  if (probe.uses_rate)
    throw InputError("probe " + probe.name + " is a step average; use a state probe for convergence studies");

  auto series = [&](int level) {
    const TimeGrid grid = TimeGrid::make(base.t0, base.t_end, std::ldexp(base.tau, -level));
    return run_transient(sys, grid, {probe}, cfg);
  };

  const int ref_level = options.halvings + options.reference_levels;
  const TransientResult reference = series(ref_level);
  const auto& ref = reference.probe_values[0];

  std::vector<ConvergenceRow> rows;
  for (int k = 0; k <= options.halvings; ++k) {
    const TransientResult run = series(k);
    const auto& values = run.probe_values[0];
    const std::size_t stride = std::size_t{1} << (ref_level - k);
    ConvergenceRow row;
    row.tau = run.grid.tau;
    for (std::size_t n = 0; n < values.size(); ++n)
      row.eps_tau = std::max(row.eps_tau, std::abs(values[n] - ref[(n + 1) * stride - 1]));
    row.max_eps_H = run.max_abs_balance();
    if (!rows.empty()) row.eoc = std::log2(rows.back().eps_tau / row.eps_tau);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mona
