#pragma once

// Implicit midpoint time stepping of the coupled system,
//   C(d y) + grad H(y_mid) = f(t_mid),  d y = (y_n - y_{n-1}) / tau,
//   y_mid = (y_n + y_{n-1}) / 2,
// solved by Newton's method, with a discrete power-balance audit per step.

#include "mona/coupled.hpp"
#include "mona/error.hpp"

#include <Eigen/SparseLU>

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mona {

struct TimeGrid {
  double t0 = 0.0;
  double t_end = 0.0;
  double tau = 0.0;

  // Throws InputError unless tau > 0 and (t_end - t0) / tau is an integer >= 1.
  static TimeGrid make(double t0, double t_end, double tau);

  int steps() const;
  double time(int n) const { return t0 + n * tau; }
};

struct NewtonConfig {
  double tol = 1e-12;
  int max_iter = 50;
  int max_halvings = 30;
  // A factorization is reused across iterations and steps until this many
  // iterations ran on it without converging, or until an iteration on it
  // reduces the norm by less than reuse_contraction.
  int refactor_after = 4;
  double reuse_contraction = 0.1;
  bool reuse_jacobian = true;
};

struct NewtonStats {
  int iterations = 0;
  double residual_norm = 0.0;
  int damping_events = 0;  // halvings of the Newton step
  int factorizations = 0;
};

// Sparse LU factorization shared between Newton iterations (and time steps).
class JacobianCache {
 public:
  bool valid() const { return valid_; }
  void invalidate() { valid_ = false; }
  // Returns false if the matrix is singular.
  bool factorize(const SparseMatrix& jacobian);
  Vector solve(const Vector& rhs) const;
  int factorizations() const { return factorizations_; }

  // Caller-defined key of the factorized operator (the midpoint stepper uses
  // the step size); a mismatch means the factorization must be redone.
  double tag = std::numeric_limits<double>::quiet_NaN();

 private:
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  Eigen::Index pattern_nnz_ = -1;
  Eigen::Index pattern_rows_ = -1;
  bool valid_ = false;
  int factorizations_ = 0;
};

struct NewtonProblem {
  std::function<Vector(const Vector&)> residual;
  std::function<SparseMatrix(const Vector&)> jacobian;
  // Convergence norm of a residual vector; max-abs when empty.
  std::function<double(const Vector&)> norm;
  // Smooth merit for the step-halving line search; squared 2-norm when empty.
  std::function<double(const Vector&)> merit;
  // Optional second measure at iterate x that discounts rounding error;
  // reaching tol in either measure counts as converged.
  std::function<double(const Vector& x, const Vector& r)> floor_norm;
};

struct NewtonResult {
  Vector solution;
  NewtonStats stats;
};

// Returns the first iterate whose residual norm is <= tol. Steps are halved
// while they fail to decrease the norm. Throws SolverError on a singular
// Jacobian, on exceeding max_iter, or when every damped step is non-finite.
NewtonResult newton_solve(const NewtonProblem& problem, Vector guess, const NewtonConfig& cfg,
                          JacobianCache* cache = nullptr);

struct StepRecord {
  int n = 0;
  double t = 0.0;
  Vector y;
  NewtonStats newton;
  double energy = 0.0;    // H(y_n)
  PowerBreakdown audit;   // discrete balance; audit.residual is eps_H
};

// Discrete balance over one step: dH_dt = (H(y_next) - H(y_prev)) / tau and
// losses/source terms evaluated at the midpoint with rates d y.
PowerBreakdown power_audit(const CoupledSystem& sys, const Vector& y_prev, const Vector& y_next, double tau,
                           double t_prev);

// Block-scaled max norm used as Newton's convergence measure: each block of
// the residual is divided by max(1, |f_b|, |r_b(initial guess)|). The
// second form also accepts r_i at its rounding floor: entry i is divided by
// max(scale_b, floor_i / tol), so |r_i| <= floor_i counts as converged.
class ResidualScale {
 public:
  ResidualScale(const BlockLayout& layout, const Vector& source, const Vector& initial_residual);
  double operator()(const Vector& r) const;
  double operator()(const Vector& r, const Vector& floor, double tol) const;
  // Sum of squares of the scaled entries.
  double merit(const Vector& r) const;
  double scale(Block b) const { return scale_[static_cast<int>(b)]; }

 private:
  BlockLayout layout_;
  std::array<double, 5> scale_{};
};

// One midpoint step from (t_prev, y_prev) to t_prev + tau. A negative tau
// steps backward in time. `guess` defaults to y_prev.
std::pair<Vector, StepRecord> midpoint_step(const CoupledSystem& sys, const Vector& y_prev, double t_prev, double tau,
                                            const NewtonConfig& cfg, JacobianCache* cache = nullptr,
                                            const std::optional<Vector>& guess = std::nullopt);

// A named scalar extracted after each step from the new state, the step's
// rate d y = (y_n - y_{n-1}) / tau and t_n.
struct Probe {
  std::string name;
  std::function<double(const CoupledSystem&, const Vector& y, const Vector& rate, double t)> eval;
  bool uses_rate = false;
};

struct TransientResult {
  TimeGrid grid;
  double initial_energy = 0.0;
  std::vector<StepRecord> records;
  std::vector<std::string> probe_names;
  std::vector<std::vector<double>> probe_values;  // [probe][step]

  double max_abs_balance() const;    // max_n |eps_H,n|
  double peak_supplied_power() const;  // max_n |supplied power| at the midpoints
};

// Thrown when a step fails; carries the steps accepted so far.
class TransientFailure : public SolverError {
 public:
  TransientFailure(const std::string& what, TransientResult partial)
      : SolverError(what), partial_(std::move(partial)) {}
  const TransientResult& partial() const { return partial_; }

 private:
  TransientResult partial_;
};

// Starts from y = 0, which must satisfy the system at t0 with zero rates
// (residual <= 1e-10); otherwise throws InputError.
TransientResult run_transient(const CoupledSystem& sys, const TimeGrid& grid, const std::vector<Probe>& probes,
                              const NewtonConfig& cfg);

// Continues from an arbitrary state y0 at grid.t0 without the consistency check.
TransientResult continue_transient(const CoupledSystem& sys, const TimeGrid& grid, const Vector& y0,
                                   const std::vector<Probe>& probes, const NewtonConfig& cfg);

struct ConvergenceRow {
  double tau = 0.0;
  double eps_tau = 0.0;
  double eoc = std::numeric_limits<double>::quiet_NaN();
  double max_eps_H = 0.0;
};

struct ConvergenceOptions {
  int halvings = 3;
  // The reference run uses tau_base / 2^(halvings + reference_levels).
  int reference_levels = 3;
};

// Runs tau_base / 2^k for k = 0..halvings against a self-refined reference and
// reports max_n |probe_tau(t_n) - probe_ref(t_n)| and log2 error ratios.
std::vector<ConvergenceRow> convergence_study(const CoupledSystem& sys, const TimeGrid& base, const Probe& probe,
                                              const NewtonConfig& cfg, const ConvergenceOptions& options = {});

}  // namespace mona
