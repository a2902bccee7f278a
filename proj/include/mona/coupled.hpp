#pragma once

// Monolithic field-circuit DAE in magnetic-oriented variables:
//
//   A_R i_R(A_R^T psi') + A_C q_C' + A_V q_V' + A_M q_M' + A_L L^-1 A_L^T psi = -A_I i_src
//   -A_C^T psi' + C^-1 q_C                                                    = 0
//   -A_V^T psi'                                                               = -v_src
//   -A_M^T psi' + X^T a'                                                      = 0
//   M_sigma a' + K_nu a - X q_M'                                              = 0
//
// with state y = (psi, q_C, q_V, q_M, a). The residual is left minus right
// hand side. Equivalently C(y') + grad H(y) = f(t) with the energy
// H = 1/2 (|A_L^T psi|^2_{L^-1} + |q_C|^2_{C^-1} + |a|^2_{K_nu}).

#include "mona/circuit.hpp"
#include "mona/field.hpp"

#include <array>
#include <span>
#include <vector>

namespace mona {

enum class Block { Psi = 0, ChargeC, ChargeV, ChargeM, Potential };

inline constexpr std::array<Block, 5> kAllBlocks = {Block::Psi, Block::ChargeC, Block::ChargeV, Block::ChargeM,
                                                    Block::Potential};

const char* block_name(Block b);

struct BlockLayout {
  std::array<Eigen::Index, 5> length{};
  std::array<Eigen::Index, 5> offset{};

  BlockLayout() = default;
  BlockLayout(Eigen::Index n_psi, Eigen::Index n_qc, Eigen::Index n_qv, Eigen::Index n_qm, Eigen::Index n_a);

  Eigen::Index size() const { return offset[4] + length[4]; }
  Eigen::Index size(Block b) const { return length[static_cast<int>(b)]; }
  Eigen::Index start(Block b) const { return offset[static_cast<int>(b)]; }

  template <class V>
  auto operator()(V& y, Block b) const {
    return y.segment(start(b), size(b));
  }
};

struct SourceSet {
  std::vector<Waveform> voltage;  // per voltage-source branch [V]
  std::vector<Waveform> current;  // per current-source branch [A]

  Vector voltages(double t) const;
  Vector currents(double t) const;
};

// Waveforms of the V and I elements in netlist order (the branch order of
// build_incidence).
SourceSet collect_sources(std::span<const NetlistElement> elements);

// Signed terms of the power balance; residual is their sum and vanishes along
// solutions.
struct PowerBreakdown {
  double dH_dt = 0.0;
  double resistive_loss = 0.0;
  double eddy_loss = 0.0;
  double source_power_I = 0.0;  // <v_I, i_src>
  double source_power_V = 0.0;  // <v_src, i_V>
  double residual = 0.0;

  // Power delivered by the sources into the system.
  double supplied() const { return -(source_power_I + source_power_V); }
};

struct Jacobians {
  SparseMatrix d_state;  // dr/dy
  SparseMatrix d_rate;   // dr/dy'
};

class CoupledSystem {
 public:
  CoupledSystem(CircuitGraph graph, FieldModel field, SourceSet sources);

  const CircuitGraph& graph() const { return graph_; }
  const FieldModel& field() const { return field_; }
  const SourceSet& sources() const { return sources_; }
  const BlockLayout& layout() const { return layout_; }
  Eigen::Index size() const { return layout_.size(); }
  bool is_linear() const { return graph_.diodes.size() == 0; }

  Vector residual(const Vector& y, const Vector& ydot, double t) const;
  Jacobians jacobians(const Vector& y, const Vector& ydot, double t) const;

  // Sum of the absolute values of the terms in each residual row, with every
  // rate entry widened by rate_slack and every state entry of the linear
  // storage terms by state_slack (either may be empty). Times a small
  // multiple of epsilon this bounds the rounding error of residual() plus
  // the change caused by rounding the arguments.
  Vector residual_magnitude(const Vector& y, const Vector& ydot, double t, const Vector& rate_slack = {},
                            const Vector& state_slack = {}) const;

  // rate_scale * dr/dy' + state_scale * dr/dy with a sparsity pattern that
  // does not depend on the arguments.
  SparseMatrix combined_jacobian(const Vector& ydot, double rate_scale, double state_scale) const;

  double energy(const Vector& y) const;
  Vector energy_gradient(const Vector& y) const;

  // Compact form pieces: residual = dissipation_coupling(y') + energy_gradient(y) - source_vector(t).
  Vector dissipation_coupling(const Vector& ydot) const;
  Vector source_vector(double t) const;

  PowerBreakdown power_breakdown(const Vector& y, const Vector& ydot, double t) const;

  // Voltages over the resistive partition (linear resistors, then diodes).
  Vector resistive_voltages(const Vector& ydot) const;

 private:
  void check(const Vector& v, const char* what) const;

  CircuitGraph graph_;
  FieldModel field_;
  SourceSet sources_;
  BlockLayout layout_;
  SparseMatrix resistive_incidence_;  // [A_R A_D]
};

// Binds M branch k to winding column winding_of_branch[k] of the field's X
// (identity when empty) and fixes the block layout. Throws InputError when
// branch and winding counts disagree or a winding is bound twice.
CoupledSystem assemble_coupled(CircuitGraph graph, FieldModel field, SourceSet sources,
                               std::span<const int> winding_of_branch = {});

}  // namespace mona
