#include "mona/coupled.hpp"

#include "mona/error.hpp"

#include <string>
#include <utility>

namespace mona {

const char* block_name(Block b) {
  switch (b) {
    case Block::Psi: return "psi";
    case Block::ChargeC: return "q_C";
    case Block::ChargeV: return "q_V";
    case Block::ChargeM: return "q_M";
    case Block::Potential: return "a";
  }
  return "?";
}

BlockLayout::BlockLayout(Eigen::Index n_psi, Eigen::Index n_qc, Eigen::Index n_qv, Eigen::Index n_qm,
                         Eigen::Index n_a)
    : length{n_psi, n_qc, n_qv, n_qm, n_a} {
  Eigen::Index at = 0;
  for (int b = 0; b < 5; ++b) {
    offset[b] = at;
    at += length[b];
  }
}

Vector SourceSet::voltages(double t) const {
  Vector v(static_cast<Eigen::Index>(voltage.size()));
  for (std::size_t k = 0; k < voltage.size(); ++k) v[static_cast<Eigen::Index>(k)] = voltage[k](t);
  return v;
}

Vector SourceSet::currents(double t) const {
  Vector i(static_cast<Eigen::Index>(current.size()));
  for (std::size_t k = 0; k < current.size(); ++k) i[static_cast<Eigen::Index>(k)] = current[k](t);
  return i;
}

SourceSet collect_sources(std::span<const NetlistElement> elements) {
  SourceSet s;
  for (const auto& e : elements) {
    if (e.kind == ElementKind::VoltageSource) s.voltage.push_back(e.waveform);
    if (e.kind == ElementKind::CurrentSource) s.current.push_back(e.waveform);
  }
  return s;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Adds scale * A diag(w) A^T into the psi block.
void add_branch_laplacian(Triplets& out, const SparseMatrix& incidence, const Vector& weight, double scale) {
  for (int k = 0; k < incidence.outerSize(); ++k)
    for (SparseMatrix::InnerIterator a(incidence, k); a; ++a)
      for (SparseMatrix::InnerIterator b(incidence, k); b; ++b)
        out.emplace_back(a.row(), b.row(), scale * weight[k] * a.value() * b.value());
}

// Adds scale * A into (psi, q) and -scale * A^T into (q, psi).
void add_antisymmetric(Triplets& out, const SparseMatrix& incidence, Eigen::Index charge_offset, double scale) {
  for (int k = 0; k < incidence.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(incidence, k); it; ++it) {
      out.emplace_back(it.row(), charge_offset + k, scale * it.value());
      out.emplace_back(charge_offset + k, it.row(), -scale * it.value());
    }
}

void add_block(Triplets& out, const SparseMatrix& m, Eigen::Index row_offset, Eigen::Index col_offset, double scale) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      out.emplace_back(row_offset + it.row(), col_offset + it.col(), scale * it.value());
}

SparseMatrix hstack(const SparseMatrix& left, const SparseMatrix& right) {
  SparseMatrix out(left.rows(), left.cols() + right.cols());
  Triplets t;
  add_block(t, left, 0, 0, 1.0);
  add_block(t, right, 0, left.cols(), 1.0);
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

}  // namespace

CoupledSystem::CoupledSystem(CircuitGraph graph, FieldModel field, SourceSet sources)
    : graph_(std::move(graph)), field_(std::move(field)), sources_(std::move(sources)) {
  if (graph_.devices.size() != field_.winding_count())
    throw InputError("device branches (" + std::to_string(graph_.devices.size()) + ") do not match field windings (" +
                     std::to_string(field_.winding_count()) + ")");
  if (static_cast<int>(sources_.voltage.size()) != graph_.vsources.size() ||
      static_cast<int>(sources_.current.size()) != graph_.isources.size())
    throw InputError("source waveforms do not match the source branches");
  layout_ = BlockLayout(graph_.n_nodes, graph_.capacitors.size(), graph_.vsources.size(), graph_.devices.size(),
                        field_.dofs());
  if (graph_.resistors.incidence.rows() == graph_.diodes.incidence.rows())
    resistive_incidence_ = hstack(graph_.resistors.incidence, graph_.diodes.incidence);
  else
    resistive_incidence_.resize(graph_.n_nodes, 0);
}

void CoupledSystem::check(const Vector& v, const char* what) const {
  if (v.size() != layout_.size())
    throw InputError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(layout_.size()));
  if (!v.allFinite()) throw InputError(std::string(what) + " contains non-finite values");
}

Vector CoupledSystem::resistive_voltages(const Vector& ydot) const {
  return resistive_incidence_.transpose() * layout_(ydot, Block::Psi);
}

Vector CoupledSystem::residual(const Vector& y, const Vector& ydot, double t) const {
  check(y, "state");
  check(ydot, "state rate");
  const auto& g = graph_;
  const auto& L = layout_;
  const Vector psi = L(y, Block::Psi);
  const Vector psi_dot = L(ydot, Block::Psi);
  const Vector qc_dot = L(ydot, Block::ChargeC);
  const Vector qv_dot = L(ydot, Block::ChargeV);
  const Vector qm_dot = L(ydot, Block::ChargeM);
  const Vector a = L(y, Block::Potential);
  const Vector a_dot = L(ydot, Block::Potential);

  const auto resistive = resistive_branch_current(g, resistive_voltages(ydot));
  const Vector inductor_current = g.inv_inductance.cwiseProduct(g.inductors.incidence.transpose() * psi);

  Vector r(L.size());
  L(r, Block::Psi) = resistive_incidence_ * resistive.current + g.capacitors.incidence * qc_dot +
                     g.vsources.incidence * qv_dot + g.devices.incidence * qm_dot +
                     g.inductors.incidence * inductor_current + g.isources.incidence * sources_.currents(t);
  L(r, Block::ChargeC) =
      -(g.capacitors.incidence.transpose() * psi_dot) + L(y, Block::ChargeC).cwiseQuotient(g.capacitance);
  L(r, Block::ChargeV) = -(g.vsources.incidence.transpose() * psi_dot) + sources_.voltages(t);
  L(r, Block::ChargeM) = -(g.devices.incidence.transpose() * psi_dot) + field_.winding.transpose() * a_dot;
  L(r, Block::Potential) = field_.mass * a_dot + apply_stiffness(field_, a) - field_.winding * qm_dot;
  return r;
}

Vector CoupledSystem::residual_magnitude(const Vector& y, const Vector& ydot, double t, const Vector& rate_slack,
                                        const Vector& state_slack) const {
  check(y, "state");
  check(ydot, "state rate");
  const auto& g = graph_;
  const auto& L = layout_;
  const Vector slack = rate_slack.size() == 0 ? Vector::Zero(L.size()) : Vector(rate_slack.cwiseAbs());
  const Vector state = state_slack.size() == 0 ? Vector::Zero(L.size()) : Vector(state_slack.cwiseAbs());
  if (slack.size() != L.size() || state.size() != L.size()) throw InputError("slack has the wrong length");
  const Vector rate = ydot.cwiseAbs() + slack;
  auto abs = [](const SparseMatrix& m) { return SparseMatrix(m.cwiseAbs()); };

  const auto resistive = resistive_branch_current(g, resistive_voltages(ydot));
  const Vector branch_slack = abs(resistive_incidence_).transpose() * L(slack, Block::Psi);
  const Vector resistive_mag = resistive.current.cwiseAbs() + resistive.conductance.cwiseProduct(branch_slack);
  const Vector inductor_current = g.inv_inductance.cwiseProduct(
      abs(g.inductors.incidence).transpose() * (L(y, Block::Psi).cwiseAbs() + L(state, Block::Psi)));
  const Vector psi_rate = L(rate, Block::Psi);

  Vector m(L.size());
  L(m, Block::Psi) = abs(resistive_incidence_) * resistive_mag + abs(g.capacitors.incidence) * L(rate, Block::ChargeC) +
                     abs(g.vsources.incidence) * L(rate, Block::ChargeV) +
                     abs(g.devices.incidence) * L(rate, Block::ChargeM) + abs(g.inductors.incidence) * inductor_current +
                     abs(g.isources.incidence) * sources_.currents(t).cwiseAbs();
  L(m, Block::ChargeC) = abs(g.capacitors.incidence).transpose() * psi_rate +
                         (L(y, Block::ChargeC).cwiseAbs() + L(state, Block::ChargeC)).cwiseQuotient(g.capacitance);
  L(m, Block::ChargeV) = abs(g.vsources.incidence).transpose() * psi_rate + sources_.voltages(t).cwiseAbs();
  L(m, Block::ChargeM) = abs(g.devices.incidence).transpose() * psi_rate +
                         abs(field_.winding).transpose() * L(rate, Block::Potential);
  Vector stiffness_mag;
  apply_stiffness(field_, L(y, Block::Potential), &stiffness_mag);
  L(m, Block::Potential) = abs(field_.mass) * L(rate, Block::Potential) + stiffness_mag +
                           abs(field_.stiffness) * L(state, Block::Potential) +
                           abs(field_.winding) * L(rate, Block::ChargeM);
  return m;
}

SparseMatrix CoupledSystem::combined_jacobian(const Vector& ydot, double rate_scale, double state_scale) const {
  check(ydot, "state rate");
  const auto& g = graph_;
  const auto& L = layout_;
  const auto resistive = resistive_branch_current(g, resistive_voltages(ydot));

  Triplets t;
  // d/dy'
  add_branch_laplacian(t, resistive_incidence_, resistive.conductance, rate_scale);
  add_antisymmetric(t, g.capacitors.incidence, L.start(Block::ChargeC), rate_scale);
  add_antisymmetric(t, g.vsources.incidence, L.start(Block::ChargeV), rate_scale);
  add_antisymmetric(t, g.devices.incidence, L.start(Block::ChargeM), rate_scale);
  add_block(t, SparseMatrix(field_.winding.transpose()), L.start(Block::ChargeM), L.start(Block::Potential),
            rate_scale);
  add_block(t, field_.winding, L.start(Block::Potential), L.start(Block::ChargeM), -rate_scale);
  add_block(t, field_.mass, L.start(Block::Potential), L.start(Block::Potential), rate_scale);
  // d/dy
  add_branch_laplacian(t, g.inductors.incidence, g.inv_inductance, state_scale);
  for (int k = 0; k < g.capacitors.size(); ++k)
    t.emplace_back(L.start(Block::ChargeC) + k, L.start(Block::ChargeC) + k, state_scale / g.capacitance[k]);
  add_block(t, field_.stiffness, L.start(Block::Potential), L.start(Block::Potential), state_scale);

  SparseMatrix m(L.size(), L.size());
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

Jacobians CoupledSystem::jacobians(const Vector& y, const Vector& ydot, double /*t*/) const {
  check(y, "state");
  return {combined_jacobian(ydot, 0.0, 1.0).pruned(), combined_jacobian(ydot, 1.0, 0.0).pruned()};
}

double CoupledSystem::energy(const Vector& y) const {
  check(y, "state");
  const Vector a = layout_(y, Block::Potential);
  return circuit_energy(graph_, layout_(y, Block::Psi), layout_(y, Block::ChargeC)) +
         magnetic_energy(field_, a);
}

Vector CoupledSystem::energy_gradient(const Vector& y) const {
  check(y, "state");
  const auto& g = graph_;
  const auto& L = layout_;
  Vector grad = Vector::Zero(L.size());
  const Vector psi = L(y, Block::Psi);
  L(grad, Block::Psi) = g.inductors.incidence * g.inv_inductance.cwiseProduct(g.inductors.incidence.transpose() * psi);
  L(grad, Block::ChargeC) = L(y, Block::ChargeC).cwiseQuotient(g.capacitance);
  L(grad, Block::Potential) = apply_stiffness(field_, L(y, Block::Potential));
  return grad;
}

Vector CoupledSystem::dissipation_coupling(const Vector& ydot) const {
  check(ydot, "state rate");
  const auto& g = graph_;
  const auto& L = layout_;
  const Vector psi_dot = L(ydot, Block::Psi);
  const Vector qm_dot = L(ydot, Block::ChargeM);
  const Vector a_dot = L(ydot, Block::Potential);
  const auto resistive = resistive_branch_current(g, resistive_voltages(ydot));

  Vector c(L.size());
  L(c, Block::Psi) = resistive_incidence_ * resistive.current + g.capacitors.incidence * L(ydot, Block::ChargeC) +
                     g.vsources.incidence * L(ydot, Block::ChargeV) + g.devices.incidence * qm_dot;
  L(c, Block::ChargeC) = -(g.capacitors.incidence.transpose() * psi_dot);
  L(c, Block::ChargeV) = -(g.vsources.incidence.transpose() * psi_dot);
  L(c, Block::ChargeM) = -(g.devices.incidence.transpose() * psi_dot) + field_.winding.transpose() * a_dot;
  L(c, Block::Potential) = field_.mass * a_dot - field_.winding * qm_dot;
  return c;
}

Vector CoupledSystem::source_vector(double t) const {
  Vector f = Vector::Zero(layout_.size());
  layout_(f, Block::Psi) = -(graph_.isources.incidence * sources_.currents(t));
  layout_(f, Block::ChargeV) = -sources_.voltages(t);
  return f;
}

PowerBreakdown CoupledSystem::power_breakdown(const Vector& y, const Vector& ydot, double t) const {
  check(ydot, "state rate");
  const auto& L = layout_;
  const Vector psi_dot = L(ydot, Block::Psi);
  const Vector a_dot = L(ydot, Block::Potential);

  PowerBreakdown p;
  p.dH_dt = energy_gradient(y).dot(ydot);
  p.resistive_loss = resistive_dissipation(graph_, resistive_voltages(ydot));
  p.eddy_loss = eddy_power(field_, a_dot);
  p.source_power_I = (graph_.isources.incidence.transpose() * psi_dot).dot(sources_.currents(t));
  p.source_power_V = sources_.voltages(t).dot(L(ydot, Block::ChargeV));
  p.residual = p.dH_dt + p.resistive_loss + p.eddy_loss + p.source_power_I + p.source_power_V;
  return p;
}

CoupledSystem assemble_coupled(CircuitGraph graph, FieldModel field, SourceSet sources,
                               std::span<const int> winding_of_branch) {
  const int n_m = graph.devices.size();
  if (n_m != field.winding_count())
    throw InputError("device branches (" + std::to_string(n_m) + ") do not match field windings (" +
                     std::to_string(field.winding_count()) + ")");
  if (!winding_of_branch.empty()) {
    if (static_cast<int>(winding_of_branch.size()) != n_m)
      throw InputError("terminal map must bind every device branch to one winding");
    std::vector<bool> used(n_m, false);
    Triplets t;
    for (int k = 0; k < n_m; ++k) {
      const int w = winding_of_branch[k];
      if (w < 0 || w >= n_m) throw InputError("terminal map references winding " + std::to_string(w + 1));
      if (used[w]) throw InputError("winding " + std::to_string(w + 1) + " is bound to more than one branch");
      used[w] = true;
      for (SparseMatrix::InnerIterator it(field.winding, w); it; ++it) t.emplace_back(it.row(), k, it.value());
    }
    SparseMatrix x(field.winding.rows(), n_m);
    x.setFromTriplets(t.begin(), t.end());
    x.makeCompressed();
    field.winding = std::move(x);
    WindingSpec reordered;
    for (int k = 0; k < n_m; ++k) reordered.windings.push_back(field.windings.windings.at(winding_of_branch[k]));
    field.windings = std::move(reordered);
  }
  return CoupledSystem(std::move(graph), std::move(field), std::move(sources));
}

}  // namespace mona
