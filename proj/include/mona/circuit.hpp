#pragma once

// Circuit topology and branch constitutive laws in magnetic-oriented variables.
//
// States are magnetic node potentials psi (time integrals of the electric node
// potentials) and branch charges q. Voltages and currents are their time
// derivatives: u = d/dt psi, v_* = A_*^T u, i_* = d/dt q_*.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <span>
#include <string>
#include <vector>

namespace mona {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Independent source waveform: DC level or value = amplitude * sin(2 pi f t + phase).
struct Waveform {
  enum class Kind { Dc, Sine };

  Kind kind = Kind::Dc;
  double value = 0.0;
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;

  static Waveform dc(double value);
  static Waveform sine(double amplitude, double frequency, double phase = 0.0);

  double operator()(double t) const;
};

// i(v) = Is (exp(v / Vth) - 1) + v / Rpar
struct DiodeParams {
  double saturation_current = 1e-14;
  double thermal_voltage = 2.5e-2;
  double parallel_resistance = 1e12;
};

enum class ElementKind { Resistor, Capacitor, Inductor, VoltageSource, CurrentSource, Diode, Device };

char element_letter(ElementKind kind);

struct NetlistElement {
  ElementKind kind = ElementKind::Resistor;
  std::string name;
  // Two entries {plus, minus} for two-terminal elements; for a device, one
  // {plus, minus} pair per winding. Node 0 is ground.
  std::vector<int> nodes;
  // Resistor: conductance [S]. Capacitor: capacitance [F]. Inductor: inductance [H].
  double value = 0.0;
  Waveform waveform;    // V and I sources
  DiodeParams diode;    // D
  std::string field_ref;  // M: which field model the windings belong to

  int winding_count() const { return static_cast<int>(nodes.size()) / 2; }
};

// One class of branches: its reduced incidence matrix (n_nodes x branches,
// ground row dropped) and branch names in netlist order.
struct BranchGroup {
  SparseMatrix incidence;
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
};

struct CircuitGraph {
  int n_nodes = 0;

  BranchGroup resistors;  // linear part of the resistive partition
  BranchGroup diodes;     // nonlinear part of the resistive partition
  BranchGroup capacitors;
  BranchGroup inductors;
  BranchGroup vsources;
  BranchGroup isources;
  BranchGroup devices;  // one branch per field-device winding

  Vector conductance;     // per linear resistor [S]
  Vector capacitance;     // per capacitor [F]
  Vector inv_inductance;  // per inductor [1/H]
  std::vector<DiodeParams> diode_params;

  int resistive_count() const { return resistors.size() + diodes.size(); }
};

// Stamps one incidence column per branch (+1 at node_plus, -1 at node_minus,
// ground entries dropped). Throws InputError on unknown nodes, non-positive
// parameters, duplicate names, or nodes not connected to ground.
CircuitGraph build_incidence(std::span<const NetlistElement> elements, int n_nodes);

struct TopologyReport {
  bool ok = true;
  std::vector<std::string> problems;   // human-readable, one per finding
  std::vector<std::string> offending;  // element names involved in any finding
};

// Flags loops made only of voltage sources, cutsets made only of current
// sources, and nodes without a path to ground.
TopologyReport validate_topology(const CircuitGraph& graph);

struct DiodeEval {
  double current;
  double conductance;  // di/dv
};

// Diode law with a linear continuation of the exponential above v/Vth = 500.
DiodeEval diode_current(const DiodeParams& p, double v);

struct ResistiveEval {
  Vector current;      // [A]
  Vector conductance;  // di/dv [S]
};

// v_branch holds the linear resistor voltages followed by the diode voltages.
ResistiveEval resistive_branch_current(const CircuitGraph& graph, const Vector& v_branch);

// Sum of i_k(v_k) v_k over the resistive partition; non-negative.
double resistive_dissipation(const CircuitGraph& graph, const Vector& v_branch);

// 1/2 |A_L^T psi|^2_{L^-1} + 1/2 |q_C|^2_{C^-1}
double circuit_energy(const CircuitGraph& graph, const Vector& psi, const Vector& q_c);

}  // namespace mona
