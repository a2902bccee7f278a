#include "mona/circuit.hpp"

#include "mona/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <set>
#include <utility>

namespace mona {

Waveform Waveform::dc(double value) {
  Waveform w;
  w.kind = Kind::Dc;
  w.value = value;
  return w;
}

Waveform Waveform::sine(double amplitude, double frequency, double phase) {
  Waveform w;
  w.kind = Kind::Sine;
  w.amplitude = amplitude;
  w.frequency = frequency;
  w.phase = phase;
  return w;
}

double Waveform::operator()(double t) const {
  if (kind == Kind::Dc) return value;
  return amplitude * std::sin(2.0 * std::numbers::pi * frequency * t + phase);
}

char element_letter(ElementKind kind) {
  switch (kind) {
    case ElementKind::Resistor: return 'R';
    case ElementKind::Capacitor: return 'C';
    case ElementKind::Inductor: return 'L';
    case ElementKind::VoltageSource: return 'V';
    case ElementKind::CurrentSource: return 'I';
    case ElementKind::Diode: return 'D';
    case ElementKind::Device: return 'M';
  }
  return '?';
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<int> parent_;
};

struct Edge {
  int plus;
  int minus;
  std::string name;
};

// Recovers branch endpoints (0 = ground) from an incidence matrix.
std::vector<Edge> edges_of(const BranchGroup& group) {
  std::vector<Edge> edges;
  edges.reserve(group.size());
  for (int k = 0; k < group.size(); ++k) {
    Edge e{0, 0, group.names[k]};
    for (SparseMatrix::InnerIterator it(group.incidence, k); it; ++it) {
      if (it.value() > 0) e.plus = static_cast<int>(it.row()) + 1;
      else e.minus = static_cast<int>(it.row()) + 1;
    }
    edges.push_back(std::move(e));
  }
  return edges;
}

// Branch names on the path from `from` to `to` within a forest given as
// adjacency lists of (neighbor, branch name).
std::vector<std::string> forest_path(const std::vector<std::vector<std::pair<int, std::string>>>& adj,
                                     int from, int to) {
  std::vector<int> prev(adj.size(), -1);
  std::vector<std::string> via(adj.size());
  std::queue<int> open;
  open.push(from);
  prev[from] = from;
  while (!open.empty()) {
    int n = open.front();
    open.pop();
    if (n == to) break;
    for (const auto& [m, name] : adj[n]) {
      if (prev[m] != -1) continue;
      prev[m] = n;
      via[m] = name;
      open.push(m);
    }
  }
  std::vector<std::string> path;
  for (int n = to; n != from && prev[n] != -1; n = prev[n]) path.push_back(via[n]);
  std::reverse(path.begin(), path.end());
  return path;
}

struct GroupBuilder {
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<std::string> names;

  void add(int plus, int minus, std::string name) {
    int col = static_cast<int>(names.size());
    if (plus != 0) triplets.emplace_back(plus - 1, col, 1.0);
    if (minus != 0) triplets.emplace_back(minus - 1, col, -1.0);
    names.push_back(std::move(name));
  }

  BranchGroup finish(int n_nodes) {
    BranchGroup g;
    g.incidence.resize(n_nodes, static_cast<Eigen::Index>(names.size()));
    g.incidence.setFromTriplets(triplets.begin(), triplets.end());
    g.incidence.makeCompressed();
    g.names = std::move(names);
    return g;
  }
};

void require_positive(double x, const NetlistElement& e, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw InputError("element " + e.name + ": " + what + " must be positive, got " + std::to_string(x));
}

}  // namespace

CircuitGraph build_incidence(std::span<const NetlistElement> elements, int n_nodes) {
  if (elements.empty()) throw InputError("circuit has no elements");
  if (n_nodes < 0) throw InputError("negative node count");

  std::set<std::string> seen;
  GroupBuilder r, d, c, l, v, i, m;
  std::vector<double> conductance, capacitance, inv_inductance;
  std::vector<DiodeParams> diode_params;
  DisjointSets connected(n_nodes + 1);

  for (const auto& e : elements) {
    if (!seen.insert(e.name).second) throw InputError("duplicate element name " + e.name);
    const bool device = e.kind == ElementKind::Device;
    if (device ? (e.nodes.empty() || e.nodes.size() % 2 != 0) : e.nodes.size() != 2)
      throw InputError("element " + e.name + ": wrong number of terminals");
    for (int node : e.nodes)
      if (node < 0 || node > n_nodes)
        throw InputError("element " + e.name + ": unknown node id " + std::to_string(node));
    for (std::size_t k = 0; k < e.nodes.size(); k += 2) {
      if (e.nodes[k] == e.nodes[k + 1])
        throw InputError("element " + e.name + ": both terminals on node " + std::to_string(e.nodes[k]));
      connected.unite(e.nodes[k], e.nodes[k + 1]);
    }

    const int plus = e.nodes[0];
    const int minus = e.nodes[1];
    switch (e.kind) {
      case ElementKind::Resistor:
        require_positive(e.value, e, "conductance");
        r.add(plus, minus, e.name);
        conductance.push_back(e.value);
        break;
      case ElementKind::Capacitor:
        require_positive(e.value, e, "capacitance");
        c.add(plus, minus, e.name);
        capacitance.push_back(e.value);
        break;
      case ElementKind::Inductor:
        require_positive(e.value, e, "inductance");
        l.add(plus, minus, e.name);
        inv_inductance.push_back(1.0 / e.value);
        break;
      case ElementKind::VoltageSource:
        v.add(plus, minus, e.name);
        break;
      case ElementKind::CurrentSource:
        i.add(plus, minus, e.name);
        break;
      case ElementKind::Diode:
        require_positive(e.diode.saturation_current, e, "IS");
        require_positive(e.diode.thermal_voltage, e, "VT");
        require_positive(e.diode.parallel_resistance, e, "RP");
        d.add(plus, minus, e.name);
        diode_params.push_back(e.diode);
        break;
      case ElementKind::Device:
        for (int w = 0; w < e.winding_count(); ++w)
          m.add(e.nodes[2 * w], e.nodes[2 * w + 1], e.name + ".w" + std::to_string(w + 1));
        break;
    }
  }

  std::vector<int> floating;
  for (int n = 1; n <= n_nodes; ++n)
    if (connected.find(n) != connected.find(0)) floating.push_back(n);
  if (!floating.empty()) {
    std::string list;
    for (int n : floating) list += (list.empty() ? "" : ", ") + std::to_string(n);
    throw InputError("nodes not connected to ground: " + list);
  }

  CircuitGraph g;
  g.n_nodes = n_nodes;
  g.resistors = r.finish(n_nodes);
  g.diodes = d.finish(n_nodes);
  g.capacitors = c.finish(n_nodes);
  g.inductors = l.finish(n_nodes);
  g.vsources = v.finish(n_nodes);
  g.isources = i.finish(n_nodes);
  g.devices = m.finish(n_nodes);
  g.conductance = Eigen::Map<const Vector>(conductance.data(), static_cast<Eigen::Index>(conductance.size()));
  g.capacitance = Eigen::Map<const Vector>(capacitance.data(), static_cast<Eigen::Index>(capacitance.size()));
  g.inv_inductance =
      Eigen::Map<const Vector>(inv_inductance.data(), static_cast<Eigen::Index>(inv_inductance.size()));
  g.diode_params = std::move(diode_params);
  return g;
}

TopologyReport validate_topology(const CircuitGraph& graph) {
  TopologyReport report;
  const int nodes = graph.n_nodes + 1;
  std::set<std::string> offending;

  auto flag = [&](std::string problem, const std::vector<std::string>& names) {
    report.ok = false;
    for (const auto& n : names) {
      problem += (problem.back() == ':' ? " " : ", ") + n;
      offending.insert(n);
    }
    report.problems.push_back(std::move(problem));
  };

  // Loops of voltage sources only.
  {
    DisjointSets sets(nodes);
    std::vector<std::vector<std::pair<int, std::string>>> forest(nodes);
    for (const auto& e : edges_of(graph.vsources)) {
      if (sets.unite(e.plus, e.minus)) {
        forest[e.plus].emplace_back(e.minus, e.name);
        forest[e.minus].emplace_back(e.plus, e.name);
        continue;
      }
      auto loop = forest_path(forest, e.plus, e.minus);
      loop.push_back(e.name);
      flag("loop of voltage sources:", loop);
    }
  }

  const BranchGroup* conducting[] = {&graph.resistors,  &graph.diodes,   &graph.capacitors,
                                     &graph.inductors,  &graph.vsources, &graph.devices};

  // Cutsets of current sources only: components of the graph without I
  // branches that do not contain ground.
  {
    DisjointSets sets(nodes);
    for (const auto* group : conducting)
      for (const auto& e : edges_of(*group)) sets.unite(e.plus, e.minus);
    std::set<int> cut_roots;
    for (int n = 1; n < nodes; ++n)
      if (sets.find(n) != sets.find(0)) cut_roots.insert(sets.find(n));
    for (int root : cut_roots) {
      std::vector<std::string> sources;
      for (const auto& e : edges_of(graph.isources))
        if ((sets.find(e.plus) == root) != (sets.find(e.minus) == root)) sources.push_back(e.name);
      if (!sources.empty()) flag("cutset of current sources:", sources);
    }
  }

  // Ground reachability over all branches.
  {
    DisjointSets sets(nodes);
    for (const auto* group : conducting)
      for (const auto& e : edges_of(*group)) sets.unite(e.plus, e.minus);
    for (const auto& e : edges_of(graph.isources)) sets.unite(e.plus, e.minus);
    std::vector<std::string> floating;
    for (int n = 1; n < nodes; ++n)
      if (sets.find(n) != sets.find(0)) floating.push_back("node " + std::to_string(n));
    if (!floating.empty()) {
      report.ok = false;
      std::string problem = "no path to ground:";
      for (const auto& f : floating) problem += (problem.back() == ':' ? " " : ", ") + f;
      report.problems.push_back(std::move(problem));
    }
  }

  report.offending.assign(offending.begin(), offending.end());
  return report;
}

DiodeEval diode_current(const DiodeParams& p, double v) {
  constexpr double kLimit = 500.0;
  const double x = v / p.thermal_voltage;
  const double g_par = 1.0 / p.parallel_resistance;
  if (x > kLimit) {
    const double e = std::exp(kLimit);
    return {p.saturation_current * (e * (1.0 + (x - kLimit)) - 1.0) + v * g_par,
            p.saturation_current * e / p.thermal_voltage + g_par};
  }
  const double e = std::exp(x);
  return {p.saturation_current * std::expm1(x) + v * g_par, p.saturation_current * e / p.thermal_voltage + g_par};
}

ResistiveEval resistive_branch_current(const CircuitGraph& graph, const Vector& v_branch) {
  const int n_r = graph.resistors.size();
  const int n_d = graph.diodes.size();
  if (v_branch.size() != n_r + n_d) throw InputError("resistive branch voltage vector has wrong length");

  ResistiveEval out{Vector(n_r + n_d), Vector(n_r + n_d)};
  out.current.head(n_r) = graph.conductance.cwiseProduct(v_branch.head(n_r));
  out.conductance.head(n_r) = graph.conductance;
  for (int k = 0; k < n_d; ++k) {
    const auto [i, g] = diode_current(graph.diode_params[k], v_branch[n_r + k]);
    out.current[n_r + k] = i;
    out.conductance[n_r + k] = g;
  }
  return out;
}

double resistive_dissipation(const CircuitGraph& graph, const Vector& v_branch) {
  return resistive_branch_current(graph, v_branch).current.dot(v_branch);
}

double circuit_energy(const CircuitGraph& graph, const Vector& psi, const Vector& q_c) {
  if (psi.size() != graph.n_nodes || q_c.size() != graph.capacitors.size())
    throw InputError("circuit_energy: state dimensions do not match the graph");
  const Vector flux = graph.inductors.incidence.transpose() * psi;
  return 0.5 * flux.dot(graph.inv_inductance.cwiseProduct(flux)) +
         0.5 * q_c.dot(q_c.cwiseQuotient(graph.capacitance));
}

}  // namespace mona
