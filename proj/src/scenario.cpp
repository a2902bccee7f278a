#include "mona/scenario.hpp"

#include "mona/error.hpp"
#include "mona/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <regex>
#include <utility>

namespace mona {

FieldModel resolve_field(const std::string& ref, const FieldSource& source) {
  const std::string chosen = source.mesh_override.value_or(ref);
  if (chosen == "builtin") {
    auto geo = generate_transformer_mesh(source.builtin);
    return build_field_model(std::move(geo.mesh), std::move(geo.materials), std::move(geo.windings));
  }
  std::filesystem::path path(chosen);
  if (path.is_relative() && !source.mesh_override) path = std::filesystem::path(source.base_dir) / path;
  auto input = read_mesh_file(path.string());
  return build_field_model(std::move(input.mesh), std::move(input.materials), std::move(input.windings));
}

Circuit load_circuit(std::string_view netlist_text) {
  Circuit c;
  c.netlist = parse_netlist(netlist_text);
  c.graph = build_incidence(c.netlist.elements, c.netlist.node_count());
  return c;
}

CoupledSystem build_system(const Circuit& circuit, const FieldSource& source) {
  const NetlistElement* device = nullptr;
  for (const auto& e : circuit.netlist.elements) {
    if (e.kind != ElementKind::Device) continue;
    if (device) throw InputError("only one field device per circuit is supported (" + device->name + ", " + e.name + ")");
    device = &e;
  }
  FieldModel field;
  if (device) {
    field = resolve_field(device->field_ref, source);
    if (field.winding_count() != device->winding_count())
      throw InputError("device " + device->name + " has " + std::to_string(device->winding_count()) +
                       " terminal pairs but its field model has " + std::to_string(field.winding_count()) +
                       " windings");
  }
  return assemble_coupled(circuit.graph, std::move(field), collect_sources(circuit.netlist.elements));
}

namespace {

struct BranchRef {
  ElementKind kind;
  int index;                                  // column within its group
  std::vector<std::pair<int, double>> column; // (psi row, incidence entry)
};

BranchRef find_branch(const Circuit& c, const std::string& name) {
  const auto& g = c.graph;
  const std::pair<ElementKind, const BranchGroup*> groups[] = {
      {ElementKind::Resistor, &g.resistors},     {ElementKind::Diode, &g.diodes},
      {ElementKind::Capacitor, &g.capacitors},   {ElementKind::Inductor, &g.inductors},
      {ElementKind::VoltageSource, &g.vsources}, {ElementKind::CurrentSource, &g.isources},
      {ElementKind::Device, &g.devices}};
  for (const auto& [kind, group] : groups)
    for (int k = 0; k < group->size(); ++k)
      if (group->names[k] == name) {
        BranchRef ref{kind, k, {}};
        for (SparseMatrix::InnerIterator it(group->incidence, k); it; ++it)
          ref.column.emplace_back(static_cast<int>(it.row()), it.value());
        return ref;
      }
  throw InputError("probe references unknown branch '" + name + "'");
}

double branch_voltage(const BranchRef& b, const Vector& rate) {
  double v = 0.0;
  for (const auto& [row, sign] : b.column) v += sign * rate[row];
  return v;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  return s.substr(first, s.find_last_not_of(" \t") - first + 1);
}

}  // namespace

Probe make_probe(const std::string& spec, const Circuit& circuit) {
  static const std::regex pattern(R"(^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([A-Za-z]+)\s*\(([^)]*)\)\s*$)");
  std::smatch m;
  if (!std::regex_match(spec, m, pattern)) throw InputError("malformed probe '" + spec + "' (expected name=f(args))");
  Probe p;
  p.name = m[1];
  std::string fn = m[2];
  std::transform(fn.begin(), fn.end(), fn.begin(), [](unsigned char ch) { return std::tolower(ch); });
  std::vector<std::string> args;
  {
    std::string arg;
    for (char ch : std::string(m[3])) {
      if (ch == ',') {
        args.push_back(trim(arg));
        arg.clear();
      } else {
        arg += ch;
      }
    }
    args.push_back(trim(arg));
  }

  const int n_nodes = circuit.netlist.node_count();
  auto node_row = [&](const std::string& name) { return circuit.netlist.node_id(name) - 1; };

  if (fn == "psi" && args.size() == 1) {
    const int row = node_row(args[0]);
    p.eval = [row](const CoupledSystem&, const Vector& y, const Vector&, double) { return row < 0 ? 0.0 : y[row]; };
  } else if (fn == "v" && (args.size() == 1 || args.size() == 2)) {
    const int plus = node_row(args[0]);
    const int minus = args.size() == 2 ? node_row(args[1]) : -1;
    p.uses_rate = true;
    p.eval = [plus, minus](const CoupledSystem&, const Vector&, const Vector& rate, double) {
      return (plus < 0 ? 0.0 : rate[plus]) - (minus < 0 ? 0.0 : rate[minus]);
    };
  } else if ((fn == "i" || fn == "q") && args.size() == 1) {
    const BranchRef b = find_branch(circuit, args[0]);
    const int k = b.index;
    const auto& g = circuit.graph;
    Eigen::Index charge_offset = -1;
    if (b.kind == ElementKind::Capacitor) charge_offset = n_nodes + k;
    if (b.kind == ElementKind::VoltageSource) charge_offset = n_nodes + g.capacitors.size() + k;
    if (b.kind == ElementKind::Device) charge_offset = n_nodes + g.capacitors.size() + g.vsources.size() + k;

    if (fn == "q") {
      if (charge_offset < 0) throw InputError("q() needs a capacitor, voltage source or device winding");
      p.eval = [charge_offset](const CoupledSystem&, const Vector& y, const Vector&, double) {
        return y[charge_offset];
      };
    } else if (charge_offset >= 0) {
      p.uses_rate = true;
      p.eval = [charge_offset](const CoupledSystem&, const Vector&, const Vector& rate, double) {
        return rate[charge_offset];
      };
    } else if (b.kind == ElementKind::Resistor) {
      const double gk = g.conductance[k];
      p.uses_rate = true;
      p.eval = [b, gk](const CoupledSystem&, const Vector&, const Vector& rate, double) {
        return gk * branch_voltage(b, rate);
      };
    } else if (b.kind == ElementKind::Diode) {
      const DiodeParams d = g.diode_params[k];
      p.uses_rate = true;
      p.eval = [b, d](const CoupledSystem&, const Vector&, const Vector& rate, double) {
        return diode_current(d, branch_voltage(b, rate)).current;
      };
    } else if (b.kind == ElementKind::Inductor) {
      const double inv_l = g.inv_inductance[k];
      p.eval = [b, inv_l](const CoupledSystem&, const Vector& y, const Vector&, double) {
        return inv_l * branch_voltage(b, y);
      };
    } else {
      p.eval = [k](const CoupledSystem& sys, const Vector&, const Vector&, double t) {
        return sys.sources().current[static_cast<std::size_t>(k)](t);
      };
    }
  } else {
    throw InputError("unknown probe function in '" + spec + "'");
  }
  return p;
}

std::vector<Probe> parse_probes(const std::string& list, const Circuit& circuit) {
  std::vector<Probe> probes;
  std::string current;
  int depth = 0;
  auto flush = [&] {
    if (!trim(current).empty()) probes.push_back(make_probe(current, circuit));
    current.clear();
  };
  for (char ch : list) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == ',' && depth == 0) {
      flush();
      continue;
    }
    current += ch;
  }
  flush();
  for (std::size_t a = 0; a < probes.size(); ++a)
    for (std::size_t b = a + 1; b < probes.size(); ++b)
      if (probes[a].name == probes[b].name) throw InputError("duplicate probe name " + probes[a].name);
  return probes;
}

std::string rectifier_netlist() {
  return R"(# Full-wave rectifier: source on the transformer primary, diode bridge
# on the secondary, load resistor from node 4 to ground.
V src 1 0 SIN(160 60)
M xfmr 1 0 2 3 FIELD=builtin
D d1 2 4 IS=1e-14 VT=0.025 RP=1e12
D d2 3 4 IS=1e-14 VT=0.025 RP=1e12
D d3 0 2 IS=1e-14 VT=0.025 RP=1e12
D d4 0 3 IS=1e-14 VT=0.025 RP=1e12
R load 4 0 10
)";
}

TransformerParams rectifier_transformer() { return TransformerParams{}; }

}  // namespace mona
