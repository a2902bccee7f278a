#pragma once

// Glue between text inputs and the solver: field resolution for device
// elements, probe expressions, and the built-in rectifier scenario.

#include "mona/coupled.hpp"
#include "mona/integrator.hpp"
#include "mona/netlist.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mona {

// FIELD=builtin selects the built-in transformer; anything else is a mesh
// file path, relative to `base_dir` unless absolute. `mesh_override`, when
// set, replaces every FIELD reference.
struct FieldSource {
  std::string base_dir = ".";
  std::optional<std::string> mesh_override;
  TransformerParams builtin;
};

FieldModel resolve_field(const std::string& ref, const FieldSource& source);

struct Circuit {
  ParsedNetlist netlist;
  CircuitGraph graph;
};

// Parses and stamps; throws ParseError/InputError.
Circuit load_circuit(std::string_view netlist_text);

// Adds the field model (at most one device element) and sources.
CoupledSystem build_system(const Circuit& circuit, const FieldSource& source);

// Probe syntax: name=expr with expr one of
//   psi(n)      magnetic node potential [Wb]
//   v(n)        node voltage, step average [V]
//   v(n1,n2)    voltage between two nodes, step average [V]
//   i(elem)     branch current [A] (step average except for inductors and current sources)
//   q(elem)     branch charge of a C, V or M branch [C]
// Device windings are addressed as <name>.w1, <name>.w2, ...
Probe make_probe(const std::string& spec, const Circuit& circuit);

// Comma-separated list of probe specs (commas inside parentheses are kept).
std::vector<Probe> parse_probes(const std::string& list, const Circuit& circuit);

// Full-wave rectifier: sinusoidal source on the primary, diode bridge on the
// secondary, resistive load between node 4 and ground.
std::string rectifier_netlist();
TransformerParams rectifier_transformer();
inline constexpr const char* kRectifierProbes = "v_src=v(1),v_R=v(4),psi4=psi(4),i_V=i(src)";

}  // namespace mona
