#pragma once

// Minimal SPICE-like netlist format, one element per line:
//
//   R name n+ n- <ohm>
//   C name n+ n- <farad>
//   L name n+ n- <henry>
//   V name n+ n- SIN(<amp> <freq> [<phase rad>]) | DC <volt> | <volt>
//   I name n+ n- SIN(<amp> <freq> [<phase rad>]) | DC <amp>  | <amp>
//   D name n+ n- [IS=<A>] [VT=<V>] [RP=<ohm>]
//   M name w1+ w1- [w2+ w2- ...] FIELD=<mesh reference>
//
// '#' starts a comment. Keywords are case-insensitive. Numbers accept the
// suffixes f p n u m k meg g t. Nodes are names; "0" and "gnd" are ground,
// other names get ids 1, 2, ... in order of first appearance.

#include "mona/circuit.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mona {

struct ParsedNetlist {
  std::vector<NetlistElement> elements;
  std::vector<int> lines;               // source line of each element
  std::vector<std::string> node_names;  // node_names[id]; id 0 is ground ("0")

  int node_count() const { return static_cast<int>(node_names.size()) - 1; }
  // Throws InputError for unknown names.
  int node_id(std::string_view name) const;
  const NetlistElement* find(std::string_view name) const;
};

ParsedNetlist parse_netlist(std::string_view text);

// Canonical text form; parse_netlist(serialize_netlist(n)) reproduces n.
std::string serialize_netlist(const ParsedNetlist& netlist);

double parse_number(std::string_view token);

}  // namespace mona
