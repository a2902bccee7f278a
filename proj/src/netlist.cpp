#include "mona/netlist.hpp"

#include "mona/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace mona {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    int depth = 0;
    // Parenthesized groups such as SIN(160 60) stay one token.
    while (j < line.size() && (depth > 0 || !std::isspace(static_cast<unsigned char>(line[j])))) {
      if (line[j] == '(') ++depth;
      if (line[j] == ')') --depth;
      ++j;
    }
    tokens.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_ground(std::string_view name) {
  const auto l = lower(name);
  return l == "0" || l == "gnd";
}

class Parser {
 public:
  ParsedNetlist run(std::string_view text) {
    out_.node_names = {"0"};
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      auto tokens = tokenize(line);
      if (tokens.empty()) continue;
      line_ = line_no;
      element(tokens);
      if (end == text.size()) break;
    }
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  double number(std::string_view token) const {
    try {
      return parse_number(token);
    } catch (const InputError&) {
      fail("invalid number '" + std::string(token) + "'");
    }
  }

  double positive(std::string_view token, const char* what) const {
    const double v = number(token);
    if (!(v > 0.0)) fail(std::string(what) + " must be positive, got " + std::string(token));
    return v;
  }

  int node(const std::string& name) {
    if (is_ground(name)) return 0;
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(out_.node_names.size());
    out_.node_names.push_back(name);
    ids_.emplace(name, id);
    return id;
  }

  Waveform waveform(const std::vector<std::string>& args) const {
    if (args.empty()) fail("source needs a waveform");
    const std::string head = lower(args[0]);
    if (head.rfind("sin(", 0) == 0) {
      if (args.size() != 1 || head.back() != ')') fail("malformed SIN(...)");
      const auto inner = tokenize(std::string_view(args[0]).substr(4, args[0].size() - 5));
      if (inner.size() < 2 || inner.size() > 3) fail("SIN needs amplitude, frequency and optional phase");
      const double amp = number(inner[0]);
      const double freq = number(inner[1]);
      if (!(freq >= 0.0)) fail("SIN frequency must be non-negative");
      return Waveform::sine(amp, freq, inner.size() == 3 ? number(inner[2]) : 0.0);
    }
    if (head == "dc") {
      if (args.size() != 2) fail("DC needs exactly one value");
      return Waveform::dc(number(args[1]));
    }
    if (args.size() != 1) fail("unexpected tokens after source value");
    return Waveform::dc(number(args[0]));
  }

  void element(const std::vector<std::string>& t) {
    const std::string kw = lower(t[0]);
    if (kw.size() != 1) fail("unknown element keyword '" + t[0] + "'");
    NetlistElement e;
    switch (kw[0]) {
      case 'r': e.kind = ElementKind::Resistor; break;
      case 'c': e.kind = ElementKind::Capacitor; break;
      case 'l': e.kind = ElementKind::Inductor; break;
      case 'v': e.kind = ElementKind::VoltageSource; break;
      case 'i': e.kind = ElementKind::CurrentSource; break;
      case 'd': e.kind = ElementKind::Diode; break;
      case 'm': e.kind = ElementKind::Device; break;
      default: fail("unknown element keyword '" + t[0] + "'");
    }
    if (t.size() < 4) fail("element needs a name and two nodes");
    e.name = t[1];
    if (!names_.insert(lower(e.name)).second) fail("duplicate element name " + e.name);

    if (e.kind == ElementKind::Device) {
      std::size_t k = 2;
      std::vector<std::string> terminals;
      for (; k < t.size(); ++k) {
        if (lower(t[k]).rfind("field=", 0) == 0) break;
        terminals.push_back(t[k]);
      }
      if (k == t.size()) fail("device " + e.name + " is missing FIELD=<mesh reference>");
      if (k + 1 != t.size()) fail("unexpected tokens after FIELD reference");
      e.field_ref = t[k].substr(6);
      if (e.field_ref.empty()) fail("empty FIELD reference");
      if (terminals.empty() || terminals.size() % 2 != 0) fail("device terminals must come in pairs");
      for (const auto& name : terminals) e.nodes.push_back(node(name));
    } else {
      e.nodes = {node(t[2]), node(t[3])};
      const std::vector<std::string> args(t.begin() + 4, t.end());
      switch (e.kind) {
        case ElementKind::Resistor:
          if (args.size() != 1) fail("resistor needs one value");
          e.value = 1.0 / positive(args[0], "resistance");
          break;
        case ElementKind::Capacitor:
          if (args.size() != 1) fail("capacitor needs one value");
          e.value = positive(args[0], "capacitance");
          break;
        case ElementKind::Inductor:
          if (args.size() != 1) fail("inductor needs one value");
          e.value = positive(args[0], "inductance");
          break;
        case ElementKind::VoltageSource:
        case ElementKind::CurrentSource: e.waveform = waveform(args); break;
        case ElementKind::Diode:
          for (const auto& a : args) {
            const auto eq = a.find('=');
            if (eq == std::string::npos) fail("diode parameters are KEY=value");
            const std::string key = lower(a.substr(0, eq));
            const std::string val = a.substr(eq + 1);
            if (key == "is") e.diode.saturation_current = positive(val, "IS");
            else if (key == "vt") e.diode.thermal_voltage = positive(val, "VT");
            else if (key == "rp") e.diode.parallel_resistance = positive(val, "RP");
            else fail("unknown diode parameter " + a.substr(0, eq));
          }
          break;
        case ElementKind::Device: break;
      }
      if (e.nodes[0] == e.nodes[1]) fail("element " + e.name + " connects a node to itself");
    }
    out_.elements.push_back(std::move(e));
    out_.lines.push_back(line_);
  }

  ParsedNetlist out_;
  std::map<std::string, int> ids_;
  std::set<std::string> names_;
  int line_ = 0;
};

}  // namespace

double parse_number(std::string_view token) {
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) throw InputError("invalid number '" + std::string(token) + "'");
  const std::string suffix = lower(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
  static const std::map<std::string, double> scale = {
      {"", 1.0},   {"f", 1e-15}, {"p", 1e-12}, {"n", 1e-9},  {"u", 1e-6},
      {"m", 1e-3}, {"k", 1e3},   {"meg", 1e6}, {"g", 1e9},   {"t", 1e12}};
  auto it = scale.find(suffix);
  if (it == scale.end()) throw InputError("invalid number '" + std::string(token) + "'");
  value *= it->second;
  if (!std::isfinite(value)) throw InputError("invalid number '" + std::string(token) + "'");
  return value;
}

int ParsedNetlist::node_id(std::string_view name) const {
  if (is_ground(name)) return 0;
  for (std::size_t k = 1; k < node_names.size(); ++k)
    if (node_names[k] == name) return static_cast<int>(k);
  throw InputError("unknown node '" + std::string(name) + "'");
}

const NetlistElement* ParsedNetlist::find(std::string_view name) const {
  for (const auto& e : elements)
    if (lower(e.name) == lower(name)) return &e;
  return nullptr;
}

ParsedNetlist parse_netlist(std::string_view text) { return Parser().run(text); }

std::string serialize_netlist(const ParsedNetlist& netlist) {
  std::ostringstream out;
  auto node = [&](int id) { return netlist.node_names.at(static_cast<std::size_t>(id)); };
  auto wave = [](const Waveform& w) {
    if (w.kind == Waveform::Kind::Dc) return "DC " + fmt(w.value);
    return "SIN(" + fmt(w.amplitude) + " " + fmt(w.frequency) + " " + fmt(w.phase) + ")";
  };
  for (const auto& e : netlist.elements) {
    out << element_letter(e.kind) << ' ' << e.name;
    for (int n : e.nodes) out << ' ' << node(n);
    switch (e.kind) {
      case ElementKind::Resistor: out << ' ' << fmt(1.0 / e.value); break;
      case ElementKind::Capacitor:
      case ElementKind::Inductor: out << ' ' << fmt(e.value); break;
      case ElementKind::VoltageSource:
      case ElementKind::CurrentSource: out << ' ' << wave(e.waveform); break;
      case ElementKind::Diode:
        out << " IS=" << fmt(e.diode.saturation_current) << " VT=" << fmt(e.diode.thermal_voltage)
            << " RP=" << fmt(e.diode.parallel_resistance);
        break;
      case ElementKind::Device: out << " FIELD=" << e.field_ref; break;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace mona
