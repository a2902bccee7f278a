#include "mona/mesh_io.hpp"

#include "mona/error.hpp"
#include "mona/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace mona {

namespace {

struct Token {
  std::string text;
  int line;
};

class TokenStream {
 public:
  explicit TokenStream(std::string_view text) {
    int line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (c == '\n') {
        ++line;
        ++i;
      } else if (c == '#') {
        while (i < text.size() && text[i] != '\n') ++i;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else {
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '#') ++j;
        tokens_.push_back({std::string(text.substr(i, j - i)), line});
        i = j;
      }
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }
  int line() const { return done() ? (tokens_.empty() ? 1 : tokens_.back().line) : tokens_[pos_].line; }
  const std::string& peek() const { return tokens_.at(pos_).text; }

  std::string next(const char* what) {
    if (done()) throw ParseError(line(), std::string("unexpected end of mesh file, expected ") + what);
    return tokens_[pos_++].text;
  }

  double number(const char* what) {
    const int at = line();
    const std::string t = next(what);
    try {
      return parse_number(t);
    } catch (const InputError&) {
      throw ParseError(at, std::string("invalid ") + what + " '" + t + "'");
    }
  }

  long integer(const char* what) {
    const int at = line();
    const std::string t = next(what);
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw ParseError(at, std::string("invalid ") + what + " '" + t + "'");
    return v;
  }

  void expect(const char* keyword) {
    const int at = line();
    const std::string t = next(keyword);
    if (t != keyword) throw ParseError(at, std::string("expected '") + keyword + "', got '" + t + "'");
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

struct Region {
  double nu;
  double sigma;
  int winding;
  int orientation;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

MeshInput parse_mesh(std::string_view text) {
  TokenStream in(text);
  MeshInput out;
  TriMesh& mesh = out.mesh;

  if (!in.done() && in.peek() == "depth") {
    in.next("depth");
    mesh.depth = in.number("depth");
  }

  in.expect("vertices");
  const long nv = in.integer("vertex count");
  if (nv < 3) throw ParseError(in.line(), "mesh needs at least three vertices");
  mesh.vertices.resize(static_cast<std::size_t>(nv));
  for (auto& p : mesh.vertices) {
    p.x = in.number("x coordinate");
    p.y = in.number("y coordinate");
  }

  in.expect("triangles");
  const long nt = in.integer("triangle count");
  if (nt < 1) throw ParseError(in.line(), "mesh needs at least one triangle");
  std::vector<long> region_of(static_cast<std::size_t>(nt));
  std::vector<int> region_line(static_cast<std::size_t>(nt));
  mesh.triangles.resize(static_cast<std::size_t>(nt));
  for (long t = 0; t < nt; ++t) {
    const int at = in.line();
    for (int k = 0; k < 3; ++k) {
      const long v = in.integer("vertex index");
      if (v < 0 || v >= nv) throw ParseError(at, "vertex index " + std::to_string(v) + " out of range");
      mesh.triangles[t][k] = static_cast<int>(v);
    }
    region_of[t] = in.integer("region id");
    region_line[t] = at;
  }

  in.expect("regions");
  const long nr = in.integer("region count");
  std::map<long, Region> regions;
  for (long r = 0; r < nr; ++r) {
    const int at = in.line();
    const long id = in.integer("region id");
    Region reg{};
    reg.nu = in.number("reluctivity");
    reg.sigma = in.number("conductivity");
    reg.winding = static_cast<int>(in.integer("winding id"));
    reg.orientation = static_cast<int>(in.integer("orientation"));
    if (!(reg.nu > 0.0)) throw ParseError(at, "reluctivity must be positive");
    if (!(reg.sigma >= 0.0)) throw ParseError(at, "conductivity must be non-negative");
    if (reg.winding < 0) throw ParseError(at, "winding id must be >= 0");
    if (reg.winding > 0 && reg.orientation != 1 && reg.orientation != -1)
      throw ParseError(at, "winding orientation must be +1 or -1");
    if (!regions.emplace(id, reg).second) throw ParseError(at, "duplicate region id " + std::to_string(id));
  }

  std::map<int, double> turns;
  if (!in.done() && in.peek() == "windings") {
    in.next("windings");
    const long nw = in.integer("winding count");
    for (long w = 0; w < nw; ++w) {
      const int at = in.line();
      const long id = in.integer("winding id");
      const double n = in.number("turns");
      if (id < 1 || id > nw) throw ParseError(at, "winding ids must be 1.." + std::to_string(nw));
      if (!(n > 0.0)) throw ParseError(at, "turns must be positive");
      if (!turns.emplace(static_cast<int>(id), n).second)
        throw ParseError(at, "duplicate winding id " + std::to_string(id));
    }
  }

  if (!in.done() && in.peek() == "boundary") {
    in.next("boundary");
    const long nb = in.integer("boundary count");
    for (long b = 0; b < nb; ++b) {
      const int at = in.line();
      const long v = in.integer("boundary vertex");
      if (v < 0 || v >= nv) throw ParseError(at, "boundary vertex " + std::to_string(v) + " out of range");
      mesh.boundary_vertices.push_back(static_cast<int>(v));
    }
    std::sort(mesh.boundary_vertices.begin(), mesh.boundary_vertices.end());
    mesh.boundary_vertices.erase(std::unique(mesh.boundary_vertices.begin(), mesh.boundary_vertices.end()),
                                 mesh.boundary_vertices.end());
  } else {
    mesh.boundary_vertices = detect_boundary(mesh);
  }
  if (!in.done()) throw ParseError(in.line(), "unexpected token '" + in.peek() + "'");

  out.materials.reluctivity.resize(static_cast<std::size_t>(nt));
  out.materials.conductivity.resize(static_cast<std::size_t>(nt));
  const int nw = static_cast<int>(turns.size());
  std::vector<std::vector<int>> tris(nw), signs(nw);
  for (long t = 0; t < nt; ++t) {
    auto it = regions.find(region_of[t]);
    if (it == regions.end()) throw ParseError(region_line[t], "unknown region id " + std::to_string(region_of[t]));
    const Region& reg = it->second;
    out.materials.reluctivity[t] = reg.nu;
    out.materials.conductivity[t] = reg.sigma;
    if (reg.winding > 0) {
      if (reg.winding > nw)
        throw ParseError(region_line[t], "region references undeclared winding " + std::to_string(reg.winding));
      tris[reg.winding - 1].push_back(static_cast<int>(t));
      signs[reg.winding - 1].push_back(reg.orientation);
    }
  }

  mesh.validate();
  for (int w = 0; w < nw; ++w) {
    if (tris[w].empty()) throw InputError("winding " + std::to_string(w + 1) + " has no triangles");
    out.windings.windings.push_back(make_winding(mesh, std::move(tris[w]), std::move(signs[w]), turns.at(w + 1)));
  }
  return out;
}

MeshInput read_mesh_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open mesh file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_mesh(ss.str());
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string serialize_mesh(const TriMesh& mesh, const MaterialMap& materials, const WindingSpec& windings) {
  const int nt = mesh.triangle_count();
  std::vector<int> winding_of(nt, 0), sign_of(nt, 0);
  for (int w = 0; w < windings.count(); ++w)
    for (std::size_t k = 0; k < windings.windings[w].triangles.size(); ++k) {
      winding_of[windings.windings[w].triangles[k]] = w + 1;
      sign_of[windings.windings[w].triangles[k]] = windings.windings[w].orientation[k];
    }

  std::map<std::tuple<double, double, int, int>, int> region_ids;
  std::vector<int> region(nt);
  for (int t = 0; t < nt; ++t) {
    const auto key = std::make_tuple(materials.reluctivity[t], materials.conductivity[t], winding_of[t], sign_of[t]);
    auto [it, fresh] = region_ids.emplace(key, static_cast<int>(region_ids.size()) + 1);
    region[t] = it->second;
  }

  std::ostringstream out;
  out << "depth " << fmt(mesh.depth) << "\n";
  out << "vertices " << mesh.vertex_count() << "\n";
  for (const auto& p : mesh.vertices) out << fmt(p.x) << ' ' << fmt(p.y) << "\n";
  out << "triangles " << nt << "\n";
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << ' ' << region[t] << "\n";
  }
  std::vector<std::pair<int, std::tuple<double, double, int, int>>> ordered;
  for (const auto& [key, id] : region_ids) ordered.emplace_back(id, key);
  std::sort(ordered.begin(), ordered.end());
  out << "regions " << ordered.size() << "\n";
  for (const auto& [id, key] : ordered)
    out << id << ' ' << fmt(std::get<0>(key)) << ' ' << fmt(std::get<1>(key)) << ' ' << std::get<2>(key) << ' '
        << (std::get<3>(key) == 0 ? 1 : std::get<3>(key)) << "\n";
  if (windings.count() > 0) {
    out << "windings " << windings.count() << "\n";
    for (int w = 0; w < windings.count(); ++w) out << w + 1 << ' ' << fmt(windings.windings[w].turns) << "\n";
  }
  out << "boundary " << mesh.boundary_vertices.size() << "\n";
  for (std::size_t k = 0; k < mesh.boundary_vertices.size(); ++k)
    out << mesh.boundary_vertices[k] << ((k + 1) % 16 == 0 || k + 1 == mesh.boundary_vertices.size() ? "\n" : " ");
  return out.str();
}

}  // namespace mona
