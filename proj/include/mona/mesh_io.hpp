#pragma once

// Text mesh format (whitespace separated, '#' comments, vertex ids 0-based):
//
//   depth <l_z in m>                # optional, default 1
//   vertices N
//   <x> <y>                         # N lines, metres
//   triangles M
//   <i> <j> <k> <region id>         # M lines, counter-clockwise
//   regions R
//   <id> <nu m/H> <sigma S/m> <winding> <orientation>   # winding 0 = none
//   windings W                      # optional
//   <winding id> <turns>            # ids 1..W
//   boundary B                      # optional, default: detected rim
//   <v> ...                         # B vertex ids, any line layout

#include "mona/field.hpp"

#include <string>
#include <string_view>

namespace mona {

struct MeshInput {
  TriMesh mesh;
  MaterialMap materials;
  WindingSpec windings;
};

MeshInput parse_mesh(std::string_view text);
MeshInput read_mesh_file(const std::string& path);

// Writes the region table from the distinct (nu, sigma, winding, orientation)
// combinations found in the data; the boundary is written explicitly.
std::string serialize_mesh(const TriMesh& mesh, const MaterialMap& materials, const WindingSpec& windings);

}  // namespace mona
