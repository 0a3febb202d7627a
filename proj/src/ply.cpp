#include "saga/ply.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace saga {

PlyData load_ply(const std::string& path) {
  std::ifstream f(path);
  SAGA_REQUIRE(f.good(), IoError, "cannot open: " + path);
  std::string line;
  std::getline(f, line);
  SAGA_REQUIRE(line.rfind("ply", 0) == 0, InvalidInput, "not a PLY file: " + path);

  long nverts = -1, nfaces = 0;
  bool ascii = false;
  std::vector<std::string> vprops;
  std::string elem;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = (fmt == "ascii");
    } else if (tok == "element") {
      std::string name;
      long n;
      ss >> name >> n;
      elem = name;
      if (name == "vertex") nverts = n;
      if (name == "face") nfaces = n;
    } else if (tok == "property" && elem == "vertex") {
      std::string type, name;
      ss >> type >> name;
      if (type == "list") continue;
      vprops.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  SAGA_REQUIRE(ascii, UnsupportedGeometry, "only ASCII PLY is supported: " + path);
  SAGA_REQUIRE(nverts >= 0, InvalidInput, "PLY missing vertex element: " + path);

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
  for (size_t i = 0; i < vprops.size(); ++i) {
    if (vprops[i] == "x") ix = static_cast<int>(i);
    if (vprops[i] == "y") iy = static_cast<int>(i);
    if (vprops[i] == "z") iz = static_cast<int>(i);
    if (vprops[i] == "nx") inx = static_cast<int>(i);
    if (vprops[i] == "ny") iny = static_cast<int>(i);
    if (vprops[i] == "nz") inz = static_cast<int>(i);
  }
  SAGA_REQUIRE(ix >= 0 && iy >= 0 && iz >= 0, InvalidInput, "PLY lacks x/y/z: " + path);
  bool hasn = inx >= 0 && iny >= 0 && inz >= 0;

  PlyData out;
  out.vertices.resize(nverts, 3);
  if (hasn) out.normals.resize(nverts, 3);
  std::vector<double> vals(vprops.size());
  for (long v = 0; v < nverts; ++v) {
    for (size_t p = 0; p < vprops.size(); ++p) {
      SAGA_REQUIRE(static_cast<bool>(f >> vals[p]), InvalidInput, "truncated PLY vertices: " + path);
    }
    out.vertices.row(v) << vals[ix], vals[iy], vals[iz];
    if (hasn) out.normals.row(v) << vals[inx], vals[iny], vals[inz];
  }
  out.faces.resize(nfaces, 3);
  for (long t = 0; t < nfaces; ++t) {
    int cnt, a, b, c;
    SAGA_REQUIRE(static_cast<bool>(f >> cnt), InvalidInput, "truncated PLY faces: " + path);
    SAGA_REQUIRE(cnt == 3, UnsupportedGeometry, "only triangle faces are supported: " + path);
    f >> a >> b >> c;
    out.faces.row(t) << a, b, c;
  }
  return out;
}

void save_ply(const std::string& path, const PlyData& d) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  SAGA_REQUIRE(f != nullptr, IoError, "cannot open for write: " + path);
  bool hasn = d.has_normals();
  std::fprintf(f, "ply\nformat ascii 1.0\nelement vertex %ld\n", static_cast<long>(d.vertices.rows()));
  std::fprintf(f, "property float x\nproperty float y\nproperty float z\n");
  if (hasn) std::fprintf(f, "property float nx\nproperty float ny\nproperty float nz\n");
  std::fprintf(f, "element face %ld\nproperty list uchar int vertex_indices\nend_header\n",
               static_cast<long>(d.faces.rows()));
  for (Eigen::Index v = 0; v < d.vertices.rows(); ++v) {
    if (hasn)
      std::fprintf(f, "%.9g %.9g %.9g %.9g %.9g %.9g\n", d.vertices(v, 0), d.vertices(v, 1),
                   d.vertices(v, 2), d.normals(v, 0), d.normals(v, 1), d.normals(v, 2));
    else
      std::fprintf(f, "%.9g %.9g %.9g\n", d.vertices(v, 0), d.vertices(v, 1), d.vertices(v, 2));
  }
  for (Eigen::Index t = 0; t < d.faces.rows(); ++t)
    std::fprintf(f, "3 %d %d %d\n", d.faces(t, 0), d.faces(t, 1), d.faces(t, 2));
  std::fclose(f);
}

}  // namespace saga
