#pragma once

#include <string>

#include "saga/common.hpp"

namespace saga {

struct PlyData {
  Points vertices;   // P x 3
  Points normals;    // P x 3 or empty
  Faces faces;       // F x 3 or empty
  bool has_normals() const { return normals.rows() == vertices.rows() && vertices.rows() > 0; }
};

// ASCII PLY only (the corpus formats all fit). Floats are written with %.9g
// so a float32-valued mesh round-trips exactly.
PlyData load_ply(const std::string& path);
void save_ply(const std::string& path, const PlyData& d);

}  // namespace saga
