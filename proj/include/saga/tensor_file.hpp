#pragma once

#include <bit>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "saga/common.hpp"

namespace saga {

// Named-tensor container used for checkpoints, sampled grasps/motions and
// object clouds. Layout: 8-byte magic, u64 little-endian header length, a
// JSON header (meta + tensor directory), then float32 little-endian
// row-major blobs back to back. Serialization is deterministic: tensors
// keep insertion order and the header uses order-preserving JSON, so equal
// content produces byte-identical files.
class TensorFile {
 public:
  static constexpr char kMagic[9] = "SAGATNS1";

  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  void set(const std::string& name, const MatXf& m);
  void set(const std::string& name, const MatXd& m) { set(name, MatXf(m.cast<float>())); }
  void set_vec(const std::string& name, const VecXd& v) { set(name, MatXd(v)); }

  bool has(const std::string& name) const { return find(name) >= 0; }
  const MatXf& get_f(const std::string& name) const;
  MatXd get(const std::string& name) const { return get_f(name).cast<double>(); }
  std::vector<std::string> names() const;

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

 private:
  int find(const std::string& name) const;
  std::vector<std::pair<std::string, MatXf>> tensors_;
};

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

}  // namespace saga
