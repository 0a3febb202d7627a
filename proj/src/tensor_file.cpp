#include "saga/tensor_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace saga {

int TensorFile::find(const std::string& name) const {
  for (size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].first == name) return static_cast<int>(i);
  return -1;
}

void TensorFile::set(const std::string& name, const MatXf& m) {
  int i = find(name);
  if (i >= 0)
    tensors_[i].second = m;
  else
    tensors_.emplace_back(name, m);
}

const MatXf& TensorFile::get_f(const std::string& name) const {
  int i = find(name);
  SAGA_REQUIRE(i >= 0, InvalidInput, "tensor not found: " + name);
  return tensors_[i].second;
}

std::vector<std::string> TensorFile::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (auto& t : tensors_) out.push_back(t.first);
  return out;
}

void TensorFile::save(const std::string& path) const {
  nlohmann::ordered_json header;
  header["meta"] = meta;
  auto dir = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (auto& [name, m] : tensors_) {
    nlohmann::ordered_json e;
    e["name"] = name;
    e["rows"] = m.rows();
    e["cols"] = m.cols();
    e["offset"] = offset;
    dir.push_back(e);
    offset += static_cast<uint64_t>(m.size()) * sizeof(float);
  }
  header["tensors"] = dir;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  SAGA_REQUIRE(f.good(), IoError, "cannot open for write: " + path);
  f.write(kMagic, 8);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<float> rowbuf;
  for (auto& [name, m] : tensors_) {
    (void)name;
    rowbuf.resize(static_cast<size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) rowbuf[static_cast<size_t>(c)] = m(r, c);
      f.write(reinterpret_cast<const char*>(rowbuf.data()),
              static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
    }
  }
  SAGA_REQUIRE(f.good(), IoError, "write failed: " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  SAGA_REQUIRE(f.good(), IoError, "cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  SAGA_REQUIRE(f.good() && std::memcmp(magic, kMagic, 8) == 0, InvalidInput,
               "not a tensor container: " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  SAGA_REQUIRE(f.good() && hlen < (1ull << 30), InvalidInput, "corrupt header: " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  SAGA_REQUIRE(f.good(), InvalidInput, "truncated header: " + path);
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(hs, nullptr, false);
  SAGA_REQUIRE(!header.is_discarded(), InvalidInput, "bad header JSON: " + path);

  TensorFile out;
  out.meta = header.value("meta", nlohmann::ordered_json::object());
  std::vector<float> rowbuf;
  for (auto& e : header["tensors"]) {
    Eigen::Index rows = e["rows"].get<Eigen::Index>();
    Eigen::Index cols = e["cols"].get<Eigen::Index>();
    MatXf m(rows, cols);
    rowbuf.resize(static_cast<size_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
      f.read(reinterpret_cast<char*>(rowbuf.data()),
             static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rowbuf[static_cast<size_t>(c)];
    }
    SAGA_REQUIRE(f.good(), InvalidInput, "truncated tensor data: " + path);
    out.tensors_.emplace_back(e["name"].get<std::string>(), std::move(m));
  }
  return out;
}

}  // namespace saga
