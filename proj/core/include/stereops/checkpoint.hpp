#pragma once

#include "stereops/common.hpp"

#include <map>
#include <string>

namespace stereops {

/// Flat key -> matrix / text store with a versioned binary encoding. Keys are
/// written in sorted order, so equal contents always produce equal bytes.
class Archive {
 public:
  static constexpr const char* kHeader = "STEREOPS-CKPT-1";

  void put(const std::string& key, const Matrix& value) { matrices_[key] = value; }
  void put(const std::string& key, double value) { matrices_[key] = Matrix::Constant(1, 1, value); }
  void put_text(const std::string& key, const std::string& value) { texts_[key] = value; }

  bool has(const std::string& key) const { return matrices_.count(key) > 0; }
  bool has_text(const std::string& key) const { return texts_.count(key) > 0; }
  const Matrix& matrix(const std::string& key) const;
  double scalar(const std::string& key) const;
  const std::string& text(const std::string& key) const;

  std::string to_bytes() const;
  static Archive from_bytes(const std::string& bytes);
  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, Matrix> matrices_;
  std::map<std::string, std::string> texts_;
};

}  // namespace stereops
