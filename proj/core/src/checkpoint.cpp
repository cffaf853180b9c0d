#include "stereops/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stereops {

const Matrix& Archive::matrix(const std::string& key) const {
  auto it = matrices_.find(key);
  if (it == matrices_.end()) throw Error("checkpoint: missing entry '" + key + "'");
  return it->second;
}

double Archive::scalar(const std::string& key) const {
  const Matrix& m = matrix(key);
  if (m.size() != 1) throw Error("checkpoint: entry '" + key + "' is not a scalar");
  return m(0, 0);
}

const std::string& Archive::text(const std::string& key) const {
  auto it = texts_.find(key);
  if (it == texts_.end()) throw Error("checkpoint: missing text entry '" + key + "'");
  return it->second;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 8);
}

void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  double f64() {
    const std::uint64_t u = u64();
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw Error("checkpoint: truncated or corrupt file (header " + std::string(Archive::kHeader) + ")");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Archive::to_bytes() const {
  std::string out = std::string(kHeader) + "\n";
  put_u64(out, matrices_.size());
  for (const auto& [key, m] : matrices_) {
    put_string(out, key);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint64_t u;
      const double d = m.data()[i];
      std::memcpy(&u, &d, 8);
      put_u64(out, u);
    }
  }
  put_u64(out, texts_.size());
  for (const auto& [key, s] : texts_) {
    put_string(out, key);
    put_string(out, s);
  }
  return out;
}

Archive Archive::from_bytes(const std::string& bytes) {
  const std::string header = std::string(kHeader) + "\n";
  if (bytes.compare(0, header.size(), header) != 0) {
    if (bytes.rfind("STEREOPS-CKPT-", 0) == 0) throw Error("checkpoint: unsupported format version (expected " + std::string(kHeader) + ")");
    throw Error("checkpoint: missing header " + std::string(kHeader));
  }
  const std::string body = bytes.substr(header.size());
  Reader r(body);
  Archive a;
  const std::uint64_t nm = r.u64();
  for (std::uint64_t i = 0; i < nm; ++i) {
    std::string key = r.str();
    const std::uint64_t rows = r.u64(), cols = r.u64();
    if (rows > (1u << 30) || cols > (1u << 30)) throw Error("checkpoint: corrupt matrix size for '" + key + "'");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = r.f64();
    a.matrices_[key] = std::move(m);
  }
  const std::uint64_t nt = r.u64();
  for (std::uint64_t i = 0; i < nt; ++i) {
    std::string key = r.str();
    a.texts_[key] = r.str();
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes after the last entry");
  return a;
}

void Archive::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  const std::string bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_bytes(ss.str());
}

}  // namespace stereops
