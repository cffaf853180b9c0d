#pragma once

#include "stereops/dataio.hpp"
#include "stereops/scenegen.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace stereops::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("stereops_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

/// Renders `config`, perturbs the estimates and writes the dataset; returns
/// the manifest path. With `opposed`, the second view's bias is negated.
inline std::string write_synthetic(const Scene& scene, const EstimateNoise& noise, std::uint64_t seed,
                                   const std::string& dir, bool opposed = false) {
  std::mt19937_64 rng(seed);
  std::array<ViewEstimate, 2> est;
  for (std::size_t v = 0; v < 2; ++v) {
    EstimateNoise n = noise;
    if (opposed && v == 1) n.depth_bias_mm = -n.depth_bias_mm;
    est[v] = perturbed_estimates(scene.views[v].normal, scene.views[v].depth, scene.views[v].mask, n, rng);
  }
  write_dataset(scene, est, dir);
  return (std::filesystem::path(dir) / "manifest.txt").string();
}

inline Dataset load_synthetic(const std::string& manifest) { return load_dataset(load_manifest(manifest)); }

}  // namespace stereops::testing
