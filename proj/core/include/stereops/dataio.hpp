#pragma once

#include "stereops/common.hpp"
#include "stereops/geometry.hpp"
#include "stereops/shading.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stereops {

/// Paths of one view, relative to the manifest root unless absolute.
struct ViewFiles {
  std::string camera;
  std::string mask;
  std::string lights;  // optional per-view override of the dataset light file
  std::vector<std::string> images;  // indexed by light
  std::string normal_estimate;      // camera-frame 3-channel float map
  std::string depth_estimate;       // camera z-depth float map (mm)
  std::string gt_depth;             // optional
  std::string gt_normal;            // optional
};

struct DatasetManifest {
  std::string root;
  std::string name;
  std::string lights;
  double intensity_scale = 1.0;
  bool approximate_lighting = false;
  std::array<ViewFiles, 2> views;

  std::string resolve(const std::string& relative) const;
  /// Every referenced file exists and both views list the same number (>= 3)
  /// of images and lights.
  void validate() const;
};

/// Reads the sectioned key = value manifest documented in docs/dataset_format.md.
DatasetManifest load_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

/// Key = value calibration text: fx fy cx cy width height, R (9 values,
/// row-major, camera -> world) and t (3 values, mm).
Camera read_camera(const std::string& path);
void write_camera(const Camera& camera, const std::string& path);

/// One light per line: index px py pz brightness dx dy dz [mu]; '#' comments.
std::vector<LightSource> read_lights(const std::string& path);
void write_lights(const std::vector<LightSource>& lights, const std::string& path);

struct ViewData {
  Camera camera;
  Matrix mask;                           // H x W of {0, 1}
  std::vector<LightSource> lights;       // world frame
  std::vector<Matrix> images;            // grayscale, scaled by intensity_scale
  std::vector<Matrix> valid;             // 1 where the raw sample is unsaturated
  std::array<Matrix, 3> normal_estimate; // world frame
  Matrix depth_estimate;                 // camera z-depth, mm
  std::optional<Matrix> gt_depth;
  std::optional<std::array<Matrix, 3>> gt_normal;  // world frame
};

struct Dataset {
  DatasetManifest manifest;
  std::array<ViewData, 2> views;

  int light_count() const { return static_cast<int>(views[0].lights.size()); }
  bool has_gt_depth() const { return views[0].gt_depth.has_value() && views[1].gt_depth.has_value(); }
};

Dataset load_dataset(const DatasetManifest& manifest);

/// Rotates a camera-frame normal map into the world frame (rotation only).
std::array<Matrix, 3> normals_to_world(const std::array<Matrix, 3>& camera_normals, const RigidTransform& camera_to_world);

/// Back-projected world points of all mask pixels with positive depth.
Matrix depth_to_points(const Matrix& depth, const Matrix& mask, const Camera& camera);

/// Builds a two-view manifest from a DiLiGenT-MV object directory
/// (view_01, view_02, ...), writing converted light files to `out_dir`.
/// Each view directory needs the 96 images, mask.png, light_directions.txt,
/// light_intensities.txt and a text camera.txt in this library's format;
/// light_positions.txt (mm, camera frame) is used when present. Per-view
/// estimates are read from normal_est.pfm / depth_est.pfm. Sets mu = 0 and
/// multiplies the far-field intensities by the squared mean object distance,
/// which only approximates the true near-field brightness.
DatasetManifest diligent_adapter(const std::string& root, const std::string& out_dir, double nominal_distance_mm = 1500.0);

}  // namespace stereops
