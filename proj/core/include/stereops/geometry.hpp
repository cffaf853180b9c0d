#pragma once

#include "stereops/common.hpp"
#include "stereops/diffmath/ops.hpp"

#include <random>
#include <vector>

namespace stereops {

/// x_world = R * x_camera + t (millimetres).
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Vec3 apply_inverse(const Vec3& p) const { return R.transpose() * (p - t); }
  Vec3 rotate(const Vec3& d) const { return R * d; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  /// Throws unless R is orthonormal with det +1 (tolerance 1e-9).
  void validate() const;
};

/// Pinhole camera; pixel (u, v) = (column, row), pixel centres at integers.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  RigidTransform camera_to_world;

  void validate() const;
  bool contains(double u, double v) const;
  Vec3 center_world() const { return camera_to_world.t; }
  /// Unit direction in the camera frame: normalize([(u-cx)/fx, (v-cy)/fy, 1]).
  Vec3 pixel_ray(double u, double v) const;
  /// Camera-frame point at z-depth `depth` on the ray through (u, v).
  Vec3 back_project(double u, double v, double depth) const;
  /// Projects a camera-frame point; returns (u, v).
  Vec2 project(const Vec3& p_camera) const;
};

/// Candidate samples along one pixel ray. Depths are distances along the unit
/// view direction.
struct RaySampleSet {
  Vec3 view_dir = Vec3::UnitZ();
  std::vector<double> depths;
  Matrix world_points;  // N x 3
};

/// n candidate depths over [range_min, range_max] (see sample_depths), mapped
/// to world points through the camera extrinsics.
RaySampleSet sample_ray(const Camera& cam, const Vec2& pixel, double range_min, double range_max, int n,
                        std::mt19937_64* jitter = nullptr);

/// Evenly spaced depths including both endpoints. With an rng, each depth is
/// jittered uniformly within the bin of one spacing centred on it (clipped to
/// the range), which keeps the sequence strictly increasing.
std::vector<double> sample_depths(double range_min, double range_max, int n, std::mt19937_64* jitter);

struct VolumetricResult {
  diff::Value height;   // B x 1 composited surface height z_e (mm)
  diff::Value normal;   // B x 3 composited unit normal
  diff::Value albedo;   // B x 1
  diff::Value weights;  // B x N normalised compositing weights
  std::vector<bool> hit;  // false when a ray carries (numerically) no opacity
};

/// Opacity-weighted reduction over B rays of N samples each.
///   ray_depths:   B x N distances along each ray, strictly increasing per row
///   ray_heights:  B x N constant world heights z_ri of the samples
///   heights:      B x N surface heights z_si = F(x_ri, y_ri)
///   normals:      B*N x 3 per-sample normals, ray-major (may be empty)
///   albedo:       B x N (may be empty)
/// alpha_i = exp(-f (z_si - z_ri)^2), w_i = alpha_i prod_{j<i} (1 - alpha_j),
/// weights normalised per ray.
VolumetricResult volumetric_reduce(const Matrix& ray_depths, const Matrix& ray_heights, const diff::Value& heights,
                                   const diff::Value& normals, const diff::Value& albedo, double f);

/// Throws if any row of the sample depths is not strictly increasing.
void check_sorted_depths(const Matrix& depths);

/// Rodrigues rotation about `axis` (unit) by `angle` radians.
Mat3 axis_angle(const Vec3& axis, double angle);

}  // namespace stereops
