#pragma once

#include "stereops/common.hpp"
#include "stereops/geometry.hpp"
#include "stereops/heightmap.hpp"
#include "stereops/shading.hpp"

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace stereops {

enum class SurfaceKind { Plane, Ramp, SphereCap, GaussianBumps, StepWall };

std::string to_string(SurfaceKind kind);
SurfaceKind surface_kind_from_string(const std::string& name);

struct GaussianBump {
  Vec2 center = Vec2::Zero();
  double amplitude = 5.0;  // mm toward the cameras
  double sigma = 8.0;
};

/// Closed-form heightmap over a circular domain. Heights grow away from the
/// cameras, so raised features have smaller z.
class AnalyticSurface : public HeightField {
 public:
  SurfaceKind kind = SurfaceKind::Plane;
  Vec3 center = Vec3(0.0, 0.0, 170.0);  // domain centre and base height
  double extent = 40.0;                  // domain radius, mm

  Vec2 slope = Vec2::Zero();  // plane, ramp
  double radius = 40.0;       // sphere cap
  double cap_height = 20.0;
  std::vector<GaussianBump> bumps;
  double wall_height = 10.0;  // step wall raised for x > center.x + wall_offset
  double wall_offset = 0.0;
  double wall_width = 0.1;

  static AnalyticSurface plane(double depth = 170.0);
  static AnalyticSurface ramp(double depth = 170.0);
  static AnalyticSurface sphere_cap(double radius = 40.0, double cap_height = 20.0, double depth = 170.0);
  static AnalyticSurface gaussian_bumps(double depth = 170.0);
  static AnalyticSurface step_wall(double depth = 170.0);
  static AnalyticSurface make(SurfaceKind kind, double depth = 170.0);

  void validate() const;
  double z(double x, double y) const;
  Vec2 gradient(double x, double y) const;
  /// Unit normal facing the cameras (negative z).
  Vec3 normal(double x, double y) const;
  bool in_domain(double x, double y) const;
  /// Lower and upper bound of z over the domain.
  std::pair<double, double> height_bounds() const;

  Matrix heights(const Matrix& xy_mm) const override;
};

enum class MaterialKind { Lambertian, Phong };

struct ReferenceMaterial {
  MaterialKind kind = MaterialKind::Lambertian;
  double albedo = 0.8;
  double specular = 0.0;
  double shininess = 20.0;

  void validate() const;
};

struct Rig {
  std::array<Camera, 2> cameras;
  std::vector<LightSource> lights;
};

struct RigConfig {
  int resolution = 64;
  double baseline = 60.0;       // mm between camera centres
  double distance = 170.0;      // verge point on the optical axes
  double field_mm = 100.0;      // image width at the verge distance
  int lights = 15;
  double ring_radius = 120.0;
  double brightness = 3.0e4;
  double mu = 1.0;
};

/// Two cameras at (+-baseline/2, 0, 0) verged on (0, 0, distance); lights on
/// a ring in the z = 0 plane aimed at the verge point. Brightness and mu vary
/// slightly and deterministically per light.
Rig make_default_rig(const RigConfig& config = {});

/// Lambertian: rho a max(n.l, 0). Phong adds k_s a max(r.v, 0)^shininess on
/// the lit side, r being the mirror direction of l about n.
double reference_render(const Vec3& point, const Vec3& normal, const ReferenceMaterial& material,
                        const LightSource& light, const Vec3& view);

/// First crossing of a world ray with the surface inside its domain, found by
/// marching in `step` mm increments and bisecting the bracket.
std::optional<Vec3> intersect_surface(const AnalyticSurface& surface, const Vec3& origin, const Vec3& direction,
                                      double step = 0.05);

/// True when the segment from `point` toward the light passes below the
/// surface (marched in `step` mm increments).
bool hard_shadow(const AnalyticSurface& surface, const Vec3& point, const Vec3& light_position, double step = 0.05);

struct ViewRender {
  Matrix mask;                   // H x W of {0, 1}
  Matrix depth;                  // camera z-depth in mm, 0 outside the mask
  std::array<Matrix, 3> normal;  // camera-frame normal components
  std::vector<Matrix> images;    // per light, clipped to [0, 1]
  std::vector<Matrix> valid;     // per light, 1 where unsaturated
  std::vector<Matrix> lit;       // per light, 1 where not cast-shadowed
  Matrix points;                 // P x 3 world hit points, row-major pixel order
  Matrix world_normals;          // P x 3
  std::vector<std::array<int, 2>> pixels;  // (u, v) of each hit point
};

struct SceneConfig {
  AnalyticSurface surface;
  ReferenceMaterial material;
  Rig rig = make_default_rig();
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  bool shadows = true;
};

struct Scene {
  SceneConfig config;
  std::array<ViewRender, 2> views;
};

/// Renders both views. Throws when the surface is visible in neither view.
Scene render_scene(const SceneConfig& config);

enum class BiasKind { Smooth, Constant };

struct EstimateNoise {
  double angular_noise_deg = 0.0;
  double depth_bias_mm = 0.0;  // signed; amplitude of the smooth field
  BiasKind bias = BiasKind::Smooth;
};

struct ViewEstimate {
  std::array<Matrix, 3> normal;  // camera frame
  Matrix depth;
};

/// Normals rotated about a random perpendicular axis by |N(0, sigma)|; depth
/// offset by a sinusoidal field of one period per two image widths with random
/// orientation and phase, or by a constant.
ViewEstimate perturbed_estimates(const std::array<Matrix, 3>& normals, const Matrix& depth, const Matrix& mask,
                                 const EstimateNoise& noise, std::mt19937_64& rng);

/// Rotates `n` by angle |N(0, sigma_rad)| about a random axis perpendicular to it.
Vec3 perturb_normal(const Vec3& n, double sigma_rad, std::mt19937_64& rng);

/// Writes the dataset layout read by load_manifest.
void write_dataset(const Scene& scene, const std::array<ViewEstimate, 2>& estimates, const std::string& dir);

}  // namespace stereops
