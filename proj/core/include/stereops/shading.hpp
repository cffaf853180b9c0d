#pragma once

#include "stereops/common.hpp"
#include "stereops/diffmath/ops.hpp"
#include "stereops/heightmap.hpp"

#include <cstdint>
#include <vector>

namespace stereops {

/// Calibrated near-field point light (world frame, millimetres).
struct LightSource {
  Vec3 position = Vec3::Zero();
  double brightness = 1.0;
  Vec3 direction = Vec3::UnitZ();  // principal LED orientation (light -> scene), unit
  double mu = 0.0;                 // angular dissipation

  void validate() const;
};

struct LightSample {
  Vec3 l;        // s_m - p
  Vec3 l_hat;
  double attenuation;
};

/// phi * max(-l_hat . d, 0)^mu / |l|^2. Throws when p is within 1e-6 mm of the light.
LightSample light_vectors(const Vec3& p, const LightSource& light);

struct LightBatch {
  diff::Value l;            // K x 3
  diff::Value l_hat;        // K x 3
  diff::Value attenuation;  // K x 1
};

/// Batched light vectors for K = B * M rows; row b * M + m pairs point b with
/// light m.
LightBatch light_vectors(diff::Tape& tape, const diff::Value& points, const std::vector<LightSource>& lights);

struct BrdfAngles {
  diff::Value theta_h;  // K x 1
  diff::Value theta_d;
  diff::Value phi_d;    // wrapped to [0, pi)
  Matrix sign_mask;     // K x 1 of {0, 1}
};

/// Half/difference angles of (n, l, v) after rotating n onto +z. All inputs
/// are K x 3 unit vectors expressed in a frame where visible normals have
/// positive z. The difference vector is built from (l - v) / 2 so that
/// swapping l and v yields bit-identical (theta_h, theta_d, phi_d).
BrdfAngles rusinkiewicz_angles(const diff::Value& n, const diff::Value& l, const diff::Value& v);

struct BrdfAnglesScalar {
  double theta_h;
  double theta_d;
  double phi_d;
  double phi_h;
  int sign_mask;
};
BrdfAnglesScalar rusinkiewicz_angles(const Vec3& n, const Vec3& l, const Vec3& v);

struct BrdfConfig {
  int hidden_layers = 3;
  int hidden_width = 16;
};

/// ReLU MLP over (theta_h, theta_d, phi_d) with an exponential output. The
/// head starts at zero, so a fresh network is exactly Lambertian (output 1).
class BrdfNet {
 public:
  BrdfNet() : BrdfNet(BrdfConfig{}, 0) {}
  BrdfNet(BrdfConfig config, std::uint64_t seed, bool zero_head = true);

  /// angles: K x 3 -> K x 1 positive values.
  diff::Value forward(diff::Tape& tape, const diff::Value& angles);
  double evaluate(double theta_h, double theta_d, double phi_d) const;

  /// When set, forward() returns ones and no parameter is registered.
  void set_lambertian(bool on) { lambertian_ = on; }
  bool lambertian() const { return lambertian_; }

  std::vector<diff::Parameter*> parameters();
  std::vector<const diff::Parameter*> parameters() const;
  const BrdfConfig& config() const { return config_; }

 private:
  BrdfConfig config_;
  std::vector<diff::Parameter> weights_;
  std::vector<diff::Parameter> biases_;
  bool lambertian_ = false;
};

/// sign_mask * max(n . l, 0) * MLP(theta_h, theta_d, phi_d). K x 1.
diff::Value brdf_eval(diff::Tape& tape, BrdfNet& net, const BrdfAngles& angles, const diff::Value& n,
                      const diff::Value& l_hat);

struct ShadowConfig {
  int samples = 16;
  double start_mm = 3.0;
  double step_mm = 1.5;
  double sharpness = 4.0;   // per mm, inside the occlusion sigmoid
  double smooth_max = 10.0; // softmax temperature of the smooth maximum
};

/// Where marched heights come from. With `full_backprop` and a network, the
/// marched queries are recorded on the tape; otherwise heights are constants
/// and only the dependence on the start point flows back.
struct ShadowSource {
  const HeightField* field = nullptr;
  HeightmapNetwork* network = nullptr;
  bool full_backprop = false;
};

/// Soft visibility in [0, 1] (1 = lit) for K start points and unit light
/// directions. Occlusion at step k is sigmoid(sharpness * (z_marched - z_surface));
/// visibility is 1 - smooth-max of the occlusions.
diff::Value soft_shadow(diff::Tape& tape, const diff::Value& points, const diff::Value& l_hat,
                        const ShadowSource& source, const ShadowConfig& config = {});

struct RenderOptions {
  bool shadows = true;
  ShadowConfig shadow;
};

struct RenderResult {
  diff::Value intensity;    // B x M
  diff::Value shadow;       // B x M visibility, empty when shadows are off
  diff::Value attenuation;  // B x M
  diff::Value brdf;         // B x M, including max(n.l, 0)
};

/// Per-light intensities i_m = s_m * a_m * rho * BRDF(n, l_m, v) at B
/// composited surface points. Vectors are in the world frame, normals facing
/// the cameras (-z) and `view` pointing from the point to its camera.
RenderResult render_intensity(diff::Tape& tape, const diff::Value& albedo, const diff::Value& normal,
                              const diff::Value& points, const diff::Value& view,
                              const std::vector<LightSource>& lights, BrdfNet& brdf, const ShadowSource& shadow,
                              const RenderOptions& options = {});

/// Rotation by pi about x: maps world vectors (visible normals with -z) into
/// the shading frame where visible normals have +z.
diff::Value to_shading_frame(diff::Tape& tape, const diff::Value& v);

}  // namespace stereops
