#pragma once

#include "stereops/common.hpp"
#include "stereops/diffmath/ops.hpp"

#include <cstdint>
#include <vector>

namespace stereops {

/// Anything that can report world heights z(x, y) in millimetres without
/// recording on a tape. Used by shadow marching and the scene generator.
class HeightField {
 public:
  virtual ~HeightField() = default;
  /// xy_mm: N x 2 world coordinates. Returns N x 1 heights.
  virtual Matrix heights(const Matrix& xy_mm) const = 0;
};

struct SirenConfig {
  int hidden_layers = 5;
  int hidden_width = 512;
  double first_omega = 50.0;
  double hidden_omega = 30.0;
  int input_dim = 2;
  int output_dim = 2;

  void validate() const;
  long parameter_count() const;
};

/// Mapping between world millimetres and the network's normalised units:
/// x_n = (x - origin.x) * scale, z = origin.z + z_n / scale.
struct CoordinateFrame {
  Vec3 origin = Vec3::Zero();
  double scale = 0.01;
};

/// Sinusoidal coordinate network F(x, y) -> (height, albedo) with a shared
/// trunk and a two-channel linear head. Input derivatives of the height are
/// propagated as forward-mode tangents recorded on the tape, so normals stay
/// differentiable with respect to the weights.
class HeightmapNetwork : public HeightField {
 public:
  HeightmapNetwork() = default;
  HeightmapNetwork(SirenConfig config, std::uint64_t seed, CoordinateFrame frame = {});

  /// Raw outputs in normalised units.
  struct Output {
    diff::Value height;  // N x 1
    diff::Value albedo;  // N x 1, softplus of the second head channel
    diff::Value dzdx;    // N x 1, empty unless derivatives were requested
    diff::Value dzdy;
  };
  Output query(diff::Tape& tape, const diff::Value& xy_norm, bool with_derivatives = false);

  /// World-space surface samples at xy (millimetres).
  struct Surface {
    diff::Value height;  // N x 1, mm
    diff::Value albedo;  // N x 1
    diff::Value normal;  // N x 3 unit, facing -z; empty unless requested
    diff::Value dzdx;
    diff::Value dzdy;
  };
  Surface surface(diff::Tape& tape, const diff::Value& xy_mm, bool with_normals = true);
  diff::Value normal(diff::Tape& tape, const diff::Value& xy_mm);

  /// Tape-free evaluation with the same arithmetic as query().
  struct Evaluation {
    Matrix height;  // mm
    Matrix albedo;
    Matrix dzdx;
    Matrix dzdy;
    Matrix normal;  // N x 3
  };
  Evaluation evaluate(const Matrix& xy_mm, bool with_derivatives = false) const;
  Matrix heights(const Matrix& xy_mm) const override;

  std::vector<diff::Parameter*> parameters();
  std::vector<const diff::Parameter*> parameters() const;

  const SirenConfig& config() const { return config_; }
  const CoordinateFrame& frame() const { return frame_; }
  void set_frame(const CoordinateFrame& frame) { frame_ = frame; }

 private:
  Matrix normalise(const Matrix& xy_mm) const;

  SirenConfig config_;
  CoordinateFrame frame_;
  // weights_[l] is fan_in x fan_out; the last entry is the linear head.
  std::vector<diff::Parameter> weights_;
  std::vector<diff::Parameter> biases_;
};

/// Unit normal from height gradients: normalize([dz/dx, dz/dy, -1]).
Matrix normals_from_gradients(const Matrix& dzdx, const Matrix& dzdy);

}  // namespace stereops
