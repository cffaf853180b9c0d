#pragma once

#include "stereops/common.hpp"
#include "stereops/diffmath/ops.hpp"

#include <vector>

namespace stereops {

struct LossWeights {
  double normal = 1.0;        // per degree
  double render = 100.0;      // 100 for near-field rigs, 1000 for darker far-field data
  double depth = 1.0;         // per mm, initialisation stage only
  double reg_normal = 1e-3;
  double reg_depth = 1e-4;

  void validate() const;
};

/// Visibility weights derived from the fraction of shadowed lights.
struct SampleWeight {
  Matrix occlusion;  // a = shadow_count / n_lights
  Matrix normal;     // 1 - a
  Matrix render;     // (1 - a)^2
};

/// Degrees: |atan2(|n_n x n_s|, n_n . n_s)| * max(n_n . v, 0). All K x 3 -> K x 1.
diff::Value angular_normal_loss(const diff::Value& predicted, const diff::Value& target, const diff::Value& view);

/// Per-sample mean absolute error over valid lights (B x M -> B x 1). Samples
/// with no valid light get 0 and should be excluded via `has_valid`.
diff::Value rendering_loss(const diff::Value& rendered, const Matrix& observed, const Matrix& valid,
                           std::vector<bool>* has_valid = nullptr);

/// |z_s - z_t| in millimetres (K x 1).
diff::Value depth_loss(const diff::Value& predicted, const Matrix& target);

/// w_reg_normal * angle(n_s, up) [deg] + w_reg_depth * |z_s - mean_depth|.
/// `up` is the canonical surface normal of the frame, here [0, 0, -1].
diff::Value regularizers(const diff::Value& normal, const diff::Value& height, double mean_depth,
                         const LossWeights& weights);

SampleWeight sample_weights(const std::vector<int>& shadow_counts, int n_lights);

/// Angle in degrees between row vectors (no view mask).
diff::Value angle_between(const diff::Value& a, const diff::Value& b);

}  // namespace stereops
