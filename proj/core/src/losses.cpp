#include "stereops/losses.hpp"

#include <cmath>

namespace stereops {

using diff::Tape;
using diff::Value;
namespace d = diff;

void LossWeights::validate() const {
  if (normal < 0 || render < 0 || depth < 0 || reg_normal < 0 || reg_depth < 0)
    throw Error("LossWeights: weights must be non-negative");
}

Value angle_between(const Value& a, const Value& b) {
  return kRadToDeg * d::abs(d::atan2(d::norm(d::cross(b, a)), d::dot(b, a)));
}

Value angular_normal_loss(const Value& predicted, const Value& target, const Value& view) {
  return angle_between(predicted, target) * d::clamp_min(d::dot(target, view), 0.0);
}

Value rendering_loss(const Value& rendered, const Matrix& observed, const Matrix& valid, std::vector<bool>* has_valid) {
  Tape& t = rendered.tape();
  if (observed.rows() != rendered.rows() || observed.cols() != rendered.cols() || valid.rows() != rendered.rows() ||
      valid.cols() != rendered.cols())
    throw d::ShapeError("rendering_loss: rendered, observed and valid must share a shape");
  Matrix inv_count(rendered.rows(), 1);
  if (has_valid) has_valid->assign(static_cast<std::size_t>(rendered.rows()), false);
  for (Eigen::Index i = 0; i < rendered.rows(); ++i) {
    const double c = valid.row(i).sum();
    inv_count(i, 0) = c > 0 ? 1.0 / c : 0.0;
    if (has_valid) (*has_valid)[static_cast<std::size_t>(i)] = c > 0;
  }
  Value err = d::abs(rendered - t.constant(observed)) * t.constant(valid);
  return d::sum(err, 1) * t.constant(inv_count);
}

Value depth_loss(const Value& predicted, const Matrix& target) {
  return d::abs(predicted - predicted.tape().constant(target));
}

Value regularizers(const Value& normal, const Value& height, double mean_depth, const LossWeights& w) {
  Tape& t = normal.tape();
  Matrix up(1, 3);
  up << 0.0, 0.0, -1.0;
  Value n_term = angle_between(normal, t.constant(up));
  Value z_term = d::abs(height - mean_depth);
  return w.reg_normal * n_term + w.reg_depth * z_term;
}

SampleWeight sample_weights(const std::vector<int>& shadow_counts, int n_lights) {
  if (n_lights < 1) throw Error("sample_weights: need at least one light");
  const Eigen::Index K = static_cast<Eigen::Index>(shadow_counts.size());
  SampleWeight w;
  w.occlusion.resize(K, 1);
  w.normal.resize(K, 1);
  w.render.resize(K, 1);
  for (Eigen::Index i = 0; i < K; ++i) {
    const int c = shadow_counts[static_cast<std::size_t>(i)];
    if (c < 0 || c > n_lights) throw Error("sample_weights: shadow count outside [0, n_lights]");
    const double a = static_cast<double>(c) / n_lights;
    w.occlusion(i, 0) = a;
    w.normal(i, 0) = 1.0 - a;
    w.render(i, 0) = w.normal(i, 0) * w.normal(i, 0);
  }
  return w;
}

}  // namespace stereops
