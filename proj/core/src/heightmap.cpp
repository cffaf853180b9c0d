#include "stereops/heightmap.hpp"

#include <cmath>
#include <random>

namespace stereops {

using diff::Parameter;
using diff::Tape;
using diff::Value;

void SirenConfig::validate() const {
  if (hidden_layers < 1) throw Error("SirenConfig: hidden_layers must be >= 1");
  if (hidden_width < 1) throw Error("SirenConfig: hidden_width must be >= 1");
  if (!(first_omega > 0.0) || !(hidden_omega > 0.0)) throw Error("SirenConfig: frequencies must be positive");
  if (input_dim != 2 || output_dim != 2) throw Error("SirenConfig: only 2 -> 2 networks are supported");
}

long SirenConfig::parameter_count() const {
  const long w = hidden_width;
  long n = input_dim * w + w;
  n += static_cast<long>(hidden_layers - 1) * (w * w + w);
  n += w * output_dim + output_dim;
  return n;
}

namespace {
// softplus^-1(0.5)
const double kAlbedoBias = std::log(std::exp(0.5) - 1.0);

Matrix uniform(std::mt19937_64& rng, int rows, int cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}
}  // namespace

HeightmapNetwork::HeightmapNetwork(SirenConfig config, std::uint64_t seed, CoordinateFrame frame)
    : config_(config), frame_(frame) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int w = config_.hidden_width;
  int fan_in = config_.input_dim;
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / config_.hidden_omega;
    weights_.emplace_back("siren.w" + std::to_string(l), uniform(rng, fan_in, w, bound));
    biases_.emplace_back("siren.b" + std::to_string(l), uniform(rng, 1, w, 1.0 / std::sqrt(fan_in)));
    fan_in = w;
  }
  Matrix head = Matrix::Zero(w, config_.output_dim);
  head.col(0) = uniform(rng, w, 1, std::sqrt(6.0 / w) / config_.hidden_omega);
  Matrix head_bias = Matrix::Zero(1, config_.output_dim);
  head_bias(0, 1) = kAlbedoBias;
  weights_.emplace_back("siren.head_w", head);
  biases_.emplace_back("siren.head_b", head_bias);
}

std::vector<Parameter*> HeightmapNetwork::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> HeightmapNetwork::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

HeightmapNetwork::Output HeightmapNetwork::query(Tape& tape, const Value& xy_norm, bool with_derivatives) {
  if (weights_.empty()) throw Error("HeightmapNetwork: network is not initialised");
  if (xy_norm.cols() != 2) throw diff::ShapeError("HeightmapNetwork::query expects N x 2 coordinates");
  if (!xy_norm.data().allFinite()) throw Error("HeightmapNetwork::query: non-finite input coordinate");

  Value h = xy_norm;
  Value tx, ty;
  const int layers = config_.hidden_layers;
  for (int l = 0; l < layers; ++l) {
    const double omega = l == 0 ? config_.first_omega : config_.hidden_omega;
    Value W = tape.param(weights_[l]);
    Value b = tape.param(biases_[l]);
    Value s = omega * (diff::matmul(h, W) + b);
    if (with_derivatives) {
      Value ta_x, ta_y;
      if (l == 0) {
        ta_x = diff::slice(W, 0, 0, 1);
        ta_y = diff::slice(W, 0, 1, 1);
      } else {
        ta_x = diff::matmul(tx, W);
        ta_y = diff::matmul(ty, W);
      }
      Value c = diff::cos(s);
      tx = c * (omega * ta_x);
      ty = c * (omega * ta_y);
    }
    h = diff::sin(s);
  }
  Value W = tape.param(weights_[layers]);
  Value b = tape.param(biases_[layers]);
  Value out = diff::matmul(h, W) + b;

  Output o;
  o.height = diff::slice(out, 1, 0, 1);
  o.albedo = diff::softplus(diff::slice(out, 1, 1, 1));
  if (with_derivatives) {
    Value wz = diff::slice(W, 1, 0, 1);
    o.dzdx = diff::matmul(tx, wz);
    o.dzdy = diff::matmul(ty, wz);
  }
  return o;
}

HeightmapNetwork::Surface HeightmapNetwork::surface(Tape& tape, const Value& xy_mm, bool with_normals) {
  Matrix origin_xy(1, 2);
  origin_xy << frame_.origin.x(), frame_.origin.y();
  Value xy_norm = frame_.scale * (xy_mm - tape.constant(origin_xy));
  Output o = query(tape, xy_norm, with_normals);
  Surface s;
  s.height = (1.0 / frame_.scale) * o.height + frame_.origin.z();
  s.albedo = o.albedo;
  if (with_normals) {
    // dz_mm/dx_mm equals dz_n/dx_n because both axes share the same scale.
    s.dzdx = o.dzdx;
    s.dzdy = o.dzdy;
    Value minus_one = tape.constant(Matrix::Constant(xy_mm.rows(), 1, -1.0));
    s.normal = diff::normalize(diff::concat({o.dzdx, o.dzdy, minus_one}, 1));
  }
  return s;
}

Value HeightmapNetwork::normal(Tape& tape, const Value& xy_mm) { return surface(tape, xy_mm, true).normal; }

Matrix HeightmapNetwork::normalise(const Matrix& xy_mm) const {
  Matrix xy(xy_mm.rows(), 2);
  xy.col(0) = (xy_mm.col(0).array() - frame_.origin.x()) * frame_.scale;
  xy.col(1) = (xy_mm.col(1).array() - frame_.origin.y()) * frame_.scale;
  return xy;
}

HeightmapNetwork::Evaluation HeightmapNetwork::evaluate(const Matrix& xy_mm, bool with_derivatives) const {
  if (weights_.empty()) throw Error("HeightmapNetwork: network is not initialised");
  if (xy_mm.cols() != 2) throw diff::ShapeError("HeightmapNetwork::evaluate expects N x 2 coordinates");
  if (!xy_mm.allFinite()) throw Error("HeightmapNetwork::evaluate: non-finite input coordinate");
  const Eigen::Index n = xy_mm.rows();
  Matrix h = normalise(xy_mm);
  Matrix tx, ty;
  const int layers = config_.hidden_layers;
  for (int l = 0; l < layers; ++l) {
    const double omega = l == 0 ? config_.first_omega : config_.hidden_omega;
    const Matrix& W = weights_[l].value;
    Matrix s = (h * W).rowwise() + biases_[l].value.row(0);
    s *= omega;
    if (with_derivatives) {
      Matrix ta_x, ta_y;
      if (l == 0) {
        ta_x = W.row(0).replicate(n, 1);
        ta_y = W.row(1).replicate(n, 1);
      } else {
        ta_x = tx * W;
        ta_y = ty * W;
      }
      const Matrix c = s.array().cos().matrix();
      tx = c.cwiseProduct(omega * ta_x);
      ty = c.cwiseProduct(omega * ta_y);
    }
    h = s.array().sin().matrix();
  }
  const Matrix out = (h * weights_[layers].value).rowwise() + biases_[layers].value.row(0);
  Evaluation e;
  e.height = (out.col(0).array() / frame_.scale + frame_.origin.z()).matrix();
  e.albedo = out.col(1).unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  if (with_derivatives) {
    const Matrix wz = weights_[layers].value.col(0);
    e.dzdx = tx * wz;
    e.dzdy = ty * wz;
    e.normal = normals_from_gradients(e.dzdx, e.dzdy);
  }
  return e;
}

Matrix HeightmapNetwork::heights(const Matrix& xy_mm) const { return evaluate(xy_mm, false).height; }

Matrix normals_from_gradients(const Matrix& dzdx, const Matrix& dzdy) {
  Matrix n(dzdx.rows(), 3);
  n.col(0) = dzdx.col(0);
  n.col(1) = dzdy.col(0);
  n.col(2).setConstant(-1.0);
  n.rowwise().normalize();
  return n;
}

}  // namespace stereops
