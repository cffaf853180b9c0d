#include "stereops/shading.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace stereops {

using diff::Tape;
using diff::Value;
namespace d = diff;

void LightSource::validate() const {
  if (!position.allFinite()) throw Error("LightSource: non-finite position");
  if (!(brightness > 0.0)) throw Error("LightSource: brightness must be positive");
  if (!(mu >= 0.0)) throw Error("LightSource: mu must be non-negative");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw Error("LightSource: principal direction must be unit length");
}

LightSample light_vectors(const Vec3& p, const LightSource& light) {
  LightSample s;
  s.l = light.position - p;
  const double dist = s.l.norm();
  if (dist < 1e-6) throw Error("light_vectors: surface point coincides with the light position");
  s.l_hat = s.l / dist;
  const double c = std::max(-s.l_hat.dot(light.direction), 0.0);
  const double ang = c > 0.0 ? std::pow(c, light.mu) : (light.mu == 0.0 ? 1.0 : 0.0);
  s.attenuation = light.brightness * ang / (dist * dist);
  return s;
}

LightBatch light_vectors(Tape& tape, const Value& points, const std::vector<LightSource>& lights) {
  if (points.cols() != 3) throw d::ShapeError("light_vectors: points must be B x 3");
  const Eigen::Index B = points.rows();
  const Eigen::Index M = static_cast<Eigen::Index>(lights.size());
  const Eigen::Index K = B * M;
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(K));
  Matrix pos(K, 3), dir(K, 3), phi(K, 1), mu(K, 1);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index m = 0; m < M; ++m) {
      const Eigen::Index k = b * M + m;
      const LightSource& L = lights[static_cast<std::size_t>(m)];
      rows[static_cast<std::size_t>(k)] = b;
      pos.row(k) = L.position.transpose();
      dir.row(k) = L.direction.transpose();
      phi(k, 0) = L.brightness;
      mu(k, 0) = L.mu;
    }
  Value p = d::gather_rows(points, rows);
  const Matrix& pd = p.data();
  for (Eigen::Index k = 0; k < K; ++k)
    if ((pos.row(k) - pd.row(k)).norm() < 1e-6)
      throw Error("light_vectors: surface point coincides with the light position");

  LightBatch out;
  out.l = tape.constant(pos) - p;
  Value dist = d::norm(out.l);
  out.l_hat = out.l / dist;
  Value cosang = d::clamp_min(d::dot(out.l_hat, tape.constant(-dir)), 0.0);
  out.attenuation = tape.constant(phi) * d::power(cosang, mu) / d::square(dist);
  return out;
}

namespace {

Value reciprocal(const Value& x) {
  Tape& t = x.tape();
  return t.constant(Matrix::Ones(x.rows(), x.cols())) / x;
}

// Minimal rotation taking unit `from` onto +z, applied to rows x:
// R x = c x + a x x + a (a . x) / (1 + c), with a = from x z and c = from.z.
struct ToZenith {
  Value a;
  Value c;
  Value inv;

  ToZenith(Tape& t, const Value& from) {
    Matrix ez = Matrix::Zero(1, 3);
    ez(0, 2) = 1.0;
    a = d::cross(from, t.constant(ez));
    c = d::slice(from, 1, 2, 1);
    inv = reciprocal(d::clamp_min(c + 1.0, 1e-9));
  }

  Value apply(const Value& x) const { return c * x + d::cross(a, x) + a * (d::dot(a, x) * inv); }
};

void check_unit(const Value& v, const char* what) {
  if (v.cols() != 3) throw d::ShapeError(std::string("rusinkiewicz_angles: ") + what + " must be K x 3");
  const Matrix& m = v.data();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (std::abs(m.row(i).norm() - 1.0) > 1e-6) {
      std::ostringstream os;
      os << "rusinkiewicz_angles: " << what << " row " << i << " is not unit length (|x| = " << m.row(i).norm()
         << ")";
      throw Error(os.str());
    }
}

}  // namespace

BrdfAngles rusinkiewicz_angles(const Value& n, const Value& l, const Value& v) {
  check_unit(n, "normal");
  check_unit(l, "light direction");
  check_unit(v, "view direction");
  Tape& t = n.tape();
  const Eigen::Index K = n.rows();

  ToZenith to_normal(t, n);
  Value ln = to_normal.apply(l);
  Value vn = to_normal.apply(v);

  Value sum_lv = ln + vn;
  Value h = d::normalize(sum_lv);
  BrdfAngles out;
  out.theta_h = d::atan2(d::norm(d::slice(h, 1, 0, 2)), d::slice(h, 1, 2, 1));

  Value half_diff = 0.5 * (ln - vn);
  out.theta_d = d::atan2(d::norm(half_diff), d::norm(0.5 * sum_lv));

  ToZenith to_half(t, h);
  Value dvec = to_half.apply(half_diff);
  Value dx = d::slice(dvec, 1, 0, 1);
  Value dy = d::slice(dvec, 1, 1, 1);
  // Reciprocity: fold phi_d into [0, pi) by flipping (dx, dy) into the upper half-plane.
  Matrix flip(K, 1);
  const Matrix& dxd = dx.data();
  const Matrix& dyd = dy.data();
  for (Eigen::Index i = 0; i < K; ++i)
    flip(i, 0) = (dyd(i, 0) < 0.0 || (dyd(i, 0) == 0.0 && dxd(i, 0) < 0.0)) ? -1.0 : 1.0;
  Value fl = t.constant(flip);
  out.phi_d = d::atan2(fl * dy, fl * dx);

  out.sign_mask.resize(K, 1);
  const Matrix& nd = n.data();
  const Matrix& ld = l.data();
  const Matrix& vd = v.data();
  for (Eigen::Index i = 0; i < K; ++i) {
    const bool lit = nd.row(i).dot(ld.row(i)) > 0.0 && nd.row(i).dot(vd.row(i)) > 0.0 && vd.row(i).dot(ld.row(i)) > 0.0;
    out.sign_mask(i, 0) = lit ? 1.0 : 0.0;
  }
  return out;
}

BrdfAnglesScalar rusinkiewicz_angles(const Vec3& n, const Vec3& l, const Vec3& v) {
  Tape t;
  auto row = [&](const Vec3& x) { return t.constant(Matrix(x.transpose())); };
  Value nv = row(n), lv = row(l), vv = row(v);
  BrdfAngles a = rusinkiewicz_angles(nv, lv, vv);
  BrdfAnglesScalar s;
  s.theta_h = a.theta_h.item();
  s.theta_d = a.theta_d.item();
  s.phi_d = a.phi_d.item();
  s.sign_mask = static_cast<int>(a.sign_mask(0, 0));
  // phi_h is not used by the isotropic model; reported for completeness.
  ToZenith z(t, nv);
  const Matrix h = d::normalize(z.apply(lv) + z.apply(vv)).data();
  s.phi_h = std::atan2(h(0, 1), h(0, 0));
  return s;
}

BrdfNet::BrdfNet(BrdfConfig config, std::uint64_t seed, bool zero_head) : config_(config) {
  if (config_.hidden_layers < 1 || config_.hidden_width < 1) throw Error("BrdfConfig: layers and width must be >= 1");
  std::mt19937_64 rng(seed);
  int fan_in = 3;
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, config_.hidden_width);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    weights_.emplace_back("brdf.w" + std::to_string(l), w);
    biases_.emplace_back("brdf.b" + std::to_string(l), Matrix::Zero(1, config_.hidden_width));
    fan_in = config_.hidden_width;
  }
  Matrix head = Matrix::Zero(fan_in, 1);
  if (!zero_head) {
    const double bound = std::sqrt(1.0 / fan_in) * 0.25;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < head.rows(); ++i) head(i, 0) = dist(rng);
  }
  weights_.emplace_back("brdf.head_w", head);
  biases_.emplace_back("brdf.head_b", Matrix::Zero(1, 1));
}

std::vector<d::Parameter*> BrdfNet::parameters() {
  std::vector<d::Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const d::Parameter*> BrdfNet::parameters() const {
  std::vector<const d::Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

Value BrdfNet::forward(Tape& tape, const Value& angles) {
  if (angles.cols() != 3) throw d::ShapeError("BrdfNet::forward expects K x 3 angles");
  if (lambertian_) return tape.constant(Matrix::Ones(angles.rows(), 1));
  Value h = angles;
  const std::size_t L = weights_.size();
  for (std::size_t l = 0; l + 1 < L; ++l) h = d::relu(d::matmul(h, tape.param(weights_[l])) + tape.param(biases_[l]));
  return d::exp(d::matmul(h, tape.param(weights_[L - 1])) + tape.param(biases_[L - 1]));
}

double BrdfNet::evaluate(double theta_h, double theta_d, double phi_d) const {
  if (lambertian_) return 1.0;
  Matrix h(1, 3);
  h << theta_h, theta_d, phi_d;
  const std::size_t L = weights_.size();
  for (std::size_t l = 0; l + 1 < L; ++l)
    h = ((h * weights_[l].value) + biases_[l].value).cwiseMax(0.0);
  return std::exp((h * weights_[L - 1].value)(0, 0) + biases_[L - 1].value(0, 0));
}

Value brdf_eval(Tape& tape, BrdfNet& net, const BrdfAngles& angles, const Value& n, const Value& l_hat) {
  Value in = d::concat({angles.theta_h, angles.theta_d, angles.phi_d}, 1);
  Value mlp = net.forward(tape, in);
  Value cosine = d::clamp_min(d::dot(n, l_hat), 0.0);
  return tape.constant(angles.sign_mask) * cosine * mlp;
}

Value soft_shadow(Tape& tape, const Value& points, const Value& l_hat, const ShadowSource& source,
                  const ShadowConfig& cfg) {
  if (!source.field && !source.network) throw Error("soft_shadow: no height source");
  const Eigen::Index K = points.rows();
  const int S = cfg.samples;
  std::vector<Value> marched;
  marched.reserve(static_cast<std::size_t>(S));
  for (int k = 0; k < S; ++k) marched.push_back(points + (cfg.start_mm + cfg.step_mm * k) * l_hat);
  Value q = d::concat(marched, 0);  // (S*K) x 3, block k holds step k
  Value surface_z;
  if (source.full_backprop && source.network) {
    surface_z = source.network->surface(tape, d::slice(q, 1, 0, 2), false).height;
  } else {
    const HeightField& f = source.field ? *source.field : static_cast<const HeightField&>(*source.network);
    surface_z = tape.constant(f.heights(q.data().leftCols(2)));
  }
  Value occlusion = d::sigmoid(cfg.sharpness * (d::slice(q, 1, 2, 1) - surface_z));
  Value per_point = d::transpose(d::reshape(occlusion, S, K));  // K x S
  Value weights = d::softmax(cfg.smooth_max * per_point, 1);
  return 1.0 - d::sum(per_point * weights, 1);
}

Value to_shading_frame(Tape& tape, const Value& v) {
  Matrix flip(1, 3);
  flip << 1.0, -1.0, -1.0;
  return v * tape.constant(flip);
}

RenderResult render_intensity(Tape& tape, const Value& albedo, const Value& normal, const Value& points,
                              const Value& view, const std::vector<LightSource>& lights, BrdfNet& brdf,
                              const ShadowSource& shadow, const RenderOptions& options) {
  const Eigen::Index B = points.rows();
  const Eigen::Index M = static_cast<Eigen::Index>(lights.size());
  if (M == 0) throw Error("render_intensity: no lights");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(B * M));
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index m = 0; m < M; ++m) rows[static_cast<std::size_t>(b * M + m)] = b;

  LightBatch lb = light_vectors(tape, points, lights);
  Value n = d::gather_rows(normal, rows);
  Value vv = d::gather_rows(view, rows);
  Value rho = d::gather_rows(albedo, rows);

  Value ns = to_shading_frame(tape, n);
  Value ls = to_shading_frame(tape, lb.l_hat);
  Value vs = to_shading_frame(tape, vv);
  BrdfAngles ang = rusinkiewicz_angles(ns, ls, vs);
  Value f = brdf_eval(tape, brdf, ang, ns, ls);

  Value radiance = lb.attenuation * rho * f;
  RenderResult out;
  out.attenuation = d::reshape(lb.attenuation, B, M);
  out.brdf = d::reshape(f, B, M);
  if (options.shadows) {
    Value p = d::gather_rows(points, rows);
    Value s = soft_shadow(tape, p, lb.l_hat, shadow, options.shadow);
    out.shadow = d::reshape(s, B, M);
    radiance = s * radiance;
  }
  out.intensity = d::reshape(radiance, B, M);
  return out;
}

}  // namespace stereops
