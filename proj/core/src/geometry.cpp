#include "stereops/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stereops {

using diff::Tape;
using diff::Value;

void RigidTransform::validate() const {
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = R.determinant();
  if (ortho > 1e-9 || std::abs(det - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "RigidTransform: rotation is not proper orthonormal (|R^T R - I| = " << ortho << ", det = " << det << ")";
    throw Error(os.str());
  }
  if (!t.allFinite()) throw Error("RigidTransform: non-finite translation");
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("Camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw Error("Camera: image size must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) throw Error("Camera: principal point outside the image");
  camera_to_world.validate();
}

bool Camera::contains(double u, double v) const {
  return u >= -0.5 && v >= -0.5 && u <= width - 0.5 && v <= height - 0.5;
}

Vec3 Camera::pixel_ray(double u, double v) const {
  if (!contains(u, v)) {
    std::ostringstream os;
    os << "pixel (" << u << ", " << v << ") outside " << width << "x" << height << " image";
    throw Error(os.str());
  }
  return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
}

Vec3 Camera::back_project(double u, double v, double depth) const {
  const Vec3 d = pixel_ray(u, v);
  return d * (depth / d.z());
}

Vec2 Camera::project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }

std::vector<double> sample_depths(double range_min, double range_max, int n, std::mt19937_64* jitter) {
  if (!(range_min < range_max)) throw Error("sample_depths: degenerate depth range");
  if (n < 2) throw Error("sample_depths: need at least two samples");
  const double step = (range_max - range_min) / (n - 1);
  std::vector<double> d(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < n; ++i) {
    double x = range_min + step * i;
    if (jitter) x = std::clamp(x + step * u(*jitter), range_min, range_max);
    d[static_cast<std::size_t>(i)] = x;
  }
  if (!jitter) d.back() = range_max;
  return d;
}

RaySampleSet sample_ray(const Camera& cam, const Vec2& pixel, double range_min, double range_max, int n,
                        std::mt19937_64* jitter) {
  RaySampleSet s;
  s.view_dir = cam.pixel_ray(pixel.x(), pixel.y());
  s.depths = sample_depths(range_min, range_max, n, jitter);
  s.world_points.resize(n, 3);
  for (int i = 0; i < n; ++i)
    s.world_points.row(i) = cam.camera_to_world.apply(s.view_dir * s.depths[static_cast<std::size_t>(i)]).transpose();
  return s;
}

void check_sorted_depths(const Matrix& depths) {
  for (Eigen::Index r = 0; r < depths.rows(); ++r)
    for (Eigen::Index i = 1; i < depths.cols(); ++i)
      if (!(depths(r, i) > depths(r, i - 1)))
        throw Error("volumetric_reduce: sample depths of ray " + std::to_string(r) + " are not strictly increasing");
}

VolumetricResult volumetric_reduce(const Matrix& ray_depths, const Matrix& ray_heights, const Value& heights,
                                   const Value& normals, const Value& albedo, double f) {
  if (!(f > 0.0)) throw Error("volumetric_reduce: scale factor must be positive");
  const Eigen::Index B = ray_heights.rows(), N = ray_heights.cols();
  if (heights.rows() != B || heights.cols() != N || ray_depths.rows() != B || ray_depths.cols() != N)
    throw diff::ShapeError("volumetric_reduce: sample arrays must all be B x N");
  check_sorted_depths(ray_depths);
  Tape& t = heights.tape();

  Value diffz = heights - t.constant(ray_heights);
  Value alpha = diff::exp(-f * diff::square(diffz));
  Value trans = diff::cumprod_exclusive(1.0 - alpha);
  Value w = alpha * trans;
  Value total = diff::sum(w, 1);
  Value wn = w / total;

  VolumetricResult r;
  r.weights = wn;
  r.height = diff::sum(wn * heights, 1);
  r.hit.resize(static_cast<std::size_t>(B));
  const Matrix& tot = total.data();
  for (Eigen::Index b = 0; b < B; ++b) r.hit[static_cast<std::size_t>(b)] = tot(b, 0) > 1e-8;

  if (normals.valid()) {
    if (normals.rows() != B * N || normals.cols() != 3)
      throw diff::ShapeError("volumetric_reduce: normals must be (B*N) x 3");
    std::vector<Value> comps;
    for (int k = 0; k < 3; ++k) {
      Value nk = diff::reshape(diff::slice(normals, 1, k, 1), B, N);
      comps.push_back(diff::sum(wn * nk, 1));
    }
    r.normal = diff::normalize(diff::concat(comps, 1));
  }
  if (albedo.valid()) {
    if (albedo.rows() != B || albedo.cols() != N) throw diff::ShapeError("volumetric_reduce: albedo must be B x N");
    r.albedo = diff::sum(wn * albedo, 1);
  }
  return r;
}

Mat3 axis_angle(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

}  // namespace stereops
