#include "stereops/scenegen.hpp"

#include "stereops/dataio.hpp"
#include "stereops/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace stereops {

namespace fs = std::filesystem;

std::string to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Plane: return "plane";
    case SurfaceKind::Ramp: return "ramp";
    case SurfaceKind::SphereCap: return "sphere_cap";
    case SurfaceKind::GaussianBumps: return "gaussian_bumps";
    case SurfaceKind::StepWall: return "step_wall";
  }
  return "unknown";
}

SurfaceKind surface_kind_from_string(const std::string& name) {
  for (SurfaceKind k : {SurfaceKind::Plane, SurfaceKind::Ramp, SurfaceKind::SphereCap, SurfaceKind::GaussianBumps,
                        SurfaceKind::StepWall})
    if (to_string(k) == name) return k;
  throw Error("unknown surface kind '" + name + "'");
}

AnalyticSurface AnalyticSurface::plane(double depth) {
  AnalyticSurface s;
  s.kind = SurfaceKind::Plane;
  s.center.z() = depth;
  return s;
}

AnalyticSurface AnalyticSurface::ramp(double depth) {
  AnalyticSurface s = plane(depth);
  s.kind = SurfaceKind::Ramp;
  s.slope = Vec2(0.35, 0.15);
  return s;
}

AnalyticSurface AnalyticSurface::sphere_cap(double radius, double cap_height, double depth) {
  AnalyticSurface s;
  s.kind = SurfaceKind::SphereCap;
  s.center.z() = depth;
  s.radius = radius;
  s.cap_height = cap_height;
  // The domain is the cap's footprint, so there is no crease at the rim.
  s.extent = std::sqrt(radius * radius - (radius - cap_height) * (radius - cap_height));
  return s;
}

AnalyticSurface AnalyticSurface::gaussian_bumps(double depth) {
  AnalyticSurface s;
  s.kind = SurfaceKind::GaussianBumps;
  s.center.z() = depth;
  s.bumps = {{Vec2(-12.0, -8.0), 6.0, 9.0}, {Vec2(14.0, 4.0), 4.0, 7.0}, {Vec2(0.0, 16.0), -3.0, 8.0}};
  return s;
}

AnalyticSurface AnalyticSurface::step_wall(double depth) {
  AnalyticSurface s;
  s.kind = SurfaceKind::StepWall;
  s.center.z() = depth;
  return s;
}

AnalyticSurface AnalyticSurface::make(SurfaceKind kind, double depth) {
  switch (kind) {
    case SurfaceKind::Plane: return plane(depth);
    case SurfaceKind::Ramp: return ramp(depth);
    case SurfaceKind::SphereCap: return sphere_cap(40.0, 20.0, depth);
    case SurfaceKind::GaussianBumps: return gaussian_bumps(depth);
    case SurfaceKind::StepWall: return step_wall(depth);
  }
  throw Error("unknown surface kind");
}

void AnalyticSurface::validate() const {
  if (!(extent > 0.0)) throw Error("AnalyticSurface: extent must be positive");
  if (kind == SurfaceKind::SphereCap) {
    if (!(radius > 0.0) || !(cap_height > 0.0) || cap_height >= radius)
      throw Error("AnalyticSurface: sphere cap needs 0 < cap_height < radius");
    const double base = std::sqrt(radius * radius - (radius - cap_height) * (radius - cap_height));
    if (extent > base + 1e-9) throw Error("AnalyticSurface: sphere cap domain exceeds the cap footprint");
  }
  if (kind == SurfaceKind::StepWall && !(wall_width > 0.0)) throw Error("AnalyticSurface: wall width must be positive");
  for (const auto& b : bumps)
    if (!(b.sigma > 0.0)) throw Error("AnalyticSurface: bump sigma must be positive");
}

namespace {
double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace

double AnalyticSurface::z(double x, double y) const {
  const double dx = x - center.x(), dy = y - center.y();
  switch (kind) {
    case SurfaceKind::Plane:
    case SurfaceKind::Ramp: return center.z() + slope.x() * dx + slope.y() * dy;
    case SurfaceKind::SphereCap: {
      const double r2 = std::min(dx * dx + dy * dy, radius * radius);
      return center.z() - (std::sqrt(radius * radius - r2) - (radius - cap_height));
    }
    case SurfaceKind::GaussianBumps: {
      double z = center.z();
      for (const auto& b : bumps) {
        const double ex = dx - b.center.x(), ey = dy - b.center.y();
        z -= b.amplitude * std::exp(-(ex * ex + ey * ey) / (2.0 * b.sigma * b.sigma));
      }
      return z;
    }
    case SurfaceKind::StepWall: return center.z() - wall_height * logistic((dx - wall_offset) / wall_width);
  }
  return center.z();
}

Vec2 AnalyticSurface::gradient(double x, double y) const {
  const double dx = x - center.x(), dy = y - center.y();
  switch (kind) {
    case SurfaceKind::Plane:
    case SurfaceKind::Ramp: return slope;
    case SurfaceKind::SphereCap: {
      const double h = std::sqrt(std::max(radius * radius - dx * dx - dy * dy, 1e-12));
      return {dx / h, dy / h};
    }
    case SurfaceKind::GaussianBumps: {
      Vec2 g = Vec2::Zero();
      for (const auto& b : bumps) {
        const double ex = dx - b.center.x(), ey = dy - b.center.y();
        const double e = b.amplitude * std::exp(-(ex * ex + ey * ey) / (2.0 * b.sigma * b.sigma));
        g += e / (b.sigma * b.sigma) * Vec2(ex, ey);
      }
      return g;
    }
    case SurfaceKind::StepWall: {
      const double s = logistic((dx - wall_offset) / wall_width);
      return {-wall_height * s * (1.0 - s) / wall_width, 0.0};
    }
  }
  return Vec2::Zero();
}

Vec3 AnalyticSurface::normal(double x, double y) const {
  const Vec2 g = gradient(x, y);
  return Vec3(g.x(), g.y(), -1.0).normalized();
}

bool AnalyticSurface::in_domain(double x, double y) const {
  const double dx = x - center.x(), dy = y - center.y();
  return dx * dx + dy * dy <= extent * extent;
}

std::pair<double, double> AnalyticSurface::height_bounds() const {
  switch (kind) {
    case SurfaceKind::Plane:
    case SurfaceKind::Ramp: {
      const double r = slope.norm() * extent;
      return {center.z() - r, center.z() + r};
    }
    case SurfaceKind::SphereCap: return {center.z() - cap_height, center.z()};
    case SurfaceKind::GaussianBumps: {
      double lo = center.z(), hi = center.z();
      for (const auto& b : bumps) (b.amplitude > 0 ? lo : hi) -= b.amplitude;
      return {lo, hi};
    }
    case SurfaceKind::StepWall: return {center.z() - wall_height, center.z()};
  }
  return {center.z(), center.z()};
}

Matrix AnalyticSurface::heights(const Matrix& xy) const {
  if (xy.cols() != 2) throw Error("AnalyticSurface::heights expects N x 2 coordinates");
  Matrix out(xy.rows(), 1);
  for (Eigen::Index i = 0; i < xy.rows(); ++i) out(i, 0) = z(xy(i, 0), xy(i, 1));
  return out;
}

void ReferenceMaterial::validate() const {
  if (!(albedo > 0.0) || albedo > 1.0) throw Error("ReferenceMaterial: albedo must lie in (0, 1]");
  if (!(specular >= 0.0)) throw Error("ReferenceMaterial: specular strength must be non-negative");
  if (kind == MaterialKind::Phong && !(shininess > 0.0)) throw Error("ReferenceMaterial: shininess must be positive");
}

namespace {

RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(z) * z;
  x.normalize();
  const Vec3 y = z.cross(x);
  RigidTransform T;
  T.R.col(0) = x;
  T.R.col(1) = y;
  T.R.col(2) = z;
  T.t = eye;
  return T;
}

}  // namespace

Rig make_default_rig(const RigConfig& c) {
  if (c.resolution < 2 || c.lights < 3) throw Error("make_default_rig: need resolution >= 2 and at least 3 lights");
  Rig rig;
  const Vec3 target(0.0, 0.0, c.distance);
  const double f = c.resolution * c.distance / c.field_mm;
  for (int v = 0; v < 2; ++v) {
    Camera& cam = rig.cameras[static_cast<std::size_t>(v)];
    cam.fx = cam.fy = f;
    cam.cx = cam.cy = (c.resolution - 1) / 2.0;
    cam.width = cam.height = c.resolution;
    const Vec3 eye((v == 0 ? -0.5 : 0.5) * c.baseline, 0.0, 0.0);
    cam.camera_to_world = look_at(eye, target);
    cam.validate();
  }
  for (int m = 0; m < c.lights; ++m) {
    const double a = 2.0 * kPi * m / c.lights;
    LightSource L;
    L.position = Vec3(c.ring_radius * std::cos(a), c.ring_radius * std::sin(a), 0.0);
    L.direction = (target - L.position).normalized();
    L.brightness = c.brightness * (1.0 + 0.1 * std::sin(1.7 * m));
    L.mu = c.mu * (1.0 + 0.2 * std::cos(2.3 * m));
    rig.lights.push_back(L);
  }
  return rig;
}

double reference_render(const Vec3& point, const Vec3& normal, const ReferenceMaterial& material,
                        const LightSource& light, const Vec3& view) {
  const Vec3 l = light.position - point;
  const double dist = l.norm();
  const Vec3 lh = l / dist;
  const double c = std::max(-lh.dot(light.direction), 0.0);
  const double a = light.brightness * (light.mu == 0.0 ? 1.0 : std::pow(c, light.mu)) / (dist * dist);
  const double ndotl = normal.dot(lh);
  if (ndotl <= 0.0) return 0.0;
  double value = material.albedo * a * ndotl;
  if (material.kind == MaterialKind::Phong && material.specular > 0.0) {
    const Vec3 r = 2.0 * ndotl * normal - lh;
    value += material.specular * a * std::pow(std::max(r.dot(view), 0.0), material.shininess);
  }
  return value;
}

std::optional<Vec3> intersect_surface(const AnalyticSurface& s, const Vec3& o, const Vec3& d, double step) {
  if (!(d.z() > 0.0)) return std::nullopt;
  const auto [zlo, zhi] = s.height_bounds();
  const double t0 = std::max((zlo - 1.0 - o.z()) / d.z(), 0.0);
  const double t1 = (zhi + 1.0 - o.z()) / d.z();
  auto g = [&](double t) {
    const Vec3 p = o + t * d;
    return p.z() - s.z(p.x(), p.y());
  };
  auto inside = [&](double t) {
    const Vec3 p = o + t * d;
    return s.in_domain(p.x(), p.y());
  };
  double ta = t0, ga = g(ta);
  bool ina = inside(ta);
  for (double tb = t0 + step; tb <= t1 + step; tb += step) {
    const double gb = g(tb);
    const bool inb = inside(tb);
    if (ina && inb && ga < 0.0 && gb >= 0.0) {
      double lo = ta, hi = tb;
      for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
      }
      const double t = 0.5 * (lo + hi);
      return o + t * d;
    }
    ta = tb;
    ga = gb;
    ina = inb;
  }
  return std::nullopt;
}

bool hard_shadow(const AnalyticSurface& s, const Vec3& p, const Vec3& light_position, double step) {
  const Vec3 l = light_position - p;
  const double len = l.norm();
  const Vec3 dir = l / len;
  const double zlo = s.height_bounds().first;
  for (double t = step; t < len; t += step) {
    const Vec3 q = p + t * dir;
    if (q.z() < zlo) return false;
    if (!s.in_domain(q.x(), q.y())) return false;
    if (q.z() > s.z(q.x(), q.y())) return true;
  }
  return false;
}

Scene render_scene(const SceneConfig& config) {
  config.surface.validate();
  config.material.validate();
  if (config.rig.lights.size() < 3) throw Error("render_scene: at least 3 lights are required");
  for (const auto& L : config.rig.lights) L.validate();
  Scene scene;
  scene.config = config;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, config.noise_sigma > 0.0 ? config.noise_sigma : 1.0);
  const std::size_t M = config.rig.lights.size();

  for (std::size_t v = 0; v < 2; ++v) {
    const Camera& cam = config.rig.cameras[v];
    cam.validate();
    ViewRender& out = scene.views[v];
    const int W = cam.width, H = cam.height;
    out.mask = Matrix::Zero(H, W);
    out.depth = Matrix::Zero(H, W);
    for (auto& n : out.normal) n = Matrix::Zero(H, W);
    out.images.assign(M, Matrix::Zero(H, W));
    out.valid.assign(M, Matrix::Zero(H, W));
    out.lit.assign(M, Matrix::Zero(H, W));
    std::vector<Vec3> pts, nrm;
    const Vec3 o = cam.center_world();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Vec3 d = cam.camera_to_world.rotate(cam.pixel_ray(x, y));
        const auto hit = intersect_surface(config.surface, o, d);
        if (!hit) continue;
        const Vec3 p = *hit;
        const Vec3 n = config.surface.normal(p.x(), p.y());
        const Vec3 view = (o - p).normalized();
        out.mask(y, x) = 1.0;
        out.depth(y, x) = cam.camera_to_world.apply_inverse(p).z();
        const Vec3 nc = cam.camera_to_world.R.transpose() * n;
        for (int k = 0; k < 3; ++k) out.normal[static_cast<std::size_t>(k)](y, x) = nc(k);
        for (std::size_t m = 0; m < M; ++m) {
          const LightSource& L = config.rig.lights[m];
          const bool shadowed = config.shadows && hard_shadow(config.surface, p, L.position);
          out.lit[m](y, x) = shadowed ? 0.0 : 1.0;
          double value = shadowed ? 0.0 : reference_render(p, n, config.material, L, view);
          if (config.noise_sigma > 0.0) value += noise(rng);
          out.valid[m](y, x) = value < 1.0 ? 1.0 : 0.0;
          out.images[m](y, x) = std::clamp(value, 0.0, 1.0);
        }
        pts.push_back(p);
        nrm.push_back(n);
        out.pixels.push_back({x, y});
      }
    out.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
    out.world_normals.resize(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
      out.world_normals.row(static_cast<Eigen::Index>(i)) = nrm[i].transpose();
    }
  }
  if (scene.views[0].points.rows() == 0 && scene.views[1].points.rows() == 0)
    throw Error("render_scene: the surface is outside both camera frusta");
  return scene;
}

Vec3 perturb_normal(const Vec3& n, double sigma_rad, std::mt19937_64& rng) {
  if (sigma_rad <= 0.0) return n;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * kPi);
  Vec3 a = n.unitOrthogonal();
  const Vec3 b = n.cross(a);
  const double phi = uni(rng);
  const Vec3 axis = std::cos(phi) * a + std::sin(phi) * b;
  const double angle = std::abs(gauss(rng)) * sigma_rad;
  return (axis_angle(axis, angle) * n).normalized();
}

ViewEstimate perturbed_estimates(const std::array<Matrix, 3>& normals, const Matrix& depth, const Matrix& mask,
                                 const EstimateNoise& noise, std::mt19937_64& rng) {
  ViewEstimate e;
  e.normal = normals;
  e.depth = depth;
  const auto H = depth.rows(), W = depth.cols();
  std::uniform_real_distribution<double> uni(0.0, 2.0 * kPi);
  const double orient = uni(rng), phase = uni(rng);
  const double period = 2.0 * static_cast<double>(W);
  const Vec2 k = 2.0 * kPi / period * Vec2(std::cos(orient), std::sin(orient));
  const double sigma = noise.angular_noise_deg * kDegToRad;
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      if (mask(y, x) < 0.5) continue;
      if (sigma > 0.0) {
        const Vec3 n(normals[0](y, x), normals[1](y, x), normals[2](y, x));
        const Vec3 p = perturb_normal(n, sigma, rng);
        for (int c = 0; c < 3; ++c) e.normal[static_cast<std::size_t>(c)](y, x) = p(c);
      }
      if (noise.depth_bias_mm != 0.0) {
        const double b = noise.bias == BiasKind::Constant
                             ? noise.depth_bias_mm
                             : noise.depth_bias_mm * std::sin(k.x() * static_cast<double>(x) + k.y() * static_cast<double>(y) + phase);
        e.depth(y, x) += b;
      }
    }
  return e;
}

void write_dataset(const Scene& scene, const std::array<ViewEstimate, 2>& estimates, const std::string& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.root = dir;
  m.name = to_string(scene.config.surface.kind);
  m.lights = "lights.txt";
  write_lights(scene.config.rig.lights, (fs::path(dir) / m.lights).string());
  for (std::size_t v = 0; v < 2; ++v) {
    const std::string vdir = "view" + std::to_string(v + 1);
    fs::create_directories(fs::path(dir) / vdir);
    const ViewRender& r = scene.views[v];
    const ViewEstimate& e = estimates[v];
    ViewFiles& f = m.views[v];
    f.camera = vdir + "/camera.txt";
    f.mask = vdir + "/mask.png";
    f.normal_estimate = vdir + "/normal_est.pfm";
    f.depth_estimate = vdir + "/depth_est.pfm";
    f.gt_depth = vdir + "/gt_depth.pfm";
    f.gt_normal = vdir + "/gt_normal.pfm";
    write_camera(scene.config.rig.cameras[v], m.resolve(f.camera));
    write_png(m.resolve(f.mask), Image::from_planes({r.mask}), 8);
    write_pfm(m.resolve(f.normal_estimate), Image::from_planes({e.normal[0], e.normal[1], e.normal[2]}));
    write_pfm(m.resolve(f.depth_estimate), Image::from_planes({e.depth}));
    write_pfm(m.resolve(f.gt_depth), Image::from_planes({r.depth}));
    write_pfm(m.resolve(f.gt_normal), Image::from_planes({r.normal[0], r.normal[1], r.normal[2]}));
    for (std::size_t i = 0; i < r.images.size(); ++i) {
      std::ostringstream name;
      name << vdir << "/img_" << std::setw(2) << std::setfill('0') << i << ".png";
      f.images.push_back(name.str());
      write_png(m.resolve(name.str()), Image::from_planes({r.images[i]}), 16);
    }
  }
  write_manifest(m, (fs::path(dir) / "manifest.txt").string());
}

}  // namespace stereops
