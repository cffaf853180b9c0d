#include "stereops/scenegen.hpp"
#include "stereops/shading.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace stereops;
namespace d = stereops::diff;

namespace {

const SurfaceKind kAllKinds[] = {SurfaceKind::Plane, SurfaceKind::Ramp, SurfaceKind::SphereCap,
                                 SurfaceKind::GaussianBumps, SurfaceKind::StepWall};

/// Two fronto-parallel cameras 60 mm apart and three lights.
Rig straight_rig(int resolution = 64) {
  Rig rig;
  for (int v = 0; v < 2; ++v) {
    Camera& c = rig.cameras[static_cast<std::size_t>(v)];
    c.fx = c.fy = 100;
    c.cx = c.cy = resolution / 2;
    c.width = c.height = resolution;
    c.camera_to_world.t = Vec3(v == 0 ? 0.0 : 60.0, 0, 0);
  }
  for (int m = 0; m < 3; ++m) {
    LightSource L;
    L.position = Vec3(10.0 * m - 10, 5, 0);
    L.brightness = 1e4;
    rig.lights.push_back(L);
  }
  return rig;
}

TEST(AnalyticSurface, GradientsMatchFiniteDifferences) {
  for (auto kind : kAllKinds) {
    if (kind == SurfaceKind::StepWall) continue;
    const AnalyticSurface s = AnalyticSurface::make(kind);
    for (double x = -25; x <= 25; x += 7)
      for (double y = -25; y <= 25; y += 9) {
        const double h = 1e-5;
        const Vec2 g = s.gradient(x, y);
        EXPECT_NEAR(g.x(), (s.z(x + h, y) - s.z(x - h, y)) / (2 * h), 1e-6) << to_string(kind);
        EXPECT_NEAR(g.y(), (s.z(x, y + h) - s.z(x, y - h)) / (2 * h), 1e-6) << to_string(kind);
        const Vec3 n = s.normal(x, y);
        EXPECT_NEAR(n.norm(), 1.0, 1e-12);
        EXPECT_LT(n.z(), 0.0);
      }
  }
}

TEST(AnalyticSurface, HeightBoundsContainSamples) {
  for (auto kind : kAllKinds) {
    const AnalyticSurface s = AnalyticSurface::make(kind);
    const auto [lo, hi] = s.height_bounds();
    for (double x = -40; x <= 40; x += 2)
      for (double y = -40; y <= 40; y += 2) {
        if (!s.in_domain(x, y)) continue;
        EXPECT_GE(s.z(x, y), lo - 1e-9);
        EXPECT_LE(s.z(x, y), hi + 1e-9);
      }
  }
}

TEST(RenderScene, PlaneUnderHeadlightMatchesHandFormula) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::plane(170);
  sc.rig = straight_rig();
  sc.rig.lights[0].position = Vec3::Zero();
  sc.shadows = false;
  const Scene s = render_scene(sc);
  const double expect = sc.material.albedo * 1e4 / (170.0 * 170.0);
  EXPECT_NEAR(s.views[0].images[0](32, 32), expect, 1e-10);
  EXPECT_EQ(s.views[0].mask(32, 32), 1.0);
  EXPECT_NEAR(s.views[0].depth(32, 32), 170.0, 1e-9);
}

TEST(RenderScene, MaskMarksExactlyTheRaysThatHitTheDomain) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::sphere_cap();
  RigConfig rc;
  rc.resolution = 32;
  rc.field_mm = 120;
  sc.rig = make_default_rig(rc);
  const Scene s = render_scene(sc);
  for (std::size_t v = 0; v < 2; ++v) {
    const Camera& cam = sc.rig.cameras[v];
    long inside = 0, outside = 0;
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const auto hit = intersect_surface(sc.surface, cam.center_world(), cam.camera_to_world.rotate(cam.pixel_ray(x, y)));
        EXPECT_EQ(s.views[v].mask(y, x) > 0.5, hit.has_value()) << x << "," << y;
        if (hit) {
          EXPECT_TRUE(sc.surface.in_domain(hit->x(), hit->y()));
          ++inside;
        } else {
          ++outside;
        }
      }
    EXPECT_GT(inside, 0);
    EXPECT_GT(outside, 0);
  }
}

TEST(RenderScene, StepWallShadowsDependOnLightElevation) {
  auto shadowed_pixels = [](const Vec3& light_dir) {
    SceneConfig sc;
    sc.surface = AnalyticSurface::step_wall();
    RigConfig rc;
    rc.resolution = 48;
    sc.rig = make_default_rig(rc);
    for (auto& L : sc.rig.lights) {
      L.position = Vec3(0, 0, 170) + 300 * light_dir;
      L.direction = -light_dir;
      L.mu = 0;
    }
    const Scene s = render_scene(sc);
    long n = 0;
    for (const auto& v : s.views) n += static_cast<long>(((1.0 - v.lit[0].array()) * v.mask.array()).sum());
    return n;
  };
  const double e = 30 * kDegToRad;
  EXPECT_GT(shadowed_pixels(Vec3(std::cos(e), 0, -std::sin(e))), 0);
  EXPECT_EQ(shadowed_pixels(Vec3(0, 0, -1)), 0);
}

TEST(RenderScene, SurfaceOutsideBothViewsThrows) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::plane();
  sc.surface.center = Vec3(2000, 0, 170);
  EXPECT_THROW(render_scene(sc), Error);
}

TEST(RenderScene, GroundTruthDepthIsConsistentAcrossViews) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::gaussian_bumps();
  RigConfig rc;
  rc.resolution = 96;
  sc.rig = make_default_rig(rc);
  const Scene s = render_scene(sc);
  const Camera& c1 = sc.rig.cameras[0];
  const Camera& c2 = sc.rig.cameras[1];
  const Matrix& d2 = s.views[1].depth;
  const Matrix& m2 = s.views[1].mask;
  long checked = 0;
  for (int y = 0; y < c1.height; ++y)
    for (int x = 0; x < c1.width; ++x) {
      if (s.views[0].mask(y, x) < 0.5) continue;
      const Vec3 p = c1.camera_to_world.apply(c1.back_project(x, y, s.views[0].depth(y, x)));
      const Vec3 q = c2.camera_to_world.apply_inverse(p);
      const Vec2 uv = c2.project(q);
      const int u0 = static_cast<int>(std::floor(uv.x())), v0 = static_cast<int>(std::floor(uv.y()));
      if (u0 < 0 || v0 < 0 || u0 + 1 >= c2.width || v0 + 1 >= c2.height) continue;
      if (m2.block(v0, u0, 2, 2).minCoeff() < 0.5) continue;
      const double fu = uv.x() - u0, fv = uv.y() - v0;
      const double z = (1 - fv) * ((1 - fu) * d2(v0, u0) + fu * d2(v0, u0 + 1)) +
                       fv * ((1 - fu) * d2(v0 + 1, u0) + fu * d2(v0 + 1, u0 + 1));
      // Skip points hidden from view 2.
      if (std::abs(z - q.z()) > 1.0) continue;
      EXPECT_NEAR(z, q.z(), 0.05) << x << "," << y;
      ++checked;
    }
  EXPECT_GT(checked, 1000);
}

TEST(ReferenceRender, BackfacingIsZero) {
  LightSource L;
  L.position = Vec3(0, 0, 300);
  EXPECT_EQ(reference_render(Vec3(0, 0, 170), Vec3(0, 0, -1), ReferenceMaterial{}, L, Vec3(0, 0, -1)), 0.0);
}

TEST(ReferenceRender, PhongPeaksInMirrorDirection) {
  ReferenceMaterial m;
  m.kind = MaterialKind::Phong;
  m.specular = 0.5;
  LightSource L;
  L.position = Vec3(0, 0, 170) + 100 * Vec3(1, 0, -1).normalized();
  const Vec3 p(0, 0, 170), n(0, 0, -1);
  const Vec3 mirror = Vec3(-1, 0, -1).normalized();
  const double peak = reference_render(p, n, m, L, mirror);
  for (double a = -0.3; a <= 0.3; a += 0.05) {
    if (std::abs(a) < 1e-12) continue;
    const Vec3 v = Eigen::AngleAxisd(a, Vec3::UnitY()) * mirror;
    EXPECT_LT(reference_render(p, n, m, L, v), peak);
  }
}

TEST(ReferenceRender, LambertianMatchesShadingModule) {
  const Rig rig = make_default_rig();
  BrdfNet brdf;
  brdf.set_lambertian(true);
  ReferenceMaterial m;
  m.albedo = 0.7;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int probe = 0; probe < 20; ++probe) {
    const Vec3 p(g(rng) * 15, g(rng) * 15, 170 + g(rng) * 5);
    const Vec3 n = Vec3(g(rng) * 0.3, g(rng) * 0.3, -1).normalized();
    const Vec3 v = (rig.cameras[0].center_world() - p).normalized();
    d::Tape t;
    const auto r = render_intensity(t, t.constant(Matrix::Constant(1, 1, m.albedo)), t.constant(Matrix(n.transpose())),
                                    t.constant(Matrix(p.transpose())), t.constant(Matrix(v.transpose())), rig.lights,
                                    brdf, {}, RenderOptions{false, {}});
    for (std::size_t k = 0; k < rig.lights.size(); ++k)
      EXPECT_NEAR(r.intensity.data()(0, static_cast<Eigen::Index>(k)), reference_render(p, n, m, rig.lights[k], v),
                  1e-10);
  }
}

TEST(PerturbedEstimates, ZeroNoiseIsIdentity) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::sphere_cap();
  RigConfig rc;
  rc.resolution = 24;
  sc.rig = make_default_rig(rc);
  const Scene s = render_scene(sc);
  std::mt19937_64 rng(2);
  const auto e = perturbed_estimates(s.views[0].normal, s.views[0].depth, s.views[0].mask, {}, rng);
  EXPECT_EQ(e.depth, s.views[0].depth);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(e.normal[static_cast<std::size_t>(c)], s.views[0].normal[static_cast<std::size_t>(c)]);
}

TEST(PerturbedEstimates, BiasFieldStaysWithinAmplitude) {
  const Matrix depth = Matrix::Constant(40, 40, 170), mask = Matrix::Ones(40, 40);
  std::array<Matrix, 3> n{Matrix::Zero(40, 40), Matrix::Zero(40, 40), Matrix::Constant(40, 40, -1)};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto e = perturbed_estimates(n, depth, mask, {0.0, 2.0, BiasKind::Smooth}, rng);
    const Matrix b = e.depth - depth;
    EXPECT_LE(b.cwiseAbs().maxCoeff(), 2.0 + 1e-12);
    EXPECT_GT(b.cwiseAbs().maxCoeff(), 0.5);
  }
  const auto c = perturbed_estimates(n, depth, mask, {0.0, -1.5, BiasKind::Constant}, rng);
  EXPECT_TRUE(((c.depth - depth).array() == -1.5).all());
}

TEST(PerturbedEstimates, MeanAngularPerturbationIsHalfNormal) {
  std::mt19937_64 rng(4);
  const double sigma = 5 * kDegToRad;
  const Vec3 n = Vec3(0.2, -0.1, -1).normalized();
  double sum = 0;
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    const Vec3 p = perturb_normal(n, sigma, rng);
    sum += std::acos(std::clamp(p.dot(n), -1.0, 1.0));
  }
  const double expect = sigma * std::sqrt(2 / kPi);
  EXPECT_NEAR(sum / N, expect, 0.1 * expect);
}

TEST(ReferenceMaterial, InvalidParametersThrow) {
  ReferenceMaterial m;
  m.albedo = 0;
  EXPECT_THROW(m.validate(), Error);
  m.albedo = 0.5;
  m.specular = -0.1;
  EXPECT_THROW(m.validate(), Error);
}

}  // namespace
