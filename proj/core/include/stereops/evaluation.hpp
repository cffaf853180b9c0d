#pragma once

#include "stereops/common.hpp"
#include "stereops/heightmap.hpp"
#include "stereops/image_io.hpp"
#include "stereops/shading.hpp"

#include <array>
#include <string>
#include <vector>

namespace stereops {

struct TriangleMesh {
  Matrix vertices;                      // V x 3, mm
  std::vector<std::array<int, 3>> faces;
};

struct ShapeErrorReport {
  std::vector<double> distances;  // one per ground-truth point, mm
  double mean = 0.0;
  double median = 0.0;
};

/// One-directional distances from each ground-truth point to the nearest
/// reconstructed point.
ShapeErrorReport shape_error(const Matrix& gt_points, const Matrix& recon_points);
/// Same, against the mesh surface: the triangles incident to the nearest
/// vertices are searched for the closest point.
ShapeErrorReport shape_error(const Matrix& gt_points, const TriangleMesh& recon);

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct NormalErrorReport {
  Matrix per_pixel;  // degrees, 0 outside the mask
  double mean = 0.0;
  double median = 0.0;
};

/// Angle between normal maps (degrees) over mask pixels.
NormalErrorReport normal_error(const std::array<Matrix, 3>& predicted, const std::array<Matrix, 3>& gt, const Matrix& mask);

double median(std::vector<double> values);

/// Four-segment jet on t in [0, 1]: dark blue (0, 0, 0.5) at 0 to dark red
/// (0.5, 0, 0) at 1.
Vec3 jet(double t);

/// RGB error map in jet, saturating at `saturation_mm`; pixels outside the mask are black.
Image error_map(const Matrix& error, const Matrix& mask, double saturation_mm = 1.5);

/// Regular grid over [x0, x1] x [y0, y1] with nx x ny vertices. Grid points
/// where `mask` (ny x nx) is zero are dropped, as are faces touching them.
struct GridDomain {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  int nx = 2, ny = 2;
  Matrix mask;  // empty means all inside
};

/// Grid bounding the xy footprint of `points`; a grid point is inside when a
/// point lies within `radius` mm of it in xy.
GridDomain domain_from_points(const Matrix& points, int resolution, double radius);

TriangleMesh export_mesh(const HeightField& field, const GridDomain& domain);
void write_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh read_obj(const std::string& path);

/// First crossing of each ray (rows of origins/directions, unit) with the
/// height field within [t_lo, t_hi], found by stepping and bisection.
/// Returns the distance along each ray, NaN for misses.
Matrix march_heightfield(const HeightField& field, const Matrix& origins, const Matrix& directions, const Matrix& t_lo,
                         const Matrix& t_hi, double step = 0.25);

struct BrdfSphere {
  Matrix value;  // MLP value without the n.l factor; NaN where undefined
  Image image;   // RGBA, transparent outside the sphere
};

/// Orthographic sphere with v = [0, 0, 1] and l = [0, sqrt(2)/2, sqrt(2)/2] in
/// the shading frame. Colours: jet over [0, 2], so 1 is green and >= 2 dark red;
/// sign-masked pixels are dark grey.
BrdfSphere render_brdf_sphere(BrdfNet& brdf, int size = 128);

}  // namespace stereops
