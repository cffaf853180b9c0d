#include "stereops/evaluation.hpp"

#include "stereops/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace stereops {

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

ShapeErrorReport summarise(std::vector<double> d) {
  ShapeErrorReport r;
  double sum = 0.0;
  for (double x : d) sum += x;
  r.mean = sum / static_cast<double>(d.size());
  r.median = median(d);
  r.distances = std::move(d);
  return r;
}

void check_points(const Matrix& m, const char* what) {
  if (m.cols() != 3) throw Error(std::string("shape_error: ") + what + " must be N x 3");
  if (m.rows() == 0) throw Error(std::string("shape_error: ") + what + " is empty");
}

}  // namespace

ShapeErrorReport shape_error(const Matrix& gt, const Matrix& recon) {
  check_points(gt, "ground truth");
  check_points(recon, "reconstruction");
  const KdTree tree(recon);
  std::vector<double> d(static_cast<std::size_t>(gt.rows()));
  for (Eigen::Index i = 0; i < gt.rows(); ++i) d[static_cast<std::size_t>(i)] = tree.nearest(gt.row(i).transpose()).distance;
  return summarise(std::move(d));
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Region tests on the barycentric coordinates (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + d1 / (d1 - d3) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

ShapeErrorReport shape_error(const Matrix& gt, const TriangleMesh& mesh) {
  check_points(gt, "ground truth");
  check_points(mesh.vertices, "reconstruction");
  const KdTree tree(mesh.vertices);
  std::vector<std::vector<int>> incident(static_cast<std::size_t>(mesh.vertices.rows()));
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int v : mesh.faces[f]) incident[static_cast<std::size_t>(v)].push_back(static_cast<int>(f));
  const int k = static_cast<int>(std::min<Eigen::Index>(8, mesh.vertices.rows()));
  std::vector<double> d(static_cast<std::size_t>(gt.rows()));
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    const Vec3 p = gt.row(i).transpose();
    const auto hits = tree.k_nearest(p, k);
    double best = hits.front().distance;
    for (const auto& h : hits)
      for (int f : incident[static_cast<std::size_t>(h.index)]) {
        const auto& tri = mesh.faces[static_cast<std::size_t>(f)];
        const Vec3 q = closest_point_on_triangle(p, mesh.vertices.row(tri[0]).transpose(), mesh.vertices.row(tri[1]).transpose(),
                                                 mesh.vertices.row(tri[2]).transpose());
        best = std::min(best, (q - p).norm());
      }
    d[static_cast<std::size_t>(i)] = best;
  }
  return summarise(std::move(d));
}

NormalErrorReport normal_error(const std::array<Matrix, 3>& pred, const std::array<Matrix, 3>& gt, const Matrix& mask) {
  for (int c = 0; c < 3; ++c)
    if (pred[static_cast<std::size_t>(c)].rows() != mask.rows() || pred[static_cast<std::size_t>(c)].cols() != mask.cols() ||
        gt[static_cast<std::size_t>(c)].rows() != mask.rows() || gt[static_cast<std::size_t>(c)].cols() != mask.cols())
      throw Error("normal_error: map sizes differ");
  NormalErrorReport r;
  r.per_pixel = Matrix::Zero(mask.rows(), mask.cols());
  std::vector<double> all;
  for (Eigen::Index y = 0; y < mask.rows(); ++y)
    for (Eigen::Index x = 0; x < mask.cols(); ++x) {
      if (mask(y, x) < 0.5) continue;
      Vec3 a(pred[0](y, x), pred[1](y, x), pred[2](y, x));
      Vec3 b(gt[0](y, x), gt[1](y, x), gt[2](y, x));
      const double na = a.norm(), nb = b.norm();
      if (na == 0.0 || nb == 0.0) throw Error("normal_error: zero-length normal inside the mask");
      const double e = std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0)) * kRadToDeg;
      r.per_pixel(y, x) = e;
      all.push_back(e);
    }
  if (all.empty()) throw Error("normal_error: empty mask");
  double sum = 0.0;
  for (double e : all) sum += e;
  r.mean = sum / static_cast<double>(all.size());
  r.median = median(all);
  return r;
}

Vec3 jet(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  return {ramp(4.0 * t - 3.0), ramp(4.0 * t - 2.0), ramp(4.0 * t - 1.0)};
}

Image error_map(const Matrix& error, const Matrix& mask, double saturation) {
  if (!(saturation > 0.0)) throw Error("error_map: saturation must be positive");
  if (error.rows() != mask.rows() || error.cols() != mask.cols()) throw Error("error_map: size mismatch");
  Image img(static_cast<int>(error.cols()), static_cast<int>(error.rows()), 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (mask(y, x) < 0.5) continue;
      const Vec3 c = jet(error(y, x) / saturation);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c(k);
    }
  return img;
}

GridDomain domain_from_points(const Matrix& points, int resolution, double radius) {
  if (points.rows() == 0 || points.cols() != 3) throw Error("domain_from_points: need N x 3 points");
  if (resolution < 2) throw Error("domain_from_points: resolution must be >= 2");
  GridDomain g;
  g.x0 = points.col(0).minCoeff();
  g.x1 = points.col(0).maxCoeff();
  g.y0 = points.col(1).minCoeff();
  g.y1 = points.col(1).maxCoeff();
  const double span = std::max(g.x1 - g.x0, g.y1 - g.y0);
  if (!(span > 0.0)) throw Error("domain_from_points: degenerate footprint");
  g.nx = std::max(2, static_cast<int>(std::lround(resolution * (g.x1 - g.x0) / span)));
  g.ny = std::max(2, static_cast<int>(std::lround(resolution * (g.y1 - g.y0) / span)));
  Matrix flat = points;
  flat.col(2).setZero();
  const KdTree tree(flat);
  g.mask = Matrix::Zero(g.ny, g.nx);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double x = g.x0 + (g.x1 - g.x0) * i / (g.nx - 1);
      const double y = g.y0 + (g.y1 - g.y0) * j / (g.ny - 1);
      g.mask(j, i) = tree.nearest(Vec3(x, y, 0.0)).distance <= radius ? 1.0 : 0.0;
    }
  return g;
}

TriangleMesh export_mesh(const HeightField& field, const GridDomain& g) {
  if (g.nx < 2 || g.ny < 2) throw Error("export_mesh: grid needs at least 2 x 2 vertices");
  if (g.mask.size() != 0 && (g.mask.rows() != g.ny || g.mask.cols() != g.nx)) throw Error("export_mesh: mask must be ny x nx");
  auto inside = [&](int i, int j) { return g.mask.size() == 0 || g.mask(j, i) > 0.5; };
  std::vector<int> id(static_cast<std::size_t>(g.nx) * g.ny, -1);
  std::vector<Vec2> xy;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (inside(i, j)) {
        id[static_cast<std::size_t>(j) * g.nx + i] = static_cast<int>(xy.size());
        xy.emplace_back(g.x0 + (g.x1 - g.x0) * i / (g.nx - 1), g.y0 + (g.y1 - g.y0) * j / (g.ny - 1));
      }
  TriangleMesh mesh;
  Matrix q(static_cast<Eigen::Index>(xy.size()), 2);
  for (std::size_t k = 0; k < xy.size(); ++k) q.row(static_cast<Eigen::Index>(k)) = xy[k].transpose();
  const Matrix z = xy.empty() ? Matrix(0, 1) : field.heights(q);
  mesh.vertices.resize(q.rows(), 3);
  for (Eigen::Index k = 0; k < q.rows(); ++k) mesh.vertices.row(k) << q(k, 0), q(k, 1), z(k, 0);
  for (int j = 0; j + 1 < g.ny; ++j)
    for (int i = 0; i + 1 < g.nx; ++i) {
      const int a = id[static_cast<std::size_t>(j) * g.nx + i], b = id[static_cast<std::size_t>(j) * g.nx + i + 1];
      const int c = id[static_cast<std::size_t>(j + 1) * g.nx + i], d = id[static_cast<std::size_t>(j + 1) * g.nx + i + 1];
      if (a < 0 || b < 0 || c < 0 || d < 0) continue;
      mesh.faces.push_back({a, c, b});
      mesh.faces.push_back({b, c, d});
    }
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << std::setprecision(10);
  for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
    out << "v " << mesh.vertices(v, 0) << " " << mesh.vertices(v, 1) << " " << mesh.vertices(v, 2) << "\n";
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  if (!out) throw Error("failed writing '" + path + "'");
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<Vec3> verts;
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Vec3 p;
      is >> p.x() >> p.y() >> p.z();
      if (!is) throw Error("'" + path + "': malformed vertex line");
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (is >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  for (const auto& f : mesh.faces)
    for (int v : f)
      if (v < 0 || v >= static_cast<int>(verts.size())) throw Error("'" + path + "': face index out of range");
  return mesh;
}

Matrix march_heightfield(const HeightField& field, const Matrix& o, const Matrix& dir, const Matrix& t_lo,
                         const Matrix& t_hi, double step) {
  const Eigen::Index P = o.rows();
  if (o.cols() != 3 || dir.rows() != P || dir.cols() != 3 || t_lo.rows() != P || t_hi.rows() != P)
    throw Error("march_heightfield: inconsistent ray arrays");
  if (!(step > 0.0)) throw Error("march_heightfield: step must be positive");
  Matrix out = Matrix::Constant(P, 1, std::numeric_limits<double>::quiet_NaN());
  const double span = (t_hi - t_lo).maxCoeff();
  const int steps = static_cast<int>(std::ceil(span / step));
  auto eval = [&](const Matrix& t, Matrix& g) {
    Matrix xy(P, 2);
    Matrix pz(P, 1);
    for (Eigen::Index i = 0; i < P; ++i) {
      const double ti = std::min(t(i, 0), t_hi(i, 0));
      xy(i, 0) = o(i, 0) + ti * dir(i, 0);
      xy(i, 1) = o(i, 1) + ti * dir(i, 1);
      pz(i, 0) = o(i, 2) + ti * dir(i, 2);
    }
    g = pz - field.heights(xy);
  };
  Matrix t_prev = t_lo, g_prev;
  eval(t_prev, g_prev);
  Matrix lo = Matrix::Constant(P, 1, std::numeric_limits<double>::quiet_NaN()), hi = lo;
  for (int k = 1; k <= steps; ++k) {
    Matrix t = t_lo.array() + step * k;
    t = t.cwiseMin(t_hi);
    Matrix g;
    eval(t, g);
    for (Eigen::Index i = 0; i < P; ++i)
      if (std::isnan(lo(i, 0)) && g_prev(i, 0) < 0.0 && g(i, 0) >= 0.0) {
        lo(i, 0) = t_prev(i, 0);
        hi(i, 0) = t(i, 0);
      }
    t_prev = t;
    g_prev = g;
  }
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < P; ++i)
    if (!std::isnan(lo(i, 0))) idx.push_back(i);
  if (idx.empty()) return out;
  const auto H = static_cast<Eigen::Index>(idx.size());
  Matrix a(H, 1), b(H, 1), ho(H, 3), hd(H, 3);
  for (Eigen::Index k = 0; k < H; ++k) {
    a(k, 0) = lo(idx[static_cast<std::size_t>(k)], 0);
    b(k, 0) = hi(idx[static_cast<std::size_t>(k)], 0);
    ho.row(k) = o.row(idx[static_cast<std::size_t>(k)]);
    hd.row(k) = dir.row(idx[static_cast<std::size_t>(k)]);
  }
  for (int it = 0; it < 40; ++it) {
    Matrix mid = 0.5 * (a + b), xy(H, 2), pz(H, 1);
    for (Eigen::Index k = 0; k < H; ++k) {
      xy(k, 0) = ho(k, 0) + mid(k, 0) * hd(k, 0);
      xy(k, 1) = ho(k, 1) + mid(k, 0) * hd(k, 1);
      pz(k, 0) = ho(k, 2) + mid(k, 0) * hd(k, 2);
    }
    const Matrix g = pz - field.heights(xy);
    for (Eigen::Index k = 0; k < H; ++k) (g(k, 0) < 0.0 ? a(k, 0) : b(k, 0)) = mid(k, 0);
  }
  for (Eigen::Index k = 0; k < H; ++k) out(idx[static_cast<std::size_t>(k)], 0) = 0.5 * (a(k, 0) + b(k, 0));
  return out;
}

BrdfSphere render_brdf_sphere(BrdfNet& brdf, int size) {
  if (size < 2) throw Error("render_brdf_sphere: size must be >= 2");
  const Vec3 v(0.0, 0.0, 1.0);
  const Vec3 l(0.0, std::sqrt(0.5), std::sqrt(0.5));
  BrdfSphere s;
  s.value = Matrix::Constant(size, size, std::numeric_limits<double>::quiet_NaN());
  s.image = Image(size, size, 4);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = (2.0 * x + 1.0) / size - 1.0;
      const double py = 1.0 - (2.0 * y + 1.0) / size;  // image rows grow downward
      const double r2 = px * px + py * py;
      if (r2 >= 1.0) continue;
      const Vec3 n(px, py, std::sqrt(1.0 - r2));
      const BrdfAnglesScalar a = rusinkiewicz_angles(n, l, v);
      Vec3 c(0.25, 0.25, 0.25);
      if (a.sign_mask) {
        const double value = brdf.lambertian() ? 1.0 : brdf.evaluate(a.theta_h, a.theta_d, a.phi_d);
        s.value(y, x) = value;
        c = jet(value / 2.0);
      }
      for (int k = 0; k < 3; ++k) s.image.at(x, y, k) = c(k);
      s.image.at(x, y, 3) = 1.0;
    }
  return s;
}

}  // namespace stereops
