#include "stereops/dataio.hpp"

#include "stereops/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace stereops {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  const auto p = line.find('#');
  return p == std::string::npos ? line : line.substr(0, p);
}

using Section = std::map<std::string, std::string>;

std::map<std::string, Section> parse_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  std::map<std::string, Section> out;
  std::string section, line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw Error(path + ":" + std::to_string(lineno) + ": expected 'key = value' inside a section");
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("'" + path + "': expected 'key = value', got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<double> numbers(const std::string& text, std::size_t expected, const std::string& what) {
  std::istringstream is(text);
  std::vector<double> v;
  double x;
  while (is >> x) v.push_back(x);
  if (v.size() != expected || !is.eof())
    throw Error(what + ": expected " + std::to_string(expected) + " numbers, got '" + text + "'");
  return v;
}

const std::string& require(const Section& s, const std::string& key, const std::string& where) {
  auto it = s.find(key);
  if (it == s.end() || it->second.empty()) throw Error(where + ": missing key '" + key + "'");
  return it->second;
}

std::string optional_key(const Section& s, const std::string& key) {
  auto it = s.find(key);
  return it == s.end() ? std::string() : it->second;
}

std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

std::string DatasetManifest::resolve(const std::string& relative) const {
  if (relative.empty()) return relative;
  fs::path p(relative);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

void DatasetManifest::validate() const {
  auto must_exist = [&](const std::string& rel, const std::string& what) {
    if (rel.empty()) throw Error("manifest: " + what + " is not set");
    const std::string p = resolve(rel);
    if (!fs::exists(p)) throw Error("manifest: " + what + " '" + p + "' does not exist");
  };
  if (!(intensity_scale > 0.0)) throw Error("manifest: intensity_scale must be positive");
  std::size_t n_images = 0;
  for (int v = 0; v < 2; ++v) {
    const ViewFiles& f = views[static_cast<std::size_t>(v)];
    const std::string tag = "view" + std::to_string(v + 1);
    must_exist(f.camera, tag + " camera");
    must_exist(f.mask, tag + " mask");
    must_exist(f.normal_estimate, tag + " normal_estimate");
    must_exist(f.depth_estimate, tag + " depth_estimate");
    if (f.lights.empty() && lights.empty()) throw Error("manifest: " + tag + " has no light file");
    if (!f.lights.empty()) must_exist(f.lights, tag + " lights");
    if (!f.gt_depth.empty()) must_exist(f.gt_depth, tag + " gt_depth");
    if (!f.gt_normal.empty()) must_exist(f.gt_normal, tag + " gt_normal");
    for (std::size_t i = 0; i < f.images.size(); ++i) must_exist(f.images[i], tag + " image." + std::to_string(i));
    if (v == 0) n_images = f.images.size();
    else if (f.images.size() != n_images)
      throw Error("manifest: views list different numbers of light images (" + std::to_string(n_images) + " vs " +
                  std::to_string(f.images.size()) + ")");
  }
  if (!lights.empty()) must_exist(lights, "lights");
  if (n_images < 3) throw Error("manifest: at least 3 light images per view are required");
}

DatasetManifest load_manifest(const std::string& path) {
  auto sections = parse_sections(path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  auto ds = sections.find("dataset");
  if (ds == sections.end()) throw Error(path + ": missing [dataset] section");
  m.name = optional_key(ds->second, "name");
  m.lights = optional_key(ds->second, "lights");
  if (auto s = optional_key(ds->second, "intensity_scale"); !s.empty()) m.intensity_scale = numbers(s, 1, "intensity_scale")[0];
  if (auto s = optional_key(ds->second, "approximate_lighting"); !s.empty()) m.approximate_lighting = s == "true" || s == "1";

  for (int v = 0; v < 2; ++v) {
    const std::string tag = "view" + std::to_string(v + 1);
    auto it = sections.find(tag);
    if (it == sections.end()) throw Error(path + ": missing [" + tag + "] section");
    const Section& s = it->second;
    ViewFiles& f = m.views[static_cast<std::size_t>(v)];
    const std::string where = path + " [" + tag + "]";
    f.camera = require(s, "camera", where);
    f.mask = require(s, "mask", where);
    f.normal_estimate = require(s, "normal_estimate", where);
    f.depth_estimate = require(s, "depth_estimate", where);
    f.lights = optional_key(s, "lights");
    f.gt_depth = optional_key(s, "gt_depth");
    f.gt_normal = optional_key(s, "gt_normal");
    std::map<int, std::string> images;
    for (const auto& [key, value] : s) {
      if (key.rfind("image.", 0) != 0) continue;
      int idx;
      try {
        idx = std::stoi(key.substr(6));
      } catch (const std::exception&) {
        throw Error(where + ": bad image key '" + key + "'");
      }
      images[idx] = value;
    }
    int expect = 0;
    for (const auto& [idx, file] : images) {
      if (idx != expect) throw Error(where + ": missing image." + std::to_string(expect));
      f.images.push_back(file);
      ++expect;
    }
  }
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << "[dataset]\n";
  if (!m.name.empty()) out << "name = " << m.name << "\n";
  if (!m.lights.empty()) out << "lights = " << m.lights << "\n";
  out << "intensity_scale = " << fmt_double(m.intensity_scale) << "\n";
  if (m.approximate_lighting) out << "approximate_lighting = true\n";
  for (int v = 0; v < 2; ++v) {
    const ViewFiles& f = m.views[static_cast<std::size_t>(v)];
    out << "\n[view" << v + 1 << "]\n";
    out << "camera = " << f.camera << "\nmask = " << f.mask << "\n";
    if (!f.lights.empty()) out << "lights = " << f.lights << "\n";
    out << "normal_estimate = " << f.normal_estimate << "\ndepth_estimate = " << f.depth_estimate << "\n";
    if (!f.gt_depth.empty()) out << "gt_depth = " << f.gt_depth << "\n";
    if (!f.gt_normal.empty()) out << "gt_normal = " << f.gt_normal << "\n";
    for (std::size_t i = 0; i < f.images.size(); ++i) out << "image." << i << " = " << f.images[i] << "\n";
  }
  if (!out) throw Error("failed writing manifest '" + path + "'");
}

Camera read_camera(const std::string& path) {
  auto kv = parse_key_values(path);
  auto get = [&](const std::string& key, std::size_t n) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error("'" + path + "': missing key '" + key + "'");
    return numbers(it->second, n, path + " " + key);
  };
  Camera c;
  c.fx = get("fx", 1)[0];
  c.fy = get("fy", 1)[0];
  c.cx = get("cx", 1)[0];
  c.cy = get("cy", 1)[0];
  c.width = static_cast<int>(get("width", 1)[0]);
  c.height = static_cast<int>(get("height", 1)[0]);
  const auto R = get("R", 9);
  const auto t = get("t", 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c.camera_to_world.R(i, j) = R[static_cast<std::size_t>(3 * i + j)];
    c.camera_to_world.t(i) = t[static_cast<std::size_t>(i)];
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error("'" + path + "': " + e.what());
  }
  return c;
}

void write_camera(const Camera& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "fx = " << fmt_double(c.fx) << "\nfy = " << fmt_double(c.fy) << "\ncx = " << fmt_double(c.cx)
      << "\ncy = " << fmt_double(c.cy) << "\nwidth = " << c.width << "\nheight = " << c.height << "\nR =";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out << " " << fmt_double(c.camera_to_world.R(i, j));
  out << "\nt =";
  for (int i = 0; i < 3; ++i) out << " " << fmt_double(c.camera_to_world.t(i));
  out << "\n";
}

std::vector<LightSource> read_lights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open light file '" + path + "'");
  std::vector<LightSource> lights;
  std::string line;
  int lineno = 0, missing_mu = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    std::istringstream is(line);
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (!is.eof() || (v.size() != 8 && v.size() != 9))
      throw Error(path + ":" + std::to_string(lineno) + ": expected 'index px py pz brightness dx dy dz [mu]'");
    if (static_cast<std::size_t>(v[0]) != lights.size())
      throw Error(path + ":" + std::to_string(lineno) + ": light indices must be consecutive from 0");
    LightSource L;
    L.position = Vec3(v[1], v[2], v[3]);
    L.brightness = v[4];
    L.direction = Vec3(v[5], v[6], v[7]).normalized();
    L.mu = v.size() == 9 ? v[8] : 0.0;
    try {
      L.validate();
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    lights.push_back(L);
    if (v.size() == 8) ++missing_mu;
  }
  if (missing_mu > 0)
    std::clog << "warning: " << path << ": " << missing_mu << " light(s) without mu; using mu = 0\n";
  return lights;
}

void write_lights(const std::vector<LightSource>& lights, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "# index px py pz brightness dx dy dz mu\n";
  for (std::size_t i = 0; i < lights.size(); ++i) {
    const LightSource& L = lights[i];
    out << i;
    for (double x : {L.position.x(), L.position.y(), L.position.z(), L.brightness, L.direction.x(), L.direction.y(),
                     L.direction.z(), L.mu})
      out << " " << fmt_double(x);
    out << "\n";
  }
}

std::array<Matrix, 3> normals_to_world(const std::array<Matrix, 3>& n, const RigidTransform& T) {
  std::array<Matrix, 3> w;
  for (int k = 0; k < 3; ++k)
    w[static_cast<std::size_t>(k)] = T.R(k, 0) * n[0] + T.R(k, 1) * n[1] + T.R(k, 2) * n[2];
  return w;
}

Matrix depth_to_points(const Matrix& depth, const Matrix& mask, const Camera& cam) {
  std::vector<Vec3> pts;
  for (Eigen::Index v = 0; v < depth.rows(); ++v)
    for (Eigen::Index u = 0; u < depth.cols(); ++u)
      if (mask(v, u) > 0.5 && depth(v, u) > 0.0)
        pts.push_back(cam.camera_to_world.apply(
            cam.back_project(static_cast<double>(u), static_cast<double>(v), depth(v, u))));
  Matrix out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

namespace {

std::array<Matrix, 3> read_normal_map(const std::string& path, int w, int h) {
  const Image img = read_image(path);
  if (img.channels != 3) throw Error("'" + path + "': normal maps need 3 channels");
  if (img.width != w || img.height != h) throw Error("'" + path + "': size does not match the camera");
  return {img.channel(0), img.channel(1), img.channel(2)};
}

Matrix read_scalar_map(const std::string& path, int w, int h) {
  const Image img = read_image(path);
  if (img.width != w || img.height != h) throw Error("'" + path + "': size does not match the camera");
  return img.channel(0);
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  Dataset ds;
  ds.manifest = manifest;
  std::vector<LightSource> shared;
  if (!manifest.lights.empty()) shared = read_lights(manifest.resolve(manifest.lights));
  for (std::size_t v = 0; v < 2; ++v) {
    const ViewFiles& f = manifest.views[v];
    ViewData& out = ds.views[v];
    out.camera = read_camera(manifest.resolve(f.camera));
    const int w = out.camera.width, h = out.camera.height;
    out.lights = f.lights.empty() ? shared : read_lights(manifest.resolve(f.lights));
    if (out.lights.size() != f.images.size())
      throw Error("view" + std::to_string(v + 1) + ": " + std::to_string(f.images.size()) + " images but " +
                  std::to_string(out.lights.size()) + " lights");
    const Image mask_img = read_image(manifest.resolve(f.mask));
    if (mask_img.width != w || mask_img.height != h) throw Error("'" + manifest.resolve(f.mask) + "': size does not match the camera");
    out.mask = (to_grayscale(mask_img).array() > 0.5).cast<double>().matrix();
    if (out.mask.sum() < 1) throw Error("view" + std::to_string(v + 1) + ": mask is empty");
    for (const std::string& rel : f.images) {
      const std::string p = manifest.resolve(rel);
      const Image img = read_image(p);
      if (img.width != w || img.height != h) throw Error("'" + p + "': size does not match the camera");
      const Matrix g = to_grayscale(img);
      // Saturation is judged on the stored samples, before rescaling.
      out.valid.push_back(((g.array() < 1.0 - 1e-6).cast<double>() * out.mask.array()).matrix());
      out.images.push_back(g * manifest.intensity_scale);
    }
    out.normal_estimate = normals_to_world(read_normal_map(manifest.resolve(f.normal_estimate), w, h), out.camera.camera_to_world);
    out.depth_estimate = read_scalar_map(manifest.resolve(f.depth_estimate), w, h);
    if (!f.gt_depth.empty()) out.gt_depth = read_scalar_map(manifest.resolve(f.gt_depth), w, h);
    if (!f.gt_normal.empty())
      out.gt_normal = normals_to_world(read_normal_map(manifest.resolve(f.gt_normal), w, h), out.camera.camera_to_world);
  }
  if (ds.views[0].lights.size() != ds.views[1].lights.size())
    throw Error("views have inconsistent light counts");
  return ds;
}

namespace {

std::vector<std::vector<double>> read_table(const std::string& path, std::size_t cols) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    rows.push_back(numbers(line, cols, path));
  }
  return rows;
}

}  // namespace

DatasetManifest diligent_adapter(const std::string& root, const std::string& out_dir, double nominal_distance_mm) {
  fs::create_directories(out_dir);
  DatasetManifest m;
  m.root = fs::absolute(root).string();
  m.name = fs::path(m.root).filename().string();
  m.approximate_lighting = true;
  for (int v = 0; v < 2; ++v) {
    std::ostringstream vn;
    vn << "view_" << std::setw(2) << std::setfill('0') << v + 1;
    const fs::path dir = fs::path(m.root) / vn.str();
    if (!fs::is_directory(dir)) throw Error("diligent_adapter: missing directory '" + dir.string() + "'");
    ViewFiles& f = m.views[static_cast<std::size_t>(v)];
    f.camera = (dir / "camera.txt").string();
    f.mask = (dir / "mask.png").string();
    f.normal_estimate = (dir / "normal_est.pfm").string();
    f.depth_estimate = (dir / "depth_est.pfm").string();
    if (fs::exists(dir / "gt_depth.pfm")) f.gt_depth = (dir / "gt_depth.pfm").string();

    const Camera cam = read_camera(f.camera);
    const auto dirs = read_table((dir / "light_directions.txt").string(), 3);
    const auto ints = read_table((dir / "light_intensities.txt").string(), 3);
    if (dirs.size() != ints.size()) throw Error("diligent_adapter: light direction/intensity counts differ in " + dir.string());
    std::vector<std::vector<double>> pos;
    const bool have_pos = fs::exists(dir / "light_positions.txt");
    if (have_pos) pos = read_table((dir / "light_positions.txt").string(), 3);

    // Mean object distance from the depth estimate.
    const Image depth = read_image(f.depth_estimate);
    const Image mask = read_image(f.mask);
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y < depth.height; ++y)
      for (int x = 0; x < depth.width; ++x)
        if (mask.at(x, y, 0) > 0.5 && depth.at(x, y, 0) > 0.0) {
          sum += depth.at(x, y, 0);
          ++count;
        }
    if (count == 0) throw Error("diligent_adapter: depth estimate is empty inside the mask of " + dir.string());
    const double object_z = sum / count;
    const Vec3 object_world = cam.camera_to_world.apply(Vec3(0.0, 0.0, object_z));

    std::vector<LightSource> lights;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      // DiLiGenT vectors use x right, y up, z toward the camera.
      const Vec3 d_cam = Vec3(dirs[i][0], -dirs[i][1], -dirs[i][2]).normalized();
      const Vec3 p_cam = have_pos ? Vec3(pos[i][0], -pos[i][1], -pos[i][2]) : d_cam * nominal_distance_mm;
      LightSource L;
      L.position = cam.camera_to_world.apply(p_cam);
      L.direction = (object_world - L.position).normalized();
      L.mu = 0.0;
      const double gray = 0.299 * ints[i][0] + 0.587 * ints[i][1] + 0.114 * ints[i][2];
      const double dist = (object_world - L.position).norm();
      L.brightness = gray * dist * dist;
      lights.push_back(L);
    }
    const std::string light_file = (fs::absolute(out_dir) / ("lights_view" + std::to_string(v + 1) + ".txt")).string();
    write_lights(lights, light_file);
    f.lights = light_file;
    for (std::size_t i = 0; i < lights.size(); ++i) {
      std::ostringstream name;
      name << std::setw(3) << std::setfill('0') << i + 1 << ".png";
      f.images.push_back((dir / name.str()).string());
    }
  }
  std::clog << "warning: DiLiGenT-MV lighting is far-field; near-field brightness was approximated with mu = 0 and "
               "inverse-square compensation at the mean object distance\n";
  write_manifest(m, (fs::path(out_dir) / "manifest.txt").string());
  m.validate();
  return m;
}

}  // namespace stereops
