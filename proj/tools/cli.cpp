#include "cli.hpp"

#include "stereops/dataio.hpp"
#include "stereops/evaluation.hpp"
#include "stereops/image_io.hpp"
#include "stereops/scenegen.hpp"
#include "stereops/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>

namespace stereops::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix gt_points(const Dataset& ds) {
  std::vector<Matrix> parts;
  Eigen::Index n = 0;
  for (const auto& v : ds.views) {
    parts.push_back(depth_to_points(*v.gt_depth, v.mask, v.camera));
    n += parts.back().rows();
  }
  Matrix all(n, 3);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    all.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return all;
}

GridDomain sample_domain(const Trainer& tr, int resolution) {
  Matrix pts(static_cast<Eigen::Index>(tr.samples().size()), 3);
  for (std::size_t i = 0; i < tr.samples().size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = tr.samples()[i].target_point.transpose();
  return domain_from_points(pts, resolution, 2.0);
}

struct Loaded {
  Dataset data;
  std::unique_ptr<Trainer> trainer;
};

Loaded load_model(const std::string& manifest, const std::string& checkpoint) {
  Loaded m;
  m.data = load_dataset(load_manifest(manifest));
  m.trainer = std::make_unique<Trainer>(m.data, read_checkpoint_config(checkpoint));
  m.trainer->load(checkpoint);
  return m;
}

/// Intersections of the mask pixel rays of one view with the trained surface.
struct ViewHits {
  std::vector<std::array<int, 2>> pixels;
  Matrix points;   // H x 3
  Matrix dirs;     // H x 3
};

ViewHits hit_view(const HeightmapNetwork& net, const ViewData& v, double window) {
  std::vector<std::array<int, 2>> px;
  std::vector<Vec3> dirs;
  std::vector<double> tc;
  const Camera& cam = v.camera;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (v.mask(y, x) < 0.5 || !(v.depth_estimate(y, x) > 0.0)) continue;
      const Vec3 d = cam.camera_to_world.rotate(cam.pixel_ray(x, y));
      px.push_back({x, y});
      dirs.push_back(d);
      tc.push_back(cam.back_project(x, y, v.depth_estimate(y, x)).norm());
    }
  const auto P = static_cast<Eigen::Index>(px.size());
  Matrix o(P, 3), dm(P, 3), lo(P, 1), hi(P, 1);
  for (Eigen::Index i = 0; i < P; ++i) {
    o.row(i) = cam.center_world().transpose();
    dm.row(i) = dirs[static_cast<std::size_t>(i)].transpose();
    lo(i, 0) = tc[static_cast<std::size_t>(i)] - window;
    hi(i, 0) = tc[static_cast<std::size_t>(i)] + window;
  }
  const Matrix t = march_heightfield(net, o, dm, lo, hi);
  ViewHits h;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < P; ++i)
    if (std::isfinite(t(i, 0))) keep.push_back(i);
  h.points.resize(static_cast<Eigen::Index>(keep.size()), 3);
  h.dirs.resize(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index i = keep[k];
    h.pixels.push_back(px[static_cast<std::size_t>(i)]);
    h.points.row(static_cast<Eigen::Index>(k)) = o.row(i) + t(i, 0) * dm.row(i);
    h.dirs.row(static_cast<Eigen::Index>(k)) = dm.row(i);
  }
  return h;
}

void write_tsv_metric(std::ostream& out, const std::string& name, double value) {
  out << name << '\t' << std::setprecision(10) << value << '\n';
}

int cmd_gen(const std::string& surface, const std::string& material, double specular, double shininess, double albedo,
            int resolution, double noise, double normal_noise, double depth_bias, const std::string& bias,
            bool opposed, std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  SceneConfig sc;
  sc.surface = AnalyticSurface::make(surface_kind_from_string(surface));
  if (material == "phong") sc.material.kind = MaterialKind::Phong;
  else if (material != "lambertian") throw Error("unknown material '" + material + "' (lambertian or phong)");
  sc.material.albedo = albedo;
  sc.material.specular = specular;
  sc.material.shininess = shininess;
  RigConfig rc;
  rc.resolution = resolution;
  sc.rig = make_default_rig(rc);
  sc.noise_sigma = noise;
  sc.seed = seed;
  const Scene scene = render_scene(sc);
  EstimateNoise en;
  en.angular_noise_deg = normal_noise;
  en.depth_bias_mm = depth_bias;
  if (bias == "constant") en.bias = BiasKind::Constant;
  else if (bias != "smooth") throw Error("unknown bias kind '" + bias + "' (smooth or constant)");
  std::mt19937_64 rng(seed + 1);
  std::array<ViewEstimate, 2> est;
  for (std::size_t v = 0; v < 2; ++v) {
    EstimateNoise e = en;
    if (opposed && v == 1) e.depth_bias_mm = -e.depth_bias_mm;
    est[v] = perturbed_estimates(scene.views[v].normal, scene.views[v].depth, scene.views[v].mask, e, rng);
  }
  write_dataset(scene, est, out_dir);
  out << "wrote " << (fs::path(out_dir) / "manifest.txt").string() << " (" << scene.views[0].points.rows() << " + "
      << scene.views[1].points.rows() << " surface pixels, " << sc.rig.lights.size() << " lights)\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out_dir, const std::string& config_path,
              const std::string& mode, int epochs, int init_epochs, long long seed, const std::vector<std::string>& sets,
              const std::string& resume, bool quiet, std::ostream& out) {
  const Dataset ds = load_dataset(load_manifest(data));
  TrainConfig cfg = !resume.empty()        ? read_checkpoint_config(resume)
                    : config_path.empty() ? TrainConfig{}
                                          : read_train_config(config_path);
  if (!resume.empty() && !config_path.empty()) throw Error("--config and --resume are mutually exclusive");
  if (!mode.empty()) cfg.mode = loss_mode_from_string(mode);
  if (epochs >= 0) cfg.main_epochs = epochs;
  if (init_epochs >= 0) cfg.init_epochs = init_epochs;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cfg.render_enable_epoch > cfg.main_epochs) cfg.render_enable_epoch = cfg.main_epochs;
  cfg.validate();
  fs::create_directories(out_dir);

  Trainer tr(ds, cfg);
  tr.dump_path = (fs::path(out_dir) / "nonfinite_batch.txt").string();
  if (!resume.empty()) tr.load(resume);
  if (ds.has_gt_depth()) {
    const Matrix gt = gt_points(ds);
    const GridDomain dom = sample_domain(tr, 2 * ds.views[0].camera.width);
    tr.evaluator = [gt, dom](const HeightmapNetwork& net) {
      const ShapeErrorReport r = shape_error(gt, export_mesh(net, dom));
      return std::make_pair(r.mean, r.median);
    };
  }
  if (!quiet) out << LossHistory::tsv_header() << '\n';
  tr.on_epoch = [&](const EpochRecord& r) {
    if (!quiet) out << LossHistory::tsv_line(r) << std::endl;
  };
  tr.train();
  tr.save((fs::path(out_dir) / "checkpoint.bin").string());
  std::ofstream hist(fs::path(out_dir) / "history.tsv");
  hist << tr.history().to_tsv();
  if (!hist) throw Error("failed writing history.tsv");
  return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt, const std::string& out_dir, std::ostream& out) {
  Loaded m = load_model(data, ckpt);
  if (!m.data.has_gt_depth())
    throw Error("eval needs ground truth, but the manifest lists no gt_depth maps for both views");
  const HeightmapNetwork& net = m.trainer->network();
  const Matrix gt = gt_points(m.data);
  const TriangleMesh mesh = export_mesh(net, sample_domain(*m.trainer, 2 * m.data.views[0].camera.width));
  const ShapeErrorReport se = shape_error(gt, mesh);
  write_tsv_metric(out, "shape_error_mean_mm", se.mean);
  write_tsv_metric(out, "shape_error_median_mm", se.median);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  Eigen::Index offset = 0;
  for (std::size_t v = 0; v < 2; ++v) {
    const ViewData& vd = m.data.views[v];
    // Per-pixel shape error map; GT points come in row-major mask order.
    Matrix err = Matrix::Zero(vd.mask.rows(), vd.mask.cols());
    Matrix emask = Matrix::Zero(vd.mask.rows(), vd.mask.cols());
    for (Eigen::Index y = 0; y < vd.mask.rows(); ++y)
      for (Eigen::Index x = 0; x < vd.mask.cols(); ++x)
        if (vd.mask(y, x) > 0.5 && (*vd.gt_depth)(y, x) > 0.0) {
          err(y, x) = se.distances[static_cast<std::size_t>(offset++)];
          emask(y, x) = 1.0;
        }
    if (!out_dir.empty())
      write_png((fs::path(out_dir) / ("shape_error_view" + std::to_string(v + 1) + ".png")).string(), error_map(err, emask), 8);
    if (!vd.gt_normal) continue;
    const ViewHits h = hit_view(net, vd, 2.0 * m.trainer->config().sample_range_mm);
    if (h.pixels.empty()) throw Error("eval: the reconstruction is not visible in view " + std::to_string(v + 1));
    const auto ev = net.evaluate(h.points.leftCols(2), true);
    std::array<Matrix, 3> pred;
    for (auto& p : pred) p = Matrix::Zero(vd.mask.rows(), vd.mask.cols());
    Matrix nmask = Matrix::Zero(vd.mask.rows(), vd.mask.cols());
    for (std::size_t k = 0; k < h.pixels.size(); ++k) {
      const auto [x, y] = h.pixels[k];
      for (int c = 0; c < 3; ++c) pred[static_cast<std::size_t>(c)](y, x) = ev.normal(static_cast<Eigen::Index>(k), c);
      nmask(y, x) = 1.0;
    }
    const NormalErrorReport ne = normal_error(pred, *vd.gt_normal, nmask);
    const std::string tag = "view" + std::to_string(v + 1);
    write_tsv_metric(out, tag + "_normal_error_mean_deg", ne.mean);
    write_tsv_metric(out, tag + "_normal_error_median_deg", ne.median);
  }
  return 0;
}

int cmd_render(const std::string& data, const std::string& ckpt, const std::string& out_dir, std::ostream& out) {
  Loaded m = load_model(data, ckpt);
  fs::create_directories(out_dir);
  HeightmapNetwork& net = m.trainer->network();
  const TrainConfig& cfg = m.trainer->config();
  double sum_err = 0.0;
  long count = 0;
  for (std::size_t v = 0; v < 2; ++v) {
    const ViewData& vd = m.data.views[v];
    const ViewHits h = hit_view(net, vd, 2.0 * cfg.sample_range_mm);
    const auto M = static_cast<Eigen::Index>(vd.lights.size());
    Matrix rendered = Matrix::Zero(static_cast<Eigen::Index>(h.pixels.size()), M);
    const Eigen::Index chunk = 256;
    for (Eigen::Index c0 = 0; c0 < rendered.rows(); c0 += chunk) {
      const Eigen::Index C = std::min(chunk, rendered.rows() - c0);
      const Matrix pts = h.points.middleRows(c0, C);
      const auto ev = net.evaluate(pts.leftCols(2), true);
      diff::Tape tape;
      ShadowSource src;
      src.field = &net;
      RenderOptions ro;
      ro.shadows = cfg.shadows;
      ro.shadow = cfg.shadow;
      const RenderResult rr = render_intensity(tape, tape.constant(ev.albedo), tape.constant(ev.normal), tape.constant(pts),
                                               tape.constant(-h.dirs.middleRows(c0, C)), vd.lights, m.trainer->brdf(), src, ro);
      rendered.middleRows(c0, C) = rr.intensity.data();
    }
    for (Eigen::Index l = 0; l < M; ++l) {
      Matrix img = Matrix::Zero(vd.mask.rows(), vd.mask.cols()), err = img, emask = img;
      for (std::size_t k = 0; k < h.pixels.size(); ++k) {
        const auto [x, y] = h.pixels[k];
        img(y, x) = rendered(static_cast<Eigen::Index>(k), l);
        if (vd.valid[static_cast<std::size_t>(l)](y, x) > 0.5) {
          err(y, x) = std::abs(img(y, x) - vd.images[static_cast<std::size_t>(l)](y, x));
          emask(y, x) = 1.0;
          sum_err += err(y, x);
          ++count;
        }
      }
      std::ostringstream name;
      name << "view" << v + 1 << "_light" << std::setw(2) << std::setfill('0') << l;
      write_png((fs::path(out_dir) / (name.str() + "_render.png")).string(), Image::from_planes({img}), 16);
      // Rendering errors are shown in jet saturating at 0.1 of the intensity range.
      write_png((fs::path(out_dir) / (name.str() + "_error.png")).string(), error_map(err, emask, 0.1), 8);
    }
  }
  write_tsv_metric(out, "render_error_mean", count > 0 ? sum_err / static_cast<double>(count) : 0.0);
  return 0;
}

int cmd_export(const std::string& data, const std::string& ckpt, const std::string& out_dir, int resolution,
               std::ostream& out) {
  Loaded m = load_model(data, ckpt);
  fs::create_directories(out_dir);
  const int res = resolution > 0 ? resolution : 2 * m.data.views[0].camera.width;
  const TriangleMesh mesh = export_mesh(m.trainer->network(), sample_domain(*m.trainer, res));
  const std::string obj = (fs::path(out_dir) / "surface.obj").string();
  write_obj(mesh, obj);
  const BrdfSphere sphere = render_brdf_sphere(m.trainer->brdf(), 128);
  write_png((fs::path(out_dir) / "brdf_sphere.png").string(), sphere.image, 8);
  out << "wrote " << obj << " (" << mesh.vertices.rows() << " vertices, " << mesh.faces.size() << " faces) and brdf_sphere.png\n";
  if (m.data.has_gt_depth()) {
    const ShapeErrorReport se = shape_error(gt_points(m.data), mesh);
    Eigen::Index offset = 0;
    for (std::size_t v = 0; v < 2; ++v) {
      const ViewData& vd = m.data.views[v];
      Matrix err = Matrix::Zero(vd.mask.rows(), vd.mask.cols()), emask = err;
      for (Eigen::Index y = 0; y < vd.mask.rows(); ++y)
        for (Eigen::Index x = 0; x < vd.mask.cols(); ++x)
          if (vd.mask(y, x) > 0.5 && (*vd.gt_depth)(y, x) > 0.0) {
            err(y, x) = se.distances[static_cast<std::size_t>(offset++)];
            emask(y, x) = 1.0;
          }
      write_png((fs::path(out_dir) / ("shape_error_view" + std::to_string(v + 1) + ".png")).string(), error_map(err, emask), 8);
    }
  }
  return 0;
}

}  // namespace

std::string curve_svg(const std::string& tsv) {
  const LossHistory h = LossHistory::from_tsv(tsv);
  if (h.records.empty()) throw Error("plot-curve: the history is empty");
  bool shape = false;
  for (const auto& r : h.records) shape = shape || std::isfinite(r.shape_mean);
  std::vector<std::vector<double>> series(shape ? 2 : 1);
  for (const auto& r : h.records) {
    if (shape) {
      series[0].push_back(r.shape_mean);
      series[1].push_back(r.shape_median);
    } else {
      series[0].push_back(r.total);
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) throw Error("plot-curve: no finite values to plot");
  if (hi - lo < 1e-12) hi = lo + 1.0;
  lo = std::min(lo, 0.0);
  const double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
  const std::size_t n = h.records.size();
  auto X = [&](std::size_t i) { return L + (W - L - R) * (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5); };
  auto Y = [&](double v) { return T + (H - T - B) * (1.0 - (v - lo) / (hi - lo)); };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  const char* names[] = {shape ? "mean shape error (mm)" : "total loss", "median shape error (mm)"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[s] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i)
      if (std::isfinite(series[s][i])) os << X(i) << ',' << Y(series[s][i]) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << L + 10 << "\" y=\"" << T + 15 * (s + 1) << "\" fill=\"" << colors[s] << "\" font-size=\"12\">"
       << names[s] << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n";
  os << "<text x=\"5\" y=\"" << Y(hi) + 4 << "\" font-size=\"10\">" << std::setprecision(3) << hi << "</text>\n";
  os << "<text x=\"5\" y=\"" << Y(lo) + 4 << "\" font-size=\"10\">" << lo << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binocular near-field photometric stereo with a neural heightmap", "stereops"};
  app.require_subcommand(1);

  std::string surface = "sphere_cap", material = "lambertian", bias = "smooth", out_dir, data, ckpt, config, mode, resume,
              history;
  double specular = 0.0, shininess = 20.0, albedo = 0.8, noise = 0.0, normal_noise = 0.0, depth_bias = 0.0;
  int resolution = 64, epochs = -1, init_epochs = -1, mesh_res = 0;
  long long seed = -1;
  bool opposed = false, quiet = false;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic two-view dataset");
  gen->add_option("--surface", surface, "plane, ramp, sphere_cap, gaussian_bumps or step_wall")->capture_default_str();
  gen->add_option("--material", material, "lambertian or phong")->capture_default_str();
  gen->add_option("--specular", specular, "Phong specular strength")->capture_default_str();
  gen->add_option("--shininess", shininess, "Phong exponent")->capture_default_str();
  gen->add_option("--albedo", albedo, "Diffuse albedo")->capture_default_str();
  gen->add_option("--resolution", resolution, "Image width and height in pixels")->capture_default_str();
  gen->add_option("--noise", noise, "Gaussian image noise sigma")->capture_default_str();
  gen->add_option("--normal-noise-deg", normal_noise, "Angular noise of the normal estimates")->capture_default_str();
  gen->add_option("--depth-bias-mm", depth_bias, "Depth estimate bias amplitude")->capture_default_str();
  gen->add_option("--bias", bias, "smooth or constant")->capture_default_str();
  gen->add_flag("--opposed-bias", opposed, "Negate the depth bias of the second view");
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Fit the heightmap and BRDF to a dataset");
  train->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory for checkpoint.bin and history.tsv")->required();
  train->add_option("--config", config, "Training config file (key = value)")->check(CLI::ExistingFile);
  train->add_option("--loss-mode", mode, "normals_only, intensities_only or normals_plus_intensities");
  train->add_option("--epochs", epochs, "Main-stage epochs");
  train->add_option("--init-epochs", init_epochs, "Initialisation epochs");
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--set", sets, "Override a config key (key=value), repeatable");
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_flag("--quiet", quiet, "Do not print per-epoch losses");

  auto* eval = app.add_subcommand("eval", "Shape and normal errors against ground truth");
  eval->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out_dir, "Directory for error maps");

  auto* render = app.add_subcommand("render", "Re-render every light from the trained model");
  render->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  render->add_option("--checkpoint", ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out_dir, "Output directory")->required();

  auto* exp = app.add_subcommand("export", "Write the mesh, BRDF sphere and error maps");
  exp->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  exp->add_option("--checkpoint", ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out_dir, "Output directory")->required();
  exp->add_option("--resolution", mesh_res, "Mesh grid resolution (default: twice the image width)");

  auto* plot = app.add_subcommand("plot-curve", "Plot shape error per epoch from a loss history");
  plot->add_option("--history", history, "history.tsv written by train")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out_dir, "Output SVG file")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*gen)
      return cmd_gen(surface, material, specular, shininess, albedo, resolution, noise, normal_noise, depth_bias, bias,
                     opposed, seed < 0 ? 0 : static_cast<std::uint64_t>(seed), out_dir, out);
    if (*train) return cmd_train(data, out_dir, config, mode, epochs, init_epochs, seed, sets, resume, quiet, out);
    if (*eval) return cmd_eval(data, ckpt, out_dir, out);
    if (*render) return cmd_render(data, ckpt, out_dir, out);
    if (*exp) return cmd_export(data, ckpt, out_dir, mesh_res, out);
    if (*plot) {
      const std::string svg = curve_svg(read_file(history));
      std::ofstream f(out_dir);
      f << svg;
      if (!f) throw Error("failed writing '" + out_dir + "'");
      out << "wrote " << out_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace stereops::cli
