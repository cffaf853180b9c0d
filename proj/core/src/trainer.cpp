#include "stereops/trainer.hpp"

#include "stereops/checkpoint.hpp"
#include "stereops/geometry.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace stereops {

using diff::Tape;
using diff::Value;
namespace d = diff;

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::NormalsOnly: return "normals_only";
    case LossMode::IntensitiesOnly: return "intensities_only";
    case LossMode::NormalsPlusIntensities: return "normals_plus_intensities";
  }
  return "unknown";
}

LossMode loss_mode_from_string(const std::string& name) {
  for (LossMode m : {LossMode::NormalsOnly, LossMode::IntensitiesOnly, LossMode::NormalsPlusIntensities})
    if (to_string(m) == name) return m;
  throw Error("unknown loss mode '" + name + "' (expected normals_only, intensities_only or normals_plus_intensities)");
}

void TrainConfig::validate() const {
  if (init_epochs < 0 || main_epochs < 0) throw Error("TrainConfig: epoch counts must be non-negative");
  if (init_batch < 1 || main_batch < 1 || chunk_rays < 1) throw Error("TrainConfig: batch sizes must be >= 1");
  if (depth_samples < 2) throw Error("TrainConfig: depth_samples must be >= 2");
  if (render_enable_epoch < 0 || render_enable_epoch > main_epochs)
    throw Error("TrainConfig: render_enable_epoch must lie in [0, main_epochs]");
  if (augment_mm < 0.0) throw Error("TrainConfig: augment_mm must be non-negative");
  if (!(sample_range_mm > 0.0) || !(opacity_scale > 0.0) || !(learning_rate > 0.0))
    throw Error("TrainConfig: sample range, opacity scale and learning rate must be positive");
  if (!(lr_decay_fraction >= 0.0 && lr_decay_fraction <= 1.0)) throw Error("TrainConfig: lr_decay_fraction must lie in [0, 1]");
  if (shadow.samples < 1) throw Error("TrainConfig: shadow samples must be >= 1");
  weights.validate();
  siren.validate();
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw Error("config: '" + key + "' expects a number, got '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  if (x != std::floor(x)) throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw Error("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"init_epochs", std::to_string(c.init_epochs)},
      {"main_epochs", std::to_string(c.main_epochs)},
      {"init_batch", std::to_string(c.init_batch)},
      {"main_batch", std::to_string(c.main_batch)},
      {"depth_samples", std::to_string(c.depth_samples)},
      {"render_enable_epoch", std::to_string(c.render_enable_epoch)},
      {"augment_mm", fmt(c.augment_mm)},
      {"sample_range_mm", fmt(c.sample_range_mm)},
      {"opacity_scale", fmt(c.opacity_scale)},
      {"learning_rate", fmt(c.learning_rate)},
      {"lr_decay_fraction", fmt(c.lr_decay_fraction)},
      {"chunk_rays", std::to_string(c.chunk_rays)},
      {"shadow_threshold", fmt(c.shadow_threshold)},
      {"shadows", b(c.shadows)},
      {"shadow_full_backprop", b(c.shadow_full_backprop)},
      {"lambertian_renderer", b(c.lambertian_renderer)},
      {"loss_mode", to_string(c.mode)},
      {"w_normal", fmt(c.weights.normal)},
      {"w_render", fmt(c.weights.render)},
      {"w_depth", fmt(c.weights.depth)},
      {"w_reg_normal", fmt(c.weights.reg_normal)},
      {"w_reg_depth", fmt(c.weights.reg_depth)},
      {"siren_layers", std::to_string(c.siren.hidden_layers)},
      {"siren_width", std::to_string(c.siren.hidden_width)},
      {"siren_first_omega", fmt(c.siren.first_omega)},
      {"siren_hidden_omega", fmt(c.siren.hidden_omega)},
      {"brdf_layers", std::to_string(c.brdf.hidden_layers)},
      {"brdf_width", std::to_string(c.brdf.hidden_width)},
      {"shadow_samples", std::to_string(c.shadow.samples)},
      {"shadow_start_mm", fmt(c.shadow.start_mm)},
      {"shadow_step_mm", fmt(c.shadow.step_mm)},
      {"shadow_sharpness", fmt(c.shadow.sharpness)},
      {"shadow_smooth_max", fmt(c.shadow.smooth_max)},
      {"seed", std::to_string(c.seed)},
  };
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "init_epochs") c.init_epochs = parse_int(key, v);
  else if (key == "main_epochs") c.main_epochs = parse_int(key, v);
  else if (key == "init_batch") c.init_batch = parse_int(key, v);
  else if (key == "main_batch") c.main_batch = parse_int(key, v);
  else if (key == "depth_samples") c.depth_samples = parse_int(key, v);
  else if (key == "render_enable_epoch") c.render_enable_epoch = parse_int(key, v);
  else if (key == "augment_mm") c.augment_mm = parse_double(key, v);
  else if (key == "sample_range_mm") c.sample_range_mm = parse_double(key, v);
  else if (key == "opacity_scale") c.opacity_scale = parse_double(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, v);
  else if (key == "lr_decay_fraction") c.lr_decay_fraction = parse_double(key, v);
  else if (key == "chunk_rays") c.chunk_rays = parse_int(key, v);
  else if (key == "shadow_threshold") c.shadow_threshold = parse_double(key, v);
  else if (key == "shadows") c.shadows = parse_bool(key, v);
  else if (key == "shadow_full_backprop") c.shadow_full_backprop = parse_bool(key, v);
  else if (key == "lambertian_renderer") c.lambertian_renderer = parse_bool(key, v);
  else if (key == "loss_mode") c.mode = loss_mode_from_string(v);
  else if (key == "w_normal") c.weights.normal = parse_double(key, v);
  else if (key == "w_render") c.weights.render = parse_double(key, v);
  else if (key == "w_depth") c.weights.depth = parse_double(key, v);
  else if (key == "w_reg_normal") c.weights.reg_normal = parse_double(key, v);
  else if (key == "w_reg_depth") c.weights.reg_depth = parse_double(key, v);
  else if (key == "siren_layers") c.siren.hidden_layers = parse_int(key, v);
  else if (key == "siren_width") c.siren.hidden_width = parse_int(key, v);
  else if (key == "siren_first_omega") c.siren.first_omega = parse_double(key, v);
  else if (key == "siren_hidden_omega") c.siren.hidden_omega = parse_double(key, v);
  else if (key == "brdf_layers") c.brdf.hidden_layers = parse_int(key, v);
  else if (key == "brdf_width") c.brdf.hidden_width = parse_int(key, v);
  else if (key == "shadow_samples") c.shadow.samples = parse_int(key, v);
  else if (key == "shadow_start_mm") c.shadow.start_mm = parse_double(key, v);
  else if (key == "shadow_step_mm") c.shadow.step_mm = parse_double(key, v);
  else if (key == "shadow_sharpness") c.shadow.sharpness = parse_double(key, v);
  else if (key == "shadow_smooth_max") c.shadow.smooth_max = parse_double(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(v));
  else throw Error("config: unknown key '" + key + "'");
}

TrainConfig read_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto i = s.find_first_not_of(" \t\r");
      const auto j = s.find_last_not_of(" \t\r");
      return i == std::string::npos ? std::string() : s.substr(i, j - i + 1);
    };
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

TrainConfig read_checkpoint_config(const std::string& path) {
  const Archive a = Archive::load(path);
  TrainConfig c;
  std::istringstream in(a.text("config"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    set_config_value(c, line.substr(0, eq), line.substr(eq + 3));
  }
  c.validate();
  return c;
}

LossMode loss_mode(const TrainConfig& config) { return config.mode; }

ActiveTerms active_terms(LossMode mode, bool init_stage, bool render_enabled) {
  ActiveTerms t;
  if (init_stage) {
    t.normal = true;
    t.depth = true;
    return t;
  }
  t.normal = mode != LossMode::IntensitiesOnly;
  t.render = mode != LossMode::NormalsOnly && render_enabled;
  return t;
}

std::string LossHistory::tsv_header() {
  return "stage\tepoch\ttotal\tnormal\trender\tdepth\tregularizer\tsamples\tseconds\tshape_mean\tshape_median";
}

std::string LossHistory::tsv_line(const EpochRecord& r) {
  std::ostringstream os;
  os << r.stage << '\t' << r.epoch << '\t' << fmt(r.total) << '\t' << fmt(r.normal) << '\t' << fmt(r.render) << '\t'
     << fmt(r.depth) << '\t' << fmt(r.regularizer) << '\t' << r.samples << '\t' << fmt(r.seconds) << '\t'
     << fmt(r.shape_mean) << '\t' << fmt(r.shape_median);
  return os.str();
}

std::string LossHistory::to_tsv() const {
  std::string s = tsv_header() + "\n";
  for (const auto& r : records) s += tsv_line(r) + "\n";
  return s;
}

LossHistory LossHistory::from_tsv(const std::string& text) {
  LossHistory h;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      if (line != tsv_header()) throw Error("loss history: unexpected header");
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, '\t')) f.push_back(tok);
    if (f.size() != 11) throw Error("loss history: expected 11 columns, got " + std::to_string(f.size()));
    EpochRecord r;
    r.stage = f[0];
    r.epoch = std::stoi(f[1]);
    r.total = std::strtod(f[2].c_str(), nullptr);
    r.normal = std::strtod(f[3].c_str(), nullptr);
    r.render = std::strtod(f[4].c_str(), nullptr);
    r.depth = std::strtod(f[5].c_str(), nullptr);
    r.regularizer = std::strtod(f[6].c_str(), nullptr);
    r.samples = std::stol(f[7]);
    r.seconds = std::strtod(f[8].c_str(), nullptr);
    r.shape_mean = std::strtod(f[9].c_str(), nullptr);
    r.shape_median = std::strtod(f[10].c_str(), nullptr);
    h.records.push_back(r);
  }
  return h;
}

bool LossHistory::same_losses(const LossHistory& o) const {
  if (records.size() != o.records.size()) return false;
  auto same = [](double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = o.records[i];
    if (a.stage != b.stage || a.epoch != b.epoch || a.samples != b.samples || !same(a.total, b.total) ||
        !same(a.normal, b.normal) || !same(a.render, b.render) || !same(a.depth, b.depth) ||
        !same(a.regularizer, b.regularizer) || !same(a.shape_mean, b.shape_mean) || !same(a.shape_median, b.shape_median))
      return false;
  }
  return true;
}

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int stage, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw, so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Shuffles each view's samples, then interleaves them in proportion so every
// batch carries the dataset's view mix. Opposed per-view depth targets then
// cancel within a batch instead of kicking the surface back and forth.
std::vector<std::size_t> view_stratified(const std::vector<TrainSample>& samples, std::mt19937_64& rng) {
  std::array<std::vector<std::size_t>, 2> per_view;
  for (std::size_t i = 0; i < samples.size(); ++i) per_view[samples[i].view == 0 ? 0 : 1].push_back(i);
  for (auto& idx : per_view) {
    const std::vector<std::size_t> perm = shuffled(idx.size(), rng);
    std::vector<std::size_t> tmp(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) tmp[k] = idx[perm[k]];
    idx = std::move(tmp);
  }
  const std::size_t n0 = per_view[0].size(), n = samples.size();
  std::vector<std::size_t> order;
  order.reserve(n);
  std::size_t taken0 = 0, taken1 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    // Take from view 0 while it is behind its share of the first k + 1 slots.
    if (taken0 < n0 && (taken0 * n < (k + 1) * n0 || taken1 == per_view[1].size()))
      order.push_back(per_view[0][taken0++]);
    else
      order.push_back(per_view[1][taken1++]);
  }
  return order;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Trainer::Trainer(const Dataset& data, TrainConfig config) : data_(&data), config_(std::move(config)) {
  config_.validate();
  build_samples();
  Vec3 mean = Vec3::Zero();
  for (const auto& s : samples_) mean += s.target_point;
  mean /= static_cast<double>(samples_.size());
  mean_depth_ = mean.z();
  CoordinateFrame frame;
  frame.origin = mean;
  net_ = HeightmapNetwork(config_.siren, config_.seed, frame);
  brdf_ = BrdfNet(config_.brdf, config_.seed + 1);
  brdf_.set_lambertian(config_.lambertian_renderer);
  net_opt_ = diff::Adam(net_.parameters(), {config_.learning_rate});
  brdf_opt_ = diff::Adam(brdf_.parameters(), {config_.learning_rate});
}

void Trainer::build_samples() {
  const auto M = static_cast<Eigen::Index>(data_->light_count());
  std::vector<std::vector<double>> obs, val;
  for (int view = 0; view < 2; ++view) {
    const ViewData& vd = data_->views[static_cast<std::size_t>(view)];
    const Camera& cam = vd.camera;
    for (int v = 0; v < cam.height; ++v)
      for (int u = 0; u < cam.width; ++u) {
        if (vd.mask(v, u) < 0.5) continue;
        const double depth = vd.depth_estimate(v, u);
        const Vec3 n(vd.normal_estimate[0](v, u), vd.normal_estimate[1](v, u), vd.normal_estimate[2](v, u));
        if (!(depth > 0.0) || !std::isfinite(depth) || !n.allFinite() || n.norm() < 1e-6) continue;
        TrainSample s;
        s.view = view;
        s.u = u;
        s.v = v;
        s.target_point = cam.camera_to_world.apply(cam.back_project(u, v, depth));
        s.target_normal = n.normalized();
        samples_.push_back(s);
        Ray r;
        r.origin = cam.center_world();
        r.direction = cam.camera_to_world.rotate(cam.pixel_ray(u, v));
        rays_.push_back(r);
        std::vector<double> o(static_cast<std::size_t>(M)), ok(static_cast<std::size_t>(M));
        for (Eigen::Index m = 0; m < M; ++m) {
          o[static_cast<std::size_t>(m)] = vd.images[static_cast<std::size_t>(m)](v, u);
          ok[static_cast<std::size_t>(m)] = vd.valid[static_cast<std::size_t>(m)](v, u);
        }
        obs.push_back(std::move(o));
        val.push_back(std::move(ok));
      }
  }
  if (samples_.empty()) throw Error("Trainer: no usable mask pixels (empty masks or missing estimates)");
  const auto P = static_cast<Eigen::Index>(samples_.size());
  observed_.resize(P, M);
  valid_.resize(P, M);
  for (Eigen::Index i = 0; i < P; ++i)
    for (Eigen::Index m = 0; m < M; ++m) {
      observed_(i, m) = obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
      valid_(i, m) = val[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
    }
}

double Trainer::current_lr() const {
  if (init_done_ < config_.init_epochs) return config_.learning_rate;
  const int decay_at = static_cast<int>(std::floor(config_.lr_decay_fraction * config_.main_epochs));
  return main_done_ >= decay_at && config_.main_epochs > 0 ? 0.5 * config_.learning_rate : config_.learning_rate;
}

void Trainer::check_finite(double loss, const std::vector<std::size_t>& batch, const char* stage) const {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << "non-finite " << stage << " loss (" << loss << ") in a batch of " << batch.size() << " samples";
  if (!dump_path.empty()) {
    std::ofstream out(dump_path);
    out << "# " << os.str() << "\n# sample view u v target_x target_y target_z normal_x normal_y normal_z\n";
    for (std::size_t i : batch) {
      const TrainSample& s = samples_[i];
      out << i << ' ' << s.view << ' ' << s.u << ' ' << s.v << ' ' << s.target_point.transpose() << ' '
          << s.target_normal.transpose() << '\n';
    }
    os << "; batch written to " << dump_path;
  }
  throw NonFiniteLossError(os.str());
}

Trainer::ChunkLoss Trainer::init_chunk_loss(Tape& tape, const std::vector<std::size_t>& rows, std::mt19937_64& rng) {
  const LossWeights& w = config_.weights;
  const ActiveTerms terms = active_terms(config_.mode, true, false);
  std::uniform_real_distribution<double> jitter(-config_.augment_mm, config_.augment_mm);
  const auto C = static_cast<Eigen::Index>(rows.size());
  Matrix xy(C, 2), z(C, 1), nt(C, 3), view(C, 3);
  for (Eigen::Index k = 0; k < C; ++k) {
    const std::size_t i = rows[static_cast<std::size_t>(k)];
    const TrainSample& s = samples_[i];
    Vec3 p = s.target_point;
    if (config_.augment_mm > 0.0) p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    xy.row(k) << p.x(), p.y();
    z(k, 0) = p.z();
    nt.row(k) = s.target_normal.transpose();
    view.row(k) = (rays_[i].origin - s.target_point).normalized().transpose();
  }
  auto surf = net_.surface(tape, tape.constant(xy), true);
  Value ld = depth_loss(surf.height, z);
  Value ln = angular_normal_loss(surf.normal, tape.constant(nt), tape.constant(view));
  Value reg = regularizers(surf.normal, surf.height, mean_depth_, w);
  Value per = reg;
  if (terms.depth) per = per + w.depth * ld;
  if (terms.normal) per = per + w.normal * ln;
  ChunkLoss out;
  out.objective = d::sum_all(per);
  out.normal = ln.data().sum();
  out.depth = ld.data().sum();
  out.regularizer = reg.data().sum();
  out.hits = C;
  return out;
}

EpochRecord Trainer::run_init_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng = epoch_rng(config_.seed, 0, init_done_);
  const std::vector<std::size_t> order = view_stratified(samples_, rng);
  const double lr = current_lr();

  double sum_total = 0.0, sum_normal = 0.0, sum_depth = 0.0, sum_reg = 0.0;
  const std::size_t B = static_cast<std::size_t>(config_.init_batch);
  for (std::size_t start = 0; start < order.size(); start += B) {
    const std::size_t end = std::min(order.size(), start + B);
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const std::size_t chunk = 4096;
    for (std::size_t c0 = 0; c0 < batch.size(); c0 += chunk) {
      const std::vector<std::size_t> rows(batch.begin() + static_cast<std::ptrdiff_t>(c0),
                                          batch.begin() + static_cast<std::ptrdiff_t>(std::min(batch.size(), c0 + chunk)));
      Tape tape;
      const ChunkLoss cl = init_chunk_loss(tape, rows, rng);
      Value loss = inv_b * cl.objective;
      check_finite(loss.item(), batch, "initialisation");
      tape.backward(loss);
      sum_total += cl.objective.item();
      sum_normal += cl.normal;
      sum_depth += cl.depth;
      sum_reg += cl.regularizer;
    }
    net_opt_.set_lr(lr);
    net_opt_.step();
  }
  ++init_done_;
  EpochRecord r;
  r.stage = "init";
  r.epoch = init_done_;
  const double n = static_cast<double>(samples_.size());
  r.total = sum_total / n;
  r.normal = sum_normal / n;
  r.depth = sum_depth / n;
  r.regularizer = sum_reg / n;
  r.samples = static_cast<long>(samples_.size());
  if (evaluator) std::tie(r.shape_mean, r.shape_median) = evaluator(net_);
  r.seconds = seconds_since(t0);
  history_.records.push_back(r);
  if (on_epoch) on_epoch(r);
  return r;
}

void Trainer::compute_ray_centers() {
  const auto P = static_cast<Eigen::Index>(samples_.size());
  ray_center_.resize(P, 1);
  surface_points_.resize(P, 3);
  const double reach = 2.0 * config_.sample_range_mm;
  const double step = 0.25;
  const int steps = static_cast<int>(std::ceil(2.0 * reach / step));
  Matrix t_est(P, 1);
  for (Eigen::Index i = 0; i < P; ++i)
    t_est(i, 0) = (samples_[static_cast<std::size_t>(i)].target_point - rays_[static_cast<std::size_t>(i)].origin).norm();
  Matrix prev_g(P, 1), prev_t(P, 1);
  std::vector<bool> found(static_cast<std::size_t>(P), false);
  ray_center_ = t_est;
  for (int k = 0; k <= steps; ++k) {
    Matrix xy(P, 2), pz(P, 1), tt(P, 1);
    for (Eigen::Index i = 0; i < P; ++i) {
      const Ray& r = rays_[static_cast<std::size_t>(i)];
      const double t = t_est(i, 0) - reach + step * k;
      const Vec3 p = r.origin + t * r.direction;
      xy.row(i) << p.x(), p.y();
      pz(i, 0) = p.z();
      tt(i, 0) = t;
    }
    const Matrix z = net_.heights(xy);
    for (Eigen::Index i = 0; i < P; ++i) {
      const double g = pz(i, 0) - z(i, 0);
      if (k > 0 && !found[static_cast<std::size_t>(i)] && prev_g(i, 0) < 0.0 && g >= 0.0) {
        const double a = prev_g(i, 0) / (prev_g(i, 0) - g);
        ray_center_(i, 0) = prev_t(i, 0) + a * (tt(i, 0) - prev_t(i, 0));
        found[static_cast<std::size_t>(i)] = true;
      }
      prev_g(i, 0) = g;
      prev_t(i, 0) = tt(i, 0);
    }
  }
  for (Eigen::Index i = 0; i < P; ++i) {
    const Ray& r = rays_[static_cast<std::size_t>(i)];
    surface_points_.row(i) = (r.origin + ray_center_(i, 0) * r.direction).transpose();
  }
}

Matrix Trainer::shadow_counts_for_epoch() const {
  const auto P = static_cast<Eigen::Index>(samples_.size());
  Matrix counts = Matrix::Zero(P, 1);
  const std::size_t M = static_cast<std::size_t>(data_->light_count());
  ShadowSource src;
  src.field = &net_;
  const Eigen::Index chunk = 512;
  for (Eigen::Index c0 = 0; c0 < P; c0 += chunk) {
    const Eigen::Index C = std::min(chunk, P - c0);
    Matrix pts(C * static_cast<Eigen::Index>(M), 3), dirs(C * static_cast<Eigen::Index>(M), 3);
    for (Eigen::Index k = 0; k < C; ++k) {
      const Vec3 p = surface_points_.row(c0 + k).transpose();
      const auto& lights = data_->views[static_cast<std::size_t>(samples_[static_cast<std::size_t>(c0 + k)].view)].lights;
      for (std::size_t m = 0; m < M; ++m) {
        const Eigen::Index row = k * static_cast<Eigen::Index>(M) + static_cast<Eigen::Index>(m);
        pts.row(row) = p.transpose();
        dirs.row(row) = (lights[m].position - p).normalized().transpose();
      }
    }
    Tape tape;
    const Matrix vis = soft_shadow(tape, tape.constant(pts), tape.constant(dirs), src, config_.shadow).data();
    for (Eigen::Index k = 0; k < C; ++k)
      for (std::size_t m = 0; m < M; ++m)
        if (vis(k * static_cast<Eigen::Index>(M) + static_cast<Eigen::Index>(m), 0) < config_.shadow_threshold)
          counts(c0 + k, 0) += 1.0;
  }
  return counts;
}

SampleWeight Trainer::main_sample_weights(bool render_on) {
  if (ray_center_.rows() != static_cast<Eigen::Index>(samples_.size())) compute_ray_centers();
  std::vector<int> counts(samples_.size(), 0);
  if (config_.shadows && render_on) {
    const Matrix c = shadow_counts_for_epoch();
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = static_cast<int>(c(static_cast<Eigen::Index>(i), 0));
  }
  return sample_weights(counts, data_->light_count());
}

Trainer::ChunkLoss Trainer::main_chunk_loss(Tape& tape, const std::vector<std::size_t>& rows, std::mt19937_64& rng,
                                            bool render_on, const SampleWeight& sw) {
  if (ray_center_.rows() != static_cast<Eigen::Index>(samples_.size())) compute_ray_centers();
  const ActiveTerms terms = active_terms(config_.mode, false, render_on);
  const LossWeights& w = config_.weights;
  const int M = data_->light_count();
  const int N = config_.depth_samples;

  ShadowSource src;
  src.field = &net_;
  src.network = &net_;
  src.full_backprop = config_.shadow_full_backprop;
  RenderOptions ropt;
  ropt.shadows = config_.shadows && render_on;
  ropt.shadow = config_.shadow;

  const auto C = static_cast<Eigen::Index>(rows.size());
  Matrix depths(C, N), ray_z(C, N), xy(C * N, 2);
  for (Eigen::Index k = 0; k < C; ++k) {
    const std::size_t i = rows[static_cast<std::size_t>(k)];
    const Ray& r = rays_[i];
    const double tc = ray_center_(static_cast<Eigen::Index>(i), 0);
    const auto ts = sample_depths(tc - config_.sample_range_mm, tc + config_.sample_range_mm, N, &rng);
    for (int j = 0; j < N; ++j) {
      const double t = ts[static_cast<std::size_t>(j)];
      const Vec3 p = r.origin + t * r.direction;
      depths(k, j) = t;
      ray_z(k, j) = p.z();
      xy.row(k * N + j) << p.x(), p.y();
    }
  }
  ChunkLoss out;
  auto surf = net_.surface(tape, tape.constant(xy), true);
  VolumetricResult vr = volumetric_reduce(depths, ray_z, d::reshape(surf.height, C, N), surf.normal,
                                          d::reshape(surf.albedo, C, N), config_.opacity_scale);
  std::vector<Eigen::Index> hit_rows;
  for (Eigen::Index k = 0; k < C; ++k)
    if (vr.hit[static_cast<std::size_t>(k)]) {
      hit_rows.push_back(k);
      out.hit_samples.push_back(rows[static_cast<std::size_t>(k)]);
    }
  if (hit_rows.empty()) return out;
  const auto H = static_cast<Eigen::Index>(hit_rows.size());

  Matrix origin(H, 3), dir(H, 3), inv_dz(H, 1), neg_oz(H, 1), nt(H, 3), wn(H, 1), wr(H, 1);
  for (Eigen::Index h = 0; h < H; ++h) {
    const std::size_t i = out.hit_samples[static_cast<std::size_t>(h)];
    const Ray& r = rays_[i];
    origin.row(h) = r.origin.transpose();
    dir.row(h) = r.direction.transpose();
    inv_dz(h, 0) = 1.0 / r.direction.z();
    neg_oz(h, 0) = -r.origin.z();
    nt.row(h) = samples_[i].target_normal.transpose();
    wn(h, 0) = sw.normal(static_cast<Eigen::Index>(i), 0);
    wr(h, 0) = sw.render(static_cast<Eigen::Index>(i), 0);
  }
  Value z_e = d::gather_rows(vr.height, hit_rows);
  Value n_e = d::gather_rows(vr.normal, hit_rows);
  Value rho = d::gather_rows(vr.albedo, hit_rows);
  Value dist = (z_e + tape.constant(neg_oz)) * tape.constant(inv_dz);
  Value p = tape.constant(origin) + tape.constant(dir) * dist;
  Value view = tape.constant(-dir);

  Value reg = regularizers(n_e, z_e, mean_depth_, w);
  Value objective = d::sum_all(reg);
  out.regularizer = reg.data().sum();
  Value ln = angular_normal_loss(n_e, tape.constant(nt), view) * tape.constant(wn);
  out.normal = ln.data().sum();
  if (terms.normal) objective = objective + w.normal * d::sum_all(ln);

  if (terms.render) {
    for (int view_id = 0; view_id < 2; ++view_id) {
      std::vector<Eigen::Index> sel;
      for (Eigen::Index h = 0; h < H; ++h)
        if (samples_[out.hit_samples[static_cast<std::size_t>(h)]].view == view_id) sel.push_back(h);
      if (sel.empty()) continue;
      const auto R = static_cast<Eigen::Index>(sel.size());
      Matrix obs(R, M), ok(R, M), wrv(R, 1);
      for (Eigen::Index k = 0; k < R; ++k) {
        const auto h = sel[static_cast<std::size_t>(k)];
        const auto i = static_cast<Eigen::Index>(out.hit_samples[static_cast<std::size_t>(h)]);
        obs.row(k) = observed_.row(i);
        ok.row(k) = valid_.row(i);
        wrv(k, 0) = wr(h, 0);
      }
      RenderResult rr = render_intensity(tape, d::gather_rows(rho, sel), d::gather_rows(n_e, sel),
                                         d::gather_rows(p, sel), d::gather_rows(view, sel),
                                         data_->views[static_cast<std::size_t>(view_id)].lights, brdf_, src, ropt);
      std::vector<bool> has;
      Value per = rendering_loss(rr.intensity, obs, ok, &has) * tape.constant(wrv);
      for (bool b : has) out.render_samples += b ? 1 : 0;
      out.render += per.data().sum();
      objective = objective + w.render * d::sum_all(per);
    }
  }
  out.objective = objective;
  out.hits = H;
  out.hit_points = p.data();
  return out;
}

EpochRecord Trainer::run_main_epoch() {
  const auto t0 = std::chrono::steady_clock::now();
  if (ray_center_.rows() != static_cast<Eigen::Index>(samples_.size())) compute_ray_centers();
  std::mt19937_64 rng = epoch_rng(config_.seed, 1, main_done_);
  const std::vector<std::size_t> order = view_stratified(samples_, rng);
  const bool render_on = main_done_ >= config_.render_enable_epoch;
  const ActiveTerms terms = active_terms(config_.mode, false, render_on);
  const double lr = current_lr();
  const SampleWeight sw = main_sample_weights(render_on);

  double sum_total = 0.0, sum_normal = 0.0, sum_render = 0.0, sum_reg = 0.0;
  long hits_total = 0, render_total = 0;
  const std::size_t B = static_cast<std::size_t>(config_.main_batch);
  const std::size_t chunk = static_cast<std::size_t>(config_.chunk_rays);

  for (std::size_t start = 0; start < order.size(); start += B) {
    const std::size_t end = std::min(order.size(), start + B);
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t c0 = 0; c0 < batch.size(); c0 += chunk) {
      const std::vector<std::size_t> rows(batch.begin() + static_cast<std::ptrdiff_t>(c0),
                                          batch.begin() + static_cast<std::ptrdiff_t>(std::min(batch.size(), c0 + chunk)));
      Tape tape;
      const ChunkLoss cl = main_chunk_loss(tape, rows, rng, render_on, sw);
      if (cl.hits == 0) continue;
      Value loss = inv_b * cl.objective;
      check_finite(loss.item(), batch, "main-stage");
      tape.backward(loss);
      sum_total += cl.objective.item();
      sum_normal += cl.normal;
      sum_render += cl.render;
      sum_reg += cl.regularizer;
      hits_total += cl.hits;
      render_total += cl.render_samples;
      for (std::size_t h = 0; h < cl.hit_samples.size(); ++h)
        surface_points_.row(static_cast<Eigen::Index>(cl.hit_samples[h])) = cl.hit_points.row(static_cast<Eigen::Index>(h));
    }
    net_opt_.set_lr(lr);
    net_opt_.step();
    if (terms.render && !brdf_.lambertian()) {
      brdf_opt_.set_lr(lr);
      brdf_opt_.step();
    } else {
      brdf_opt_.zero_grad();
    }
  }
  ++main_done_;
  EpochRecord r;
  r.stage = "main";
  r.epoch = main_done_;
  const double n = std::max<double>(1.0, static_cast<double>(hits_total));
  r.total = sum_total / n;
  r.normal = sum_normal / n;
  r.render = render_total > 0 ? sum_render / static_cast<double>(render_total) : 0.0;
  r.regularizer = sum_reg / n;
  r.samples = hits_total;
  if (evaluator) std::tie(r.shape_mean, r.shape_median) = evaluator(net_);
  r.seconds = seconds_since(t0);
  history_.records.push_back(r);
  if (on_epoch) on_epoch(r);
  return r;
}

void Trainer::train() {
  while (init_done_ < config_.init_epochs) run_init_epoch();
  while (main_done_ < config_.main_epochs) run_main_epoch();
}

namespace {

void put_params(Archive& a, const std::string& prefix, const std::vector<const diff::Parameter*>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) a.put(prefix + std::to_string(i), params[i]->value);
}

void get_params(const Archive& a, const std::string& prefix, const std::vector<diff::Parameter*>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = a.matrix(prefix + std::to_string(i));
    if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols())
      throw Error("checkpoint: parameter '" + prefix + std::to_string(i) + "' has a different shape than the configured network");
    params[i]->value = m;
    params[i]->zero_grad();
  }
}

void put_adam(Archive& a, const std::string& prefix, const diff::Adam& opt) {
  a.put(prefix + "t", static_cast<double>(opt.step_count()));
  a.put(prefix + "count", static_cast<double>(opt.first_moments().size()));
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    a.put(prefix + "m" + std::to_string(i), opt.first_moments()[i]);
    a.put(prefix + "v" + std::to_string(i), opt.second_moments()[i]);
  }
}

void get_adam(const Archive& a, const std::string& prefix, diff::Adam& opt) {
  const auto n = static_cast<std::size_t>(a.scalar(prefix + "count"));
  if (n != opt.first_moments().size()) throw Error("checkpoint: optimizer state does not match the network");
  for (std::size_t i = 0; i < n; ++i) {
    opt.first_moments()[i] = a.matrix(prefix + "m" + std::to_string(i));
    opt.second_moments()[i] = a.matrix(prefix + "v" + std::to_string(i));
  }
  opt.set_step_count(static_cast<long>(a.scalar(prefix + "t")));
}

}  // namespace

void Trainer::save(const std::string& path) const {
  Archive a;
  std::string cfg;
  for (const auto& [k, v] : to_key_values(config_)) cfg += k + " = " + v + "\n";
  a.put_text("config", cfg);
  a.put_text("history", history_.to_tsv());
  const CoordinateFrame& f = net_.frame();
  Matrix frame(1, 4);
  frame << f.origin.x(), f.origin.y(), f.origin.z(), f.scale;
  a.put("frame", frame);
  a.put("mean_depth", mean_depth_);
  a.put("init_done", init_done_);
  a.put("main_done", main_done_);
  a.put("samples", static_cast<double>(samples_.size()));
  a.put("ray_center", ray_center_);
  a.put("surface_points", surface_points_);
  put_params(a, "net.param", net_.parameters());
  put_params(a, "brdf.param", brdf_.parameters());
  put_adam(a, "net.adam.", net_opt_);
  put_adam(a, "brdf.adam.", brdf_opt_);
  a.save(path);
}

void Trainer::load(const std::string& path) {
  const Archive a = Archive::load(path);
  if (static_cast<std::size_t>(a.scalar("samples")) != samples_.size())
    throw Error("checkpoint: sample count differs from the loaded dataset");
  const Matrix& frame = a.matrix("frame");
  CoordinateFrame f;
  f.origin = Vec3(frame(0, 0), frame(0, 1), frame(0, 2));
  f.scale = frame(0, 3);
  net_.set_frame(f);
  mean_depth_ = a.scalar("mean_depth");
  init_done_ = static_cast<int>(a.scalar("init_done"));
  main_done_ = static_cast<int>(a.scalar("main_done"));
  ray_center_ = a.matrix("ray_center");
  surface_points_ = a.matrix("surface_points");
  get_params(a, "net.param", net_.parameters());
  get_params(a, "brdf.param", brdf_.parameters());
  get_adam(a, "net.adam.", net_opt_);
  get_adam(a, "brdf.adam.", brdf_opt_);
  history_ = LossHistory::from_tsv(a.text("history"));
}

}  // namespace stereops
