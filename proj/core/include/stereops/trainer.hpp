#pragma once

#include "stereops/common.hpp"
#include "stereops/dataio.hpp"
#include "stereops/diffmath/optim.hpp"
#include "stereops/heightmap.hpp"
#include "stereops/losses.hpp"
#include "stereops/shading.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stereops {

enum class LossMode { NormalsOnly, IntensitiesOnly, NormalsPlusIntensities };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& name);

struct TrainConfig {
  int init_epochs = 30;
  int main_epochs = 50;
  int init_batch = 16384;
  int main_batch = 1024;
  int depth_samples = 128;     // per ray
  int render_enable_epoch = 2; // first main epoch with rendering and shadows
  double augment_mm = 1.0;
  double sample_range_mm = 15.0;  // half-width of the per-ray depth window
  double opacity_scale = 1.0;     // f, per mm^2
  double learning_rate = 1e-4;
  double lr_decay_fraction = 0.8; // halve the rate at this fraction of the main epochs
  int chunk_rays = 128;           // rays recorded per tape; bounds memory
  double shadow_threshold = 0.5;  // hard shadow when visibility < threshold
  bool shadows = true;
  bool shadow_full_backprop = false;
  bool lambertian_renderer = false;
  LossMode mode = LossMode::NormalsPlusIntensities;
  LossWeights weights;
  SirenConfig siren;
  BrdfConfig brdf;
  ShadowConfig shadow;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Flat key/value view of a config (also the config-file schema).
std::map<std::string, std::string> to_key_values(const TrainConfig& config);
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
/// Reads "key = value" lines ('#' comments) on top of `base`.
TrainConfig read_train_config(const std::string& path, TrainConfig base = {});

/// Config stored in a checkpoint written by Trainer::save.
TrainConfig read_checkpoint_config(const std::string& path);

/// Which loss terms contribute.
struct ActiveTerms {
  bool normal = false;
  bool render = false;
  bool depth = false;
  bool regularizer = true;

  bool operator==(const ActiveTerms&) const = default;
};

LossMode loss_mode(const TrainConfig& config);
/// Initialisation always uses normals and depth. In the main stage the mode
/// picks normals, intensities or both; intensities wait for render_enable_epoch.
ActiveTerms active_terms(LossMode mode, bool init_stage, bool render_enabled);

struct EpochRecord {
  std::string stage;  // "init" or "main"
  int epoch = 0;      // 1-based within the stage
  double total = 0.0;
  double normal = 0.0;   // degrees, visibility weighted
  double render = 0.0;
  double depth = 0.0;    // mm
  double regularizer = 0.0;
  double seconds = 0.0;
  long samples = 0;      // contributing samples (ray hits in the main stage)
  double shape_mean = std::numeric_limits<double>::quiet_NaN();
  double shape_median = std::numeric_limits<double>::quiet_NaN();
};

struct LossHistory {
  std::vector<EpochRecord> records;

  static std::string tsv_header();
  static std::string tsv_line(const EpochRecord& r);
  std::string to_tsv() const;
  static LossHistory from_tsv(const std::string& text);
  /// Equality of every field except wall time, compared bit for bit.
  bool same_losses(const LossHistory& other) const;
};

/// One optimisation target: a mask pixel of one view.
struct TrainSample {
  int view = 0;
  int u = 0;
  int v = 0;
  Vec3 target_point;   // back-projected per-view depth estimate, world
  Vec3 target_normal;  // world
};

class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

/// Holds a reference to `data`, which must outlive the trainer.
class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig config);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Runs whatever init and main epochs remain.
  void train();
  EpochRecord run_init_epoch();
  EpochRecord run_main_epoch();

  int init_epochs_done() const { return init_done_; }
  int main_epochs_done() const { return main_done_; }

  HeightmapNetwork& network() { return net_; }
  const HeightmapNetwork& network() const { return net_; }
  BrdfNet& brdf() { return brdf_; }
  const LossHistory& history() const { return history_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<TrainSample>& samples() const { return samples_; }
  double mean_initial_depth() const { return mean_depth_; }

  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
  /// Optional shape error (mean, median) recorded in the history.
  std::function<std::pair<double, double>(const HeightmapNetwork&)> evaluator;
  /// When set, a non-finite loss writes the offending batch here before throwing.
  std::string dump_path;

  /// Loss of a subset of samples recorded on `tape` (summed, not divided by
  /// the batch size), as used by one optimisation chunk.
  struct ChunkLoss {
    diff::Value objective;  // empty when no ray hit the surface
    double normal = 0.0;
    double render = 0.0;
    double depth = 0.0;
    double regularizer = 0.0;
    long hits = 0;
    long render_samples = 0;
    std::vector<std::size_t> hit_samples;  // main stage only
    Matrix hit_points;                     // composited points of hit_samples
  };
  ChunkLoss init_chunk_loss(diff::Tape& tape, const std::vector<std::size_t>& rows, std::mt19937_64& rng);
  ChunkLoss main_chunk_loss(diff::Tape& tape, const std::vector<std::size_t>& rows, std::mt19937_64& rng,
                            bool render_on, const SampleWeight& weights);
  /// Visibility weights for a main epoch, from the current surface points.
  SampleWeight main_sample_weights(bool render_on);

  void save(const std::string& path) const;
  /// Restores a checkpoint written by save() for the same dataset.
  void load(const std::string& path);

 private:
  struct Ray {
    Vec3 origin;
    Vec3 direction;  // world, unit
  };

  void build_samples();
  void compute_ray_centers();
  Matrix shadow_counts_for_epoch() const;
  double current_lr() const;
  void check_finite(double loss, const std::vector<std::size_t>& batch, const char* stage) const;

  const Dataset* data_;
  TrainConfig config_;
  HeightmapNetwork net_;
  BrdfNet brdf_;
  diff::Adam net_opt_;
  diff::Adam brdf_opt_;
  std::vector<TrainSample> samples_;
  std::vector<Ray> rays_;
  Matrix observed_;  // P x M
  Matrix valid_;     // P x M
  Matrix ray_center_;      // P x 1 distance along each ray
  Matrix surface_points_;  // P x 3, latest composited points
  double mean_depth_ = 0.0;
  int init_done_ = 0;
  int main_done_ = 0;
  LossHistory history_;
};

}  // namespace stereops
