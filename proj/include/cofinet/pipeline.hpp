#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cofinet/adam.hpp"
#include "cofinet/config.hpp"
#include "cofinet/image_io.hpp"
#include "cofinet/metrics.hpp"
#include "cofinet/model.hpp"
#include "cofinet/rng.hpp"

namespace cofi {

struct EpochLog {
  int epoch = 0;
  double total = 0;
  double coarse = 0;
  double fine = 0;
  double final = 0;
  double aux = 0;
  double val_mae = 0;
  int steps = 0;  // optimizer steps taken so far
};

struct TrainState {
  int epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  Rng rng;
  AdamState<float> optimizer;
};

struct TrainOptions {
  // Receives best.ckpt and train_log.tsv; empty keeps everything in memory.
  std::string out_dir;
  // Stop once this many optimizer steps have run (0: no limit).
  int max_steps = 0;
  // Replaces the measured validation MAE (tests of the stopping rule).
  std::function<double(int epoch, double measured)> val_metric_hook;
  // Checked after each epoch's log line; true ends training.
  std::function<bool(const EpochLog&)> stop_when;
  std::function<void(int step, double loss)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
  int steps = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::string checkpoint_path;
  std::string log_path;
  TrainState state;
};

std::vector<Sample<float>> load_samples(const Manifest& m, int size);

// Mean absolute error of sigmoid(final) against the masks, at input size.
double dataset_mae(const CofiNet<float>& model, const std::vector<Sample<float>>& samples,
                   int batch_size);

// Shuffled mini-batches, deep supervision, Adam, per-epoch validation MAE,
// early stopping. Leaves the best-validation weights in `model`.
TrainResult train_model(CofiNet<float>& model, const std::vector<Sample<float>>& train_set,
                        const std::vector<Sample<float>>& val_set, const TrainOptions& opt);

TrainResult train(const Config& cfg, const Manifest& train_manifest, const Manifest& val_manifest,
                  const TrainOptions& opt);

std::string train_log_header();
std::string train_log_line(const EpochLog& e);

// Probability maps resized back to the image's own resolution.
struct Prediction {
  Plane final;
  Plane coarse;
  Plane fine;
  bool has_fine = false;
};

Prediction predict(const CofiNet<float>& model, const RgbImage& image);

// Writes <out_dir>/<id>.pgm for every sample and <out_dir>/report.json.
// Metrics use the quantised masks as stored on disk.
MetricsReport evaluate_model(const CofiNet<float>& model, const Manifest& manifest,
                             const std::string& out_dir, const MetricsConfig& mcfg = {},
                             int threads = 0);

MetricsReport eval_cmd(const Config& cfg, const std::string& checkpoint, const Manifest& manifest,
                       const std::string& out_dir);

// Writes out_path; with emit_intermediate also <stem>.coarse.pgm and, when
// the model has a fine path, <stem>.fine.pgm next to it. Returns the paths.
std::vector<std::string> infer(const Config& cfg, const std::string& checkpoint,
                               const std::string& image_path, const std::string& out_path,
                               bool emit_intermediate);

struct ModuleCheck {
  std::string module;
  double worst = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst_at;
};

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int size = 64;
  int batch = 2;
  std::size_t samples_per_tensor = 3;
  double eps = 1e-4;
  double tolerance = 1e-3;
};

struct GradcheckReport {
  std::vector<ModuleCheck> modules;
  double tolerance = 1e-3;
  bool passed() const;
  std::string to_text() const;
};

// Finite differences against reverse mode for every module, in double
// precision, on random 64×64 batches.
GradcheckReport gradcheck_cmd(const Config& cfg, const GradcheckOptions& opt = {});

}  // namespace cofi
