#include "cofinet/pipeline.hpp"

#include "cofinet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <thread>

#include "cofinet/checkpoint.hpp"
#include "cofinet/error.hpp"
#include "cofinet/losses.hpp"
#include "cofinet/ops.hpp"

namespace cofi {
namespace fs = std::filesystem;

namespace {

Plane to_plane(const TensorF& t, int index = 0) {
  const Shape& s = t.shape();
  Plane p(s.h, s.w);
  const auto d = t.data();
  const std::size_t off = static_cast<std::size_t>(index) * s.c * s.plane();
  for (std::size_t i = 0; i < p.size(); ++i) p.v[i] = d[off + i];
  return p;
}

void append_text(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (f == nullptr) throw IoError("cannot append to " + path);
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok) throw IoError("write failed: " + path);
}

std::string stem_path(const std::string& out_path, const char* suffix) {
  fs::path p(out_path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

std::vector<Sample<float>> load_samples(const Manifest& m, int size) {
  std::vector<Sample<float>> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(load_sample<float>(e.image, e.mask, size, e.id));
  return out;
}

double dataset_mae(const CofiNet<float>& model, const std::vector<Sample<float>>& samples, int batch_size) {
  NoGradGuard guard;
  double total = 0;
  std::size_t count = 0;
  const std::size_t b = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < samples.size(); start += b) {
    std::vector<TensorF> images;
    std::vector<TensorF> masks;
    for (std::size_t i = start; i < std::min(samples.size(), start + b); ++i) {
      images.push_back(samples[i].image);
      masks.push_back(samples[i].mask);
    }
    const auto out = model.forward(stack_batch(images));
    const auto prob = sigmoid(out.masks.final);
    const auto gt = stack_batch(masks);
    const auto p = prob.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(static_cast<double>(p[i]) - g[i]);
    count += p.size();
  }
  return count == 0 ? 0.0 : total / count;
}

std::string train_log_header() { return "epoch\ttotal\tcoarse\tfine\tfinal\taux\tval_mae\n"; }

std::string train_log_line(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", e.epoch, e.total, e.coarse, e.fine,
                e.final, e.aux, e.val_mae);
  return buf;
}

TrainResult train_model(CofiNet<float>& model, const std::vector<Sample<float>>& train_set,
                        const std::vector<Sample<float>>& val_set, const TrainOptions& opt) {
  const Config& cfg = model.config();
  if (train_set.empty()) throw ConfigError("train: training manifest is empty");
  if (val_set.empty()) throw ConfigError("train: validation manifest is empty");
  const kernels::ScopedFlushDenormals ftz;

  TrainResult result;
  TrainState& st = result.state;
  st.rng = Rng(cfg.seed ^ 0x5eedf00dULL);
  st.optimizer.lr = cfg.lr;
  st.optimizer.weight_decay = cfg.weight_decay;

  if (!opt.out_dir.empty()) {
    ensure_dir(opt.out_dir);
    result.checkpoint_path = (fs::path(opt.out_dir) / "best.ckpt").string();
    result.log_path = (fs::path(opt.out_dir) / "train_log.tsv").string();
    const std::string header = train_log_header();
    write_bytes(std::vector<std::uint8_t>(header.begin(), header.end()), result.log_path);
  }

  auto& params = model.params();
  std::vector<std::vector<float>> best_weights;
  std::vector<std::size_t> order(train_set.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  bool out_of_steps = false;

  for (st.epoch = 0; st.epoch < cfg.epochs && !out_of_steps; ++st.epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    st.rng.shuffle(order);
    EpochLog log;
    log.epoch = st.epoch;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<TensorF> images;
      std::vector<TensorF> masks;
      std::string ids;
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
        images.push_back(train_set[order[i]].image);
        masks.push_back(train_set[order[i]].mask);
        ids += (ids.empty() ? "" : ",") + train_set[order[i]].id;
      }
      const std::string where =
          "epoch " + std::to_string(st.epoch) + ", batch " + std::to_string(batches) + " [" + ids + "]";
      std::optional<LossReport<float>> report;
      try {
        const auto out = model.forward(stack_batch(images));
        report = deep_supervision_loss(out.masks, out.aux, stack_batch(masks));
      } catch (const NumericError& e) {
        throw NumericError(std::string("train: ") + e.what() + " at " + where);
      }
      const auto& loss = *report;
      if (!std::isfinite(loss.total_value)) throw NumericError("train: non-finite loss at " + where);
      model.store().zero_grad();
      loss.total.backward();
      adam_step(std::span<Parameter<float>>(params), st.optimizer);

      log.total += loss.total_value;
      log.coarse += loss.coarse_loss;
      log.fine += loss.fine_loss;
      log.final += loss.final_loss;
      log.aux += loss.aux_loss;
      ++batches;
      ++result.steps;
      result.step_losses.push_back(loss.total_value);
      if (opt.on_step) opt.on_step(result.steps, loss.total_value);
      if (opt.max_steps > 0 && result.steps >= opt.max_steps) {
        out_of_steps = true;
        break;
      }
    }
    model.store().zero_grad();
    log.total /= batches;
    log.coarse /= batches;
    log.fine /= batches;
    log.final /= batches;
    log.aux /= batches;
    log.steps = result.steps;

    log.val_mae = dataset_mae(model, val_set, cfg.batch_size);
    if (opt.val_metric_hook) log.val_mae = opt.val_metric_hook(st.epoch, log.val_mae);
    result.epochs.push_back(log);
    if (!result.log_path.empty()) append_text(result.log_path, train_log_line(log));
    if (opt.on_epoch) opt.on_epoch(log);

    if (log.val_mae < st.best_val_mae) {
      st.best_val_mae = log.val_mae;
      st.epochs_since_best = 0;
      result.best_epoch = st.epoch;
      best_weights.clear();
      for (const auto& p : params) best_weights.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      if (!result.checkpoint_path.empty()) save_checkpoint(result.checkpoint_path, params);
    } else {
      ++st.epochs_since_best;
    }
    if (st.epochs_since_best >= cfg.early_stop_patience) {
      ++st.epoch;
      break;
    }
    if (opt.stop_when && opt.stop_when(log)) {
      ++st.epoch;
      break;
    }
  }

  for (std::size_t i = 0; i < best_weights.size(); ++i) {
    auto d = params[i].tensor.mutable_data();
    std::copy(best_weights[i].begin(), best_weights[i].end(), d.begin());
  }
  result.best_val_mae = st.best_val_mae;
  return result;
}

TrainResult train(const Config& cfg, const Manifest& train_manifest, const Manifest& val_manifest,
                  const TrainOptions& opt) {
  if (train_manifest.entries.empty()) throw ConfigError("train: training manifest is empty");
  if (val_manifest.entries.empty()) throw ConfigError("train: validation manifest is empty");
  CofiNet<float> model(cfg);
  return train_model(model, load_samples(train_manifest, cfg.input_size),
                     load_samples(val_manifest, cfg.input_size), opt);
}

Prediction predict(const CofiNet<float>& model, const RgbImage& image) {
  NoGradGuard guard;
  const int size = model.config().input_size;
  auto x = rgb_to_tensor<float>(image);
  if (image.h != size || image.w != size) x = resize_bilinear(x, size, size);
  const auto out = model.forward(x);
  Prediction p;
  p.final = resize_plane_bilinear(to_plane(sigmoid(out.masks.final)), image.h, image.w);
  p.coarse = resize_plane_bilinear(to_plane(sigmoid(out.masks.coarse)), image.h, image.w);
  if (out.masks.fine.defined()) {
    p.fine = resize_plane_bilinear(to_plane(out.masks.fine), image.h, image.w);
    p.has_fine = true;
  }
  return p;
}

MetricsReport evaluate_model(const CofiNet<float>& model, const Manifest& manifest, const std::string& out_dir,
                             const MetricsConfig& mcfg, int threads) {
  ensure_dir(out_dir);
  const auto& entries = manifest.entries;
  std::vector<ImageMetrics> results(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        const auto& e = entries[i];
        const RgbImage rgb = read_ppm(e.image);
        const Plane gt = gray_to_plane(read_pgm(e.mask));
        if (gt.h != rgb.h || gt.w != rgb.w) throw DimensionError("eval: image/mask size mismatch for " + e.id);
        const GrayImage stored = plane_to_gray(predict(model, rgb).final);
        if (!out_dir.empty()) write_pgm(stored, (fs::path(out_dir) / (e.id + ".pgm")).string());
        results[i] = evaluate_pair(e.id, gray_to_plane(stored), gt, mcfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = thread_budget(threads, entries.size());
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  MetricsReport report = aggregate(std::move(results));
  if (!out_dir.empty()) {
    const std::string json = report.to_json();
    write_bytes(std::vector<std::uint8_t>(json.begin(), json.end()), (fs::path(out_dir) / "report.json").string());
  }
  return report;
}

MetricsReport eval_cmd(const Config& cfg, const std::string& checkpoint, const Manifest& manifest,
                       const std::string& out_dir) {
  CofiNet<float> model(cfg);
  load_checkpoint(checkpoint, model.params());
  return evaluate_model(model, manifest, out_dir);
}

std::vector<std::string> infer(const Config& cfg, const std::string& checkpoint, const std::string& image_path,
                               const std::string& out_path, bool emit_intermediate) {
  CofiNet<float> model(cfg);
  load_checkpoint(checkpoint, model.params());
  const Prediction p = predict(model, read_ppm(image_path));
  const auto parent = fs::path(out_path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  std::vector<std::string> written{out_path};
  save_mask(p.final, out_path);
  if (emit_intermediate) {
    written.push_back(stem_path(out_path, ".coarse.pgm"));
    save_mask(p.coarse, written.back());
    if (p.has_fine) {
      written.push_back(stem_path(out_path, ".fine.pgm"));
      save_mask(p.fine, written.back());
    }
  }
  return written;
}

}  // namespace cofi
