// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "cofinet/error.hpp"
#include "cofinet/kernels.hpp"
#include "cofinet/losses.hpp"
#include "cofinet/pipeline.hpp"
#include "reference/metrics_ref.hpp"
#include "reference/naive.hpp"
#include "support.hpp"

using namespace cofi;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.ok) ++failures;
  std::printf("%s  %-22s %s [%.1fs]\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Overfit setup: published widths at 64×64, a fixed 500-step budget.
Config overfit_config(bool use_sbd) {
  Config cfg;
  cfg.input_size = 64;
  cfg.seed = 7;
  cfg.epochs = 500;
  cfg.early_stop_patience = 500;
  cfg.ablation.use_sbd = use_sbd;
  return cfg;
}

struct OverfitRun {
  double first_loss = 0;
  double last_loss = 0;
  double train_mae = 0;
  double seconds = 0;
  int steps = 0;
};

OverfitRun overfit(const Manifest& m, bool use_sbd) {
  const Config cfg = overfit_config(use_sbd);
  CofiNet<float> model(cfg);
  const auto data = load_samples(m, cfg.input_size);
  TrainOptions opt;
  opt.max_steps = 500;
  const auto t0 = Clock::now();
  const auto r = train_model(model, data, data, opt);
  OverfitRun o;
  o.seconds = seconds_since(t0);
  o.first_loss = r.step_losses.front();
  o.last_loss = r.step_losses.back();
  o.steps = r.steps;
  o.train_mae = dataset_mae(model, data, cfg.batch_size);
  return o;
}

void fill(TensorD& t, double v) {
  for (double& x : t.mutable_data()) x = v;
}

}  // namespace

int main() {
  std::printf("cofinet acceptance (%s kernels)\n", std::string(kernels::isa_name(kernels::active_isa())).c_str());

  report("gradient-integrity", [] {
    GradcheckOptions opt;  // 5 seeds, eps 1e-4, tolerance 1e-3
    const auto t0 = Clock::now();
    const auto r = gradcheck_cmd(Config{}, opt);
    const double secs = seconds_since(t0);
    double worst = 0;
    std::string where;
    for (const auto& m : r.modules) {
      if (m.worst >= worst) {
        worst = m.worst;
        where = m.module;
      }
    }
    const bool ok = r.passed() && worst < 1e-3 && secs < 300;
    return Outcome{ok, fmt("worst rel err %.2e", worst) + " (" + where + "), " +
                           std::to_string(r.modules.size()) + " modules, 5 seeds, " + fmt("%.0fs < 300s", secs)};
  });

  report("shape-contracts", [] {
    int mac_configs = 0;
    bool ok = true;
    for (int c : {4, 8, 12})
      for (int n : {1, 2, 4})
        for (int k : {1, 3, 7})
          for (int d : {1, 2}) {
            if (c % n != 0) continue;
            const auto all = default_mac_kinds();
            ParamStore<double> store(mac_configs);
            Mac<double> mac(store, "mac", c, {all.begin(), all.begin() + n}, k, d);
            const auto z = testing::random_tensor<double>({2, c, 9, 7}, mac_configs);
            ok &= mac(z).shape() == z.shape();
            ++mac_configs;
          }
    ok &= mac_configs >= 12;

    // Fusion strides from the published-width encoder at 384.
    const Config def;
    CofiNet<float> big(def);
    NoGradGuard ng;
    const auto x384 = testing::random_tensor<float>({1, 3, 384, 384}, 1, 0, 1);
    const auto out384 = big.forward(x384);
    ok &= out384.fused.f2pp.shape() == Shape{1, 64, 48, 48};
    ok &= out384.fused.f3pp.shape() == Shape{1, 128, 24, 24};
    ok &= out384.fused.f4pp.shape() == Shape{1, 256, 12, 12};
    ok &= out384.masks.final.shape() == Shape{1, 1, 384, 384};

    ParamStore<float> sbd_store(2);
    SpatialBroadcastDecoder<float> sbd(sbd_store, "sbd", 16, 8);
    for (auto [h, w] : {std::pair{17, 23}, {64, 64}, {1, 5}}) {
      ok &= sbd(TensorF({2, 16, 1, 1}), h, w).shape() == Shape{2, 1, h, w};
    }
    std::string sizes = "384";
    for (int size : {64, 96}) {
      Config cfg;
      cfg.input_size = size;
      CofiNet<float> model(cfg);
      const auto out = model.forward(testing::random_tensor<float>({1, 3, size, size}, size, 0, 1));
      ok &= out.masks.final.shape() == Shape{1, 1, size, size};
      ok &= out.masks.coarse.shape() == Shape{1, 1, size, size};
      ok &= out.masks.fine.shape() == Shape{1, 1, size, size};
      sizes += "/" + std::to_string(size);
    }
    return Outcome{ok, std::to_string(mac_configs) + " MAC configs; fusion strides 8/16/32; SBD (h,w); final mask " +
                           sizes};
  });

  report("composition-oracles", [] {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ParamStore<double> store(seed);
      Msfi<double> m(store, "msfi", {4, 6, 8});
      const auto f2 = testing::random_tensor<double>({2, 4, 8, 8}, seed + 1);
      const auto f3 = testing::random_tensor<double>({2, 6, 4, 4}, seed + 2);
      const auto f4 = testing::random_tensor<double>({2, 8, 2, 2}, seed + 3);
      const auto o = m(f2, f3, f4);
      const auto r = ref::msfi(m, ref::from(f2), ref::from(f3), ref::from(f4));
      for (auto d : {ref::max_abs_diff(o.f2pp, r.f2pp), ref::max_abs_diff(o.f3pp, r.f3pp),
                     ref::max_abs_diff(o.f4pp, r.f4pp)})
        worst = std::max(worst, d);

      Mac<double> mac(store, "mac", 8, default_mac_kinds(), 7, 1 + static_cast<int>(seed % 2));
      Rng rng(seed);
      for (double& a : mac.alphas.mutable_data()) a = rng.uniform(-2, 2);
      const auto z = testing::random_tensor<double>({2, 8, 9, 9}, seed + 50);
      worst = std::max(worst, ref::max_abs_diff(mac(z), ref::mac(mac, ref::from(z))));

      Mskm<double> k(store, "mskm", 8);
      const auto zk = testing::random_tensor<double>({1, 8, 8, 8}, seed + 60);
      worst = std::max(worst, ref::max_abs_diff(k(zk), ref::mskm(k, ref::from(zk)).out));
    }
    return Outcome{worst < 1e-5, fmt("msfi/mac/mskm max abs diff %.2e < 1e-5 over 10 seeds", worst)};
  });

  report("sbd-exactness", [] {
    const auto fx = testing::random_tensor<double>({2, 9, 1, 1}, 4);
    const int h = 13, w = 21;
    const auto z = sbd_broadcast(fx, h, w);
    double coord = 0;
    bool latent_exact = true;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          coord = std::max(coord, std::abs(z.at(n, 9, i, j) - (-1.0 + 2.0 * j / (w - 1))));
          coord = std::max(coord, std::abs(z.at(n, 10, i, j) - (-1.0 + 2.0 * i / (h - 1))));
          for (int c = 0; c < 9; ++c) latent_exact &= z.at(n, c, i, j) == fx.at(n, c, 0, 0);
        }
    return Outcome{coord < 1e-12 && latent_exact,
                   fmt("coord err %.1e < 1e-12; ", coord) + (latent_exact ? "latent exact" : "latent differs")};
  });

  report("receptive-field", [] {
    ParamStore<double> store(9);
    Mskm<double> m(store, "mskm", 4);
    for (Mac<double>* mac : {&m.dilated, &m.normal}) {
      fill(mac->conv.weight, 1.0);
      fill(mac->conv.bias, 0.0);
    }
    TensorD delta({1, 4, 31, 31});
    for (int c = 0; c < 4; ++c) delta.at(0, c, 15, 15) = 1.0;
    const auto hit = m.trace(delta);
    const auto base = m.trace(TensorD({1, 4, 31, 31}));
    auto width = [&](const TensorD& a, const TensorD& b) {
      int lo = 31, hi = -1;
      for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 31; ++i)
          for (int j = 0; j < 31; ++j)
            if (a.at(0, c, i, j) != b.at(0, c, i, j)) {
              lo = std::min(lo, j);
              hi = std::max(hi, j);
            }
      return hi - lo + 1;
    };
    const int w1 = width(hit.g1, base.g1);
    const int w3 = width(hit.g3, base.g3);
    return Outcome{w1 == 13 && w3 == 7,
                   "dilated branch " + std::to_string(w1) + " (13), normal branch " + std::to_string(w3) + " (7)"};
  });

  report("dual-mask", [] {
    const auto gt = testing::random_tensor<double>({1, 1, 16, 16}, 3, 0, 1);
    TensorD binary(gt.shape()), perfect(gt.shape());
    for (std::size_t i = 0; i < gt.numel(); ++i) {
      binary.mutable_data()[i] = gt.data()[i] > 0.5 ? 1.0 : 0.0;
      perfect.mutable_data()[i] = gt.data()[i] > 0.5 ? 40.0 : -40.0;
    }
    double residual = 0;
    for (double v : testing::values(residual_target(binary, perfect))) residual = std::max(residual, v);

    CofiNet<double> model(testing::small_config(5));
    const auto x = testing::random_tensor<double>({2, 3, 64, 64}, 6, 0, 1);
    TensorD masks({2, 1, 64, 64});
    const auto mg = testing::random_tensor<double>({2, 1, 64, 64}, 7, 0, 1);
    for (std::size_t i = 0; i < mg.numel(); ++i) masks.mutable_data()[i] = mg.data()[i] > 0.5;
    const auto out = model.forward(x);
    deep_supervision_loss(out.masks, out.aux, masks).fine.backward();
    std::size_t coarse_params = 0, nonzero = 0;
    bool sbd_reached = false;
    for (const auto& p : model.params()) {
      if (p.name.rfind("coarse.", 0) == 0) {
        ++coarse_params;
        if (p.tensor.has_grad())
          for (double g : p.tensor.grad()) nonzero += g != 0.0;
      }
      if (p.name.rfind("sbd.", 0) == 0 && p.tensor.has_grad())
        for (double g : p.tensor.grad()) sbd_reached |= g != 0.0;
    }
    const bool ok = residual < 1e-15 && nonzero == 0 && coarse_params > 0 && sbd_reached;
    return Outcome{ok, fmt("residual under perfect coarse %.1e; ", residual) + std::to_string(nonzero) +
                           " nonzero grads over " + std::to_string(coarse_params) + " coarse tensors from fine loss"};
  });

  // Both training runs feed two criteria.
  testing::TempDir corpus_dir("acceptance");
  Manifest corpus;
  OverfitRun full, no_sbd;
  bool trained = false;
  std::string train_error;
  try {
    corpus = gen_synthetic({7, 8, 64, SyntheticOptions{}.delta}, corpus_dir.str());
    full = overfit(corpus, true);
    no_sbd = overfit(corpus, false);
    trained = true;
  } catch (const std::exception& e) {
    train_error = e.what();
  }

  report("overfit", [&] {
    if (!trained) return Outcome{false, "training failed: " + train_error};
    const double drop = 1.0 - full.last_loss / full.first_loss;
    const bool ok = full.steps <= 500 && full.train_mae <= 0.08 && drop >= 0.8 && full.seconds < 600;
    return Outcome{ok, std::to_string(full.steps) + " steps; train MAE " + fmt("%.4f <= 0.08", full.train_mae) +
                           "; total loss " + fmt("%.4f", full.first_loss) + fmt(" -> %.4f", full.last_loss) +
                           fmt(" (drop %.1f%% >= 80%%)", 100 * drop) + fmt("; %.0fs < 600s", full.seconds)};
  });

  report("ablation", [&] {
    if (!trained) return Outcome{false, "training failed: " + train_error};
    return Outcome{full.train_mae <= no_sbd.train_mae + 0.02,
                   fmt("full MAE %.4f", full.train_mae) + fmt(" <= no-SBD MAE %.4f + 0.02", no_sbd.train_mae)};
  });

  report("metric-oracles", [] {
    Rng rng(2024);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
      Plane pred(8, 8), gt(8, 8);
      for (double& v : pred.v) v = rng.uniform();
      const double density = rng.uniform(0.1, 0.9);
      for (double& v : gt.v) v = rng.uniform() < density ? 1.0 : 0.0;
      ref::Grid p(8, std::vector<double>(8)), g = p;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          p[i][j] = pred(i, j);
          g[i][j] = gt(i, j);
        }
      worst = std::max({worst, std::abs(mae(pred, gt) - ref::mae(p, g)),
                        std::abs(adaptive_fbeta(pred, gt) - ref::fbeta(p, g, 0.3)),
                        std::abs(s_measure(pred, gt) - ref::s_measure(p, g, 0.5)),
                        std::abs(e_measure_adaptive(pred, gt) - ref::e_measure(p, g))});
    }
    Plane pred(8, 8);
    for (double& v : pred.v) v = rng.uniform();
    double m = 0, mb = 0;
    for (double v : pred.v) m += v;
    for (double v : binarize_adaptive(pred).v) mb += v;
    m /= 64;
    mb /= 64;
    const Plane zeros(8, 8, 0.0), ones(8, 8, 1.0);
    const bool degenerate = s_measure(pred, zeros) == 1.0 - m && s_measure(pred, ones) == m &&
                            e_measure_adaptive(pred, zeros) == 1.0 - mb && e_measure_adaptive(pred, ones) == mb &&
                            s_measure(zeros, zeros) == 1.0 && e_measure_adaptive(ones, ones) == 1.0;
    return Outcome{worst < 1e-6 && degenerate, fmt("100 pairs max diff %.1e < 1e-6; ", worst) +
                                                   (degenerate ? "degenerate conventions exact" : "degenerate mismatch")};
  });

  report("determinism", [] {
    testing::TempDir a("det_a"), b("det_b");
    const SyntheticOptions opt{7, 8, 64, SyntheticOptions{}.delta};
    const auto ma = gen_synthetic(opt, a.str());
    gen_synthetic(opt, b.str());
    bool data_same = true;
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.str())) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a.str()).string();
      data_same &= read_bytes(e.path().string()) == read_bytes(b / rel);
      ++files;
    }
    Config cfg = overfit_config(true);
    cfg.epochs = 1;
    TrainOptions oa, ob;
    oa.out_dir = a / "run";
    ob.out_dir = b / "run";
    const auto ra = train(cfg, ma, ma, oa);
    const auto rb = train(cfg, ma, ma, ob);
    const bool log_same = read_bytes(ra.log_path) == read_bytes(rb.log_path);
    return Outcome{data_same && log_same && files == 17,
                   std::to_string(files) + " generated files " + (data_same ? "identical" : "differ") +
                       "; first-epoch log " + (log_same ? "identical" : "differs")};
  });

  report("paper-defaults", [] {
    const auto j = nlohmann::json::parse(config_to_json(Config{}));
    const bool ok = j["input_size"] == 384 && j["lr"] == 0.001 && j["weight_decay"] == 0.0001 &&
                    j["batch_size"] == 8 && j["epochs"] == 100;
    return Outcome{ok, "input_size " + j["input_size"].dump() + ", lr " + j["lr"].dump() + ", weight_decay " +
                           j["weight_decay"].dump() + ", batch_size " + j["batch_size"].dump() + ", epochs " +
                           j["epochs"].dump()};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
