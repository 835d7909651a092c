#include <algorithm>
#include <cstdio>
#include <map>

#include "cofinet/gradcheck.hpp"
#include "cofinet/ops.hpp"
#include "cofinet/pipeline.hpp"

namespace cofi {
namespace {

TensorD random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  return TensorD(s, std::move(v));
}

// Fixed random projection so the scalar objective sees every output element
// with a distinct weight.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : seed_(seed) {}

  TensorD operator()(const TensorD& out) {
    auto it = weights_.find(out.shape().str() + "#" + std::to_string(calls_++));
    if (it == weights_.end()) {
      Rng rng(seed_ + calls_ * 7919);
      it = weights_.emplace(out.shape().str() + "#" + std::to_string(calls_ - 1), random_tensor(rng, out.shape()))
               .first;
    }
    return sum(mul(out, it->second));
  }

  // Call at the start of every evaluation so the i-th projected output
  // always meets the same weights.
  void reset() { calls_ = 0; }

 private:
  std::uint64_t seed_;
  int calls_ = 0;
  std::map<std::string, TensorD> weights_;
};

std::vector<NamedTensorD> params_with_prefix(CofiNet<double>& model, const std::vector<std::string>& prefixes) {
  std::vector<NamedTensorD> out;
  for (const auto& p : model.params()) {
    for (const auto& pre : prefixes) {
      if (p.name.rfind(pre, 0) == 0) {
        out.push_back(NamedTensorD{p.name, p.tensor});
        break;
      }
    }
  }
  return out;
}

class Collector {
 public:
  explicit Collector(GradcheckReport& report) : report_(report) {}

  void add(const std::string& module, const GradCheckResult& r, const std::string& label) {
    ModuleCheck* m = nullptr;
    for (auto& x : report_.modules) {
      if (x.module == module) m = &x;
    }
    if (m == nullptr) {
      report_.modules.push_back(ModuleCheck{module, 0.0, 0, 0, ""});
      m = &report_.modules.back();
    }
    m->checked += r.checked;
    m->skipped += r.skipped;
    if (r.max_rel_error >= m->worst) {
      m->worst = r.max_rel_error;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s[%zu] analytic=%.6e numeric=%.6e",
                    r.worst_name.empty() ? label.c_str() : r.worst_name.c_str(), r.worst_index, r.worst_analytic,
                    r.worst_numeric);
      m->worst_at = buf;
    }
  }

 private:
  GradcheckReport& report_;
};

void check_input(Collector& c, const std::string& module, const std::string& label,
                 const std::function<TensorD(const TensorD&)>& op, const TensorD& x, std::uint64_t seed,
                 double eps) {
  Projector proj(seed);
  auto r = grad_check(
      [&](const TensorD& v) {
        proj.reset();
        return proj(op(v));
      },
      x, eps);
  r.worst_name = label;
  c.add(module, r, label);
}

void tensor_core(Collector& c, std::uint64_t seed, double eps) {
  const std::string m = "tensor-core";
  Rng rng(seed * 31 + 1);
  const TensorD x = random_tensor(rng, Shape{2, 3, 7, 7});
  const TensorD w = random_tensor(rng, Shape{4, 3, 3, 3});
  const TensorD b = random_tensor(rng, Shape{1, 4, 1, 1});
  const ConvGeometry g{2, 2, 2};
  check_input(c, m, "conv2d/x", [&](const TensorD& v) { return conv2d(v, w, &b, g); }, x, seed, eps);
  check_input(c, m, "conv2d/w", [&](const TensorD& v) { return conv2d(x, v, &b, g); }, w, seed, eps);
  check_input(c, m, "conv2d/b", [&](const TensorD& v) { return conv2d(x, w, &v, g); }, b, seed, eps);
  check_input(c, m, "conv2d/1x1", [&](const TensorD& v) { return conv2d<double>(x, v, nullptr, ConvGeometry{}); },
              random_tensor(rng, Shape{4, 3, 1, 1}), seed, eps);

  const TensorD small = random_tensor(rng, Shape{1, 2, 4, 6});
  check_input(c, m, "resize2/up", [](const TensorD& v) { return resize2(v, ResizeDir::kUp); }, small, seed, eps);
  check_input(c, m, "resize2/down", [](const TensorD& v) { return resize2(v, ResizeDir::kDown); }, small, seed, eps);
  check_input(c, m, "resize_bilinear/up", [](const TensorD& v) { return resize_bilinear(v, 5, 9); }, small, seed, eps);
  check_input(c, m, "resize_bilinear/down", [](const TensorD& v) { return resize_bilinear(v, 3, 2); }, small, seed,
              eps);

  const TensorD a = random_tensor(rng, Shape{2, 3, 4, 4});
  const TensorD bb = random_tensor(rng, Shape{1, 3, 1, 4});
  for (auto op : {EltOp::kMul, EltOp::kAdd, EltOp::kSub}) {
    const std::string name = op == EltOp::kMul ? "mul" : op == EltOp::kAdd ? "add" : "sub";
    check_input(c, m, "eltwise/" + name + "/a", [&](const TensorD& v) { return eltwise(v, bb, op); }, a, seed, eps);
    check_input(c, m, "eltwise/" + name + "/b", [&](const TensorD& v) { return eltwise(a, v, op); }, bb, seed, eps);
  }
  check_input(c, m, "scale", [](const TensorD& v) { return scale(v, 0.75); }, a, seed, eps);
  check_input(c, m, "concat", [&](const TensorD& v) { return concat_channels<double>({v, a, v}); }, a, seed, eps);
  check_input(c, m, "slice", [](const TensorD& v) { return slice_channels(v, 1, 2); }, a, seed, eps);

  // Keep ReLU inputs away from the kink.
  TensorD away = random_tensor(rng, Shape{1, 2, 3, 5});
  for (double& v : away.mutable_data()) v = (v < 0 ? -0.1 : 0.1) + v;
  for (Act k : {Act::kRelu, Act::kGelu, Act::kTanh, Act::kSigmoid, Act::kIdentity}) {
    check_input(c, m, std::string("activation/") + act_name(k), [k](const TensorD& v) { return activation(v, k); },
                away, seed, eps);
  }
  check_input(c, m, "channel_reduce/max", [](const TensorD& v) { return channel_reduce(v, Reduce::kMax); }, a, seed,
              eps);
  check_input(c, m, "channel_reduce/mean", [](const TensorD& v) { return channel_reduce(v, Reduce::kMean); }, a, seed,
              eps);
  check_input(c, m, "maxpool2", [](const TensorD& v) { return maxpool2(v); }, a, seed, eps);
  check_input(c, m, "global_mean", [](const TensorD& v) { return global_mean(v); }, a, seed, eps);
  const TensorD pw = random_tensor(rng, Shape{5, 3, 1, 1});
  const TensorD pb = random_tensor(rng, Shape{1, 5, 1, 1});
  check_input(c, m, "global_pool_project/x", [&](const TensorD& v) { return global_pool_project(v, pw, pb); }, a,
              seed, eps);
  check_input(c, m, "global_pool_project/w", [&](const TensorD& v) { return global_pool_project(a, v, pb); }, pw,
              seed, eps);
  check_input(c, m, "broadcast_to", [](const TensorD& v) { return broadcast_to(v, Shape{2, 3, 4, 4}); }, bb, seed,
              eps);
  const TensorD probs = random_tensor(rng, Shape{1, 1, 3, 4}, 0.1, 0.9);
  check_input(c, m, "logit", [](const TensorD& v) { return logit(v, 1e-12); }, probs, seed, eps);
  check_input(c, m, "mean", [](const TensorD& v) { return mean(v); }, a, seed, eps);
}

void losses(Collector& c, std::uint64_t seed, double eps, int size, int batch) {
  const std::string m = "losses";
  Rng rng(seed * 131 + 7);
  const int h = size / 4;
  const int w = size / 4;
  TensorD gt(Shape{batch, 1, h, w});
  // A square object keeps the difficulty weights non-trivial.
  for (int n = 0; n < batch; ++n) {
    for (int i = h / 4; i < 3 * h / 4; ++i) {
      for (int j = w / 4 + n; j < 3 * w / 4; ++j) gt.at(n, 0, i, j) = 1.0;
    }
  }
  const TensorD logits = random_tensor(rng, gt.shape(), -3, 3);
  auto direct = [](const std::string& label, const std::function<TensorD(const TensorD&)>& f, const TensorD& x) {
    return std::make_pair(label, std::make_pair(f, x));
  };
  for (const auto& [label, job] :
       {direct("structure_loss", [&](const TensorD& v) { return structure_loss(v, gt); }, logits),
        direct("dda_loss", [&](const TensorD& v) { return dda_loss(v, gt); }, logits)}) {
    auto r = grad_check(job.first, job.second, eps);
    r.worst_name = label;
    c.add(m, r, label);
  }

  const TensorD coarse = random_tensor(rng, gt.shape(), -3, 3);
  const TensorD fine = random_tensor(rng, gt.shape(), 0.05, 0.95);
  const TensorD final = random_tensor(rng, gt.shape(), -3, 3);
  std::vector<AuxLogits<double>> aux{{random_tensor(rng, Shape{batch, 1, h / 4, w / 4}, -2, 2), 4}};
  auto report = [&](const TensorD& cl, const TensorD& fi, const TensorD& fl, const TensorD& ax) {
    MaskTriple<double> masks{cl, fi, fl};
    std::vector<AuxLogits<double>> a{{ax, 4}};
    return deep_supervision_loss(masks, a, gt);
  };
  // The residual target is deliberately cut from the tape, so the coarse
  // logits are checked through their own term only.
  auto r = grad_check([&](const TensorD& v) { return report(v, fine, final, aux[0].logits).coarse; }, coarse, eps);
  r.worst_name = "deep_supervision/coarse";
  c.add(m, r, "");
  r = grad_check([&](const TensorD& v) { return report(coarse, v, final, aux[0].logits).total; }, fine, eps);
  r.worst_name = "deep_supervision/fine";
  c.add(m, r, "");
  r = grad_check([&](const TensorD& v) { return report(coarse, fine, v, aux[0].logits).total; }, final, eps);
  r.worst_name = "deep_supervision/final";
  c.add(m, r, "");
  r = grad_check([&](const TensorD& v) { return report(coarse, fine, final, v).total; }, aux[0].logits, eps);
  r.worst_name = "deep_supervision/aux";
  c.add(m, r, "");
}

}  // namespace

bool GradcheckReport::passed() const {
  for (const auto& m : modules) {
    if (!(m.worst < tolerance)) return false;
  }
  return !modules.empty();
}

std::string GradcheckReport::to_text() const {
  std::string out;
  char buf[512];
  for (const auto& m : modules) {
    std::snprintf(buf, sizeof buf, "%-16s max_rel_err=%.3e checked=%-6zu skipped=%-4zu %s  worst: %s\n",
                  m.module.c_str(), m.worst, m.checked, m.skipped, m.worst < tolerance ? "ok  " : "FAIL",
                  m.worst_at.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "gradcheck: %s (tolerance %.0e)\n", passed() ? "PASS" : "FAIL", tolerance);
  out += buf;
  return out;
}

GradcheckReport gradcheck_cmd(const Config& base_cfg, const GradcheckOptions& opt) {
  GradcheckReport report;
  report.tolerance = opt.tolerance;
  Collector col(report);
  const double eps = opt.eps;
  const std::size_t k = opt.samples_per_tensor;

  for (std::uint64_t seed : opt.seeds) {
    tensor_core(col, seed, eps);

    Config cfg = base_cfg;
    cfg.input_size = opt.size;
    cfg.seed = seed;
    CofiNet<double> model(cfg);
    Rng rng(seed * 977 + 3);
    const TensorD image = random_tensor(rng, Shape{opt.batch, 3, opt.size, opt.size}, 0.0, 1.0);

    ModelOutput<double> ref;
    {
      NoGradGuard guard;
      ref = model.forward(image);
    }
    const auto& pyr = ref.pyramid;
    Projector proj(seed);
    auto run = [&](const std::string& module, const std::vector<std::string>& prefixes,
                   const std::function<TensorD()>& f) {
      const auto params = params_with_prefix(model, prefixes);
      if (params.empty()) return;
      auto r = grad_check_params(
          [&] {
            proj.reset();
            return f();
          },
          params, eps, k, seed);
      col.add(module, r, module);
    };

    run("encoder", {"encoder."}, [&] {
      const auto p = model.encoder(image);
      const auto pyramid = add(add(proj(p.f1), proj(p.f2)), add(proj(p.f3), proj(p.f4)));
      return p.fx.defined() ? add(pyramid, proj(p.fx)) : pyramid;
    });
    run("msfi", {"msfi."}, [&] {
      const auto f = model.fusion(pyr.f2, pyr.f3, pyr.f4);
      return add(add(proj(f.f2pp), proj(f.f3pp)), proj(f.f4pp));
    });
    run("skip-stack", {"skip."}, [&] {
      const auto s = model.skip(pyr, ref.fused);
      return add(add(proj(s.z2), proj(s.z3)), proj(s.z4));
    });
    if (cfg.ablation.use_mskm) {
      // Levels 3 and 4 (4×4 and 2×2 at 64×64): few pixels per channel keep
      // ReLU and max-selection kinks rare under a ±eps perturbation.
      const auto& block = model.extract.mskm[2][0];
      const auto& tail = model.extract.mskm[3][0];
      run("mac", {"mskm.3.0.mac_a.", "mskm.3.0.mac_n."},
          [&] { return add(proj(block.dilated(ref.skips.z3)), proj(block.normal(ref.skips.z3))); });
      run("mskm", {"mskm.3.0.", "mskm.4.0."},
          [&] { return add(proj(block(ref.skips.z3)), proj(tail(ref.skips.z4))); });
    } else {
      run("plain-blocks", {"plain.3.", "plain.4."}, [&] {
        return add(proj(model.extract.level(2, ref.skips.z3)), proj(model.extract.level(3, ref.skips.z4)));
      });
    }
    const auto f2_up = resize2(ref.fused.f2pp, ResizeDir::kUp);
    run("coarse-decoder", {"coarse."}, [&] { return proj(model.coarse(f2_up, opt.size, opt.size)); });
    if (model.sbd) run("sbd", {"sbd."}, [&] { return proj((*model.sbd)(pyr.fx, opt.size, opt.size)); });
    run("final-decoder", {"final."}, [&] {
      return proj(model.final(ref.extracted, ref.masks.fine.defined() ? &ref.masks.fine : nullptr, opt.size,
                              opt.size));
    });
    run("aux-heads", {"aux3.", "aux4."},
        [&] { return add(proj(model.aux3(ref.fused.f3pp)), proj(model.aux4(ref.fused.f4pp))); });

    losses(col, seed, eps, opt.size, opt.batch);
  }
  return report;
}

}  // namespace cofi
