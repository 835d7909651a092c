#include "cofinet/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <thread>

#include <json.hpp>

#include "cofinet/error.hpp"
#include "cofinet/image_io.hpp"

namespace cofi {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_same(const Plane& a, const Plane& b) {
  if (a.h != b.h || a.w != b.w) {
    throw DimensionError("metrics: prediction " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                         " vs ground truth " + std::to_string(b.h) + "x" + std::to_string(b.w));
  }
}

std::vector<char> binary(const Plane& gt) {
  std::vector<char> b(gt.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = gt.v[i] > 0.5;
  return b;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / xs.size();
}

// 2x / (x² + 1 + σ + eps), σ the sample standard deviation.
double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  const double x = mean_of(vals);
  double ss = 0;
  for (double v : vals) ss += (v - x) * (v - x);
  const double sigma = vals.size() > 1 ? std::sqrt(ss / (vals.size() - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double region_ssim(const Plane& pred, const std::vector<char>& gt, int r0, int r1, int c0, int c1) {
  const double n = static_cast<double>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 0.0;
  double x = 0;
  double y = 0;
  for (int i = r0; i < r1; ++i) {
    for (int j = c0; j < c1; ++j) {
      x += pred(i, j);
      y += gt[static_cast<std::size_t>(i) * pred.w + j];
    }
  }
  x /= n;
  y /= n;
  double sxx = 0;
  double syy = 0;
  double sxy = 0;
  for (int i = r0; i < r1; ++i) {
    for (int j = c0; j < c1; ++j) {
      const double dx = pred(i, j) - x;
      const double dy = gt[static_cast<std::size_t>(i) * pred.w + j] - y;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  sxx /= (n - 1 + kEps);
  syy /= (n - 1 + kEps);
  sxy /= (n - 1 + kEps);
  const double alpha = 4 * x * y * sxy;
  const double beta = (x * x + y * y) * (sxx + syy);
  if (alpha != 0) return alpha / (beta + kEps);
  if (beta == 0) return 1.0;
  return 0.0;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double mae(const Plane& pred, const Plane& gt) {
  check_same(pred, gt);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.v[i] - (gt.v[i] > 0.5 ? 1.0 : 0.0));
  return pred.size() == 0 ? 0.0 : s / pred.size();
}

Plane binarize_adaptive(const Plane& pred) {
  const double t = std::min(2.0 * mean_of(pred.v), 1.0);
  Plane out(pred.h, pred.w);
  for (std::size_t i = 0; i < pred.size(); ++i) out.v[i] = (pred.v[i] >= t && pred.v[i] > 0) ? 1.0 : 0.0;
  return out;
}

double adaptive_fbeta(const Plane& pred, const Plane& gt, const MetricsConfig& cfg) {
  check_same(pred, gt);
  const Plane pb = binarize_adaptive(pred);
  const auto g = binary(gt);
  double tp = 0;
  double fp = 0;
  double fn = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const bool p = pb.v[i] > 0.5;
    if (p && g[i]) ++tp;
    if (p && !g[i]) ++fp;
    if (!p && g[i]) ++fn;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double denom = cfg.beta_sq * precision + recall;
  if (denom == 0) return 0.0;
  return (1 + cfg.beta_sq) * precision * recall / denom;
}

double s_measure(const Plane& pred, const Plane& gt, const MetricsConfig& cfg) {
  check_same(pred, gt);
  const auto g = binary(gt);
  double fg_count = 0;
  for (char b : g) fg_count += b;
  const double y = fg_count / g.size();
  if (fg_count == 0) return 1.0 - mean_of(pred.v);
  if (fg_count == static_cast<double>(g.size())) return mean_of(pred.v);

  std::vector<double> fg;
  std::vector<double> bg;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i]) {
      fg.push_back(pred.v[i]);
    } else {
      bg.push_back(1.0 - pred.v[i]);
    }
  }
  const double s_object = y * object_score(fg) + (1 - y) * object_score(bg);

  // Split after the last row/column whose centre is at or before the
  // centroid; with 1-based coordinates that is floor(centroid). Unlike
  // rounding, this mirrors under a flip unless the centroid sits on a centre.
  double sx = 0;
  double sy = 0;
  for (int i = 0; i < gt.h; ++i) {
    for (int j = 0; j < gt.w; ++j) {
      if (g[static_cast<std::size_t>(i) * gt.w + j]) {
        sx += j + 1;
        sy += i + 1;
      }
    }
  }
  const int cx = static_cast<int>(std::floor(sx / fg_count));
  const int cy = static_cast<int>(std::floor(sy / fg_count));
  const double area = static_cast<double>(gt.h) * gt.w;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(gt.w - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (gt.h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double s_region = w1 * region_ssim(pred, g, 0, cy, 0, cx) +
                          w2 * region_ssim(pred, g, 0, cy, cx, gt.w) +
                          w3 * region_ssim(pred, g, cy, gt.h, 0, cx) +
                          w4 * region_ssim(pred, g, cy, gt.h, cx, gt.w);
  const double s = cfg.s_alpha_weight * s_object + (1 - cfg.s_alpha_weight) * s_region;
  return std::max(0.0, s);
}

double e_measure_adaptive(const Plane& pred, const Plane& gt) {
  check_same(pred, gt);
  const Plane pb = binarize_adaptive(pred);
  const auto g = binary(gt);
  double fg_count = 0;
  for (char b : g) fg_count += b;
  if (fg_count == 0) return 1.0 - mean_of(pb.v);
  if (fg_count == static_cast<double>(g.size())) return mean_of(pb.v);
  const double mg = fg_count / g.size();
  const double mp = mean_of(pb.v);
  double total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double phi_g = g[i] - mg;
    const double phi_p = pb.v[i] - mp;
    const double align = 2 * phi_g * phi_p / (phi_g * phi_g + phi_p * phi_p + 1e-8);
    total += (align + 1) * (align + 1) / 4;
  }
  return total / g.size();
}

ImageMetrics evaluate_pair(const std::string& id, const Plane& pred, const Plane& gt,
                           const MetricsConfig& cfg) {
  return ImageMetrics{id, mae(pred, gt), s_measure(pred, gt, cfg), e_measure_adaptive(pred, gt),
                      adaptive_fbeta(pred, gt, cfg)};
}

MetricsReport aggregate(std::vector<ImageMetrics> per_image) {
  MetricsReport r;
  for (const auto& m : per_image) {
    r.mae += m.mae;
    r.s_alpha += m.s_alpha;
    r.e_xi += m.e_xi;
    r.f_beta += m.f_beta;
  }
  if (!per_image.empty()) {
    const double n = static_cast<double>(per_image.size());
    r.mae /= n;
    r.s_alpha /= n;
    r.e_xi /= n;
    r.f_beta /= n;
  }
  r.per_image = std::move(per_image);
  return r;
}

std::string MetricsReport::to_json() const {
  auto quad = [](double m, double s, double e, double f) {
    return "\"mae\": " + fixed6(m) + ", \"s_alpha\": " + fixed6(s) + ", \"e_xi\": " + fixed6(e) +
           ", \"f_beta\": " + fixed6(f);
  };
  std::string out = "{\n  \"aggregate\": {" + quad(mae, s_alpha, e_xi, f_beta) + "},\n";
  out += "  \"per_image\": [";
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const auto& m = per_image[i];
    out += i == 0 ? "\n" : ",\n";
    out += "    {\"id\": " + nlohmann::json(m.id).dump() + ", " + quad(m.mae, m.s_alpha, m.e_xi, m.f_beta) +
           "}";
  }
  out += per_image.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

int thread_budget(int requested, std::size_t jobs) {
  int n = requested;
  if (n <= 0) {
    const char* env = std::getenv("COFINET_THREADS");
    n = env != nullptr ? std::atoi(env) : 0;
    if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  return std::max(1, std::min<int>(n, static_cast<int>(std::max<std::size_t>(jobs, 1))));
}

MetricsReport evaluate_dir(const std::string& pred_dir, const std::string& gt_dir,
                           const MetricsConfig& cfg, int threads) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(pred_dir)) throw IoError("evaluate_dir: not a directory: " + pred_dir);
  if (!fs::is_directory(gt_dir)) throw IoError("evaluate_dir: not a directory: " + gt_dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    if (!fs::exists(fs::path(gt_dir) / name)) {
      throw IoError("evaluate_dir: no ground truth for " + name + " in " + gt_dir);
    }
  }

  std::vector<ImageMetrics> results(names.size());
  std::vector<std::exception_ptr> errors(names.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      try {
        const Plane pred = gray_to_plane(read_pgm((fs::path(pred_dir) / names[i]).string()));
        const Plane gt = gray_to_plane(read_pgm((fs::path(gt_dir) / names[i]).string()));
        if (pred.h != gt.h || pred.w != gt.w) {
          throw DimensionError("evaluate_dir: size mismatch for " + names[i]);
        }
        results[i] = evaluate_pair(fs::path(names[i]).stem().string(), pred, gt, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = thread_budget(threads, names.size());
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return aggregate(std::move(results));
}

}  // namespace cofi
