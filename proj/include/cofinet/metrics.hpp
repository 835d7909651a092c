#pragma once

#include <string>
#include <vector>

namespace cofi {

// Single-channel map with values in [0,1], row-major.
struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}
  double operator()(int i, int j) const { return v[static_cast<std::size_t>(i) * w + j]; }
  double& operator()(int i, int j) { return v[static_cast<std::size_t>(i) * w + j]; }
  std::size_t size() const { return v.size(); }
};

struct MetricsConfig {
  double beta_sq = 0.3;
  double s_alpha_weight = 0.5;
};

struct ImageMetrics {
  std::string id;
  double mae = 0;
  double s_alpha = 0;
  double e_xi = 0;
  double f_beta = 0;
};

struct MetricsReport {
  double mae = 0;
  double s_alpha = 0;
  double e_xi = 0;
  double f_beta = 0;
  std::vector<ImageMetrics> per_image;

  // {"aggregate": {...}, "per_image": [...]}, values with 6 decimals.
  std::string to_json() const;
};

// Ground truth is binarised at 0.5 by every measure below.
double mae(const Plane& pred, const Plane& gt);

// Adaptive threshold t = min(2·mean(pred), 1); a pixel is foreground when
// pred >= t and pred > 0.
Plane binarize_adaptive(const Plane& pred);

double adaptive_fbeta(const Plane& pred, const Plane& gt, const MetricsConfig& cfg = {});

// Structure measure α·S_object + (1-α)·S_region, clamped at 0.
// gt all background: 1 - mean(pred); gt all foreground: mean(pred).
double s_measure(const Plane& pred, const Plane& gt, const MetricsConfig& cfg = {});

// Adaptive enhanced-alignment measure on the binarised prediction.
// gt all background: 1 - mean(predb); gt all foreground: mean(predb).
double e_measure_adaptive(const Plane& pred, const Plane& gt);

ImageMetrics evaluate_pair(const std::string& id, const Plane& pred, const Plane& gt,
                           const MetricsConfig& cfg = {});

// Means over per_image, which keeps its order.
MetricsReport aggregate(std::vector<ImageMetrics> per_image);

// Pairs same-named .pgm files, in lexicographic order. `threads` <= 0 reads
// COFINET_THREADS (default: hardware concurrency).
MetricsReport evaluate_dir(const std::string& pred_dir, const std::string& gt_dir,
                           const MetricsConfig& cfg = {}, int threads = 0);

// Worker count from COFINET_THREADS, capped at `jobs`.
int thread_budget(int requested, std::size_t jobs);

}  // namespace cofi
