#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "cofinet/error.hpp"
#include "cofinet/image_io.hpp"
#include "cofinet/rng.hpp"

namespace cofi {
namespace {

// Lattice values on a (g+1)x(g+1) grid spanning the image, smoothstep blend.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int base_cells) {
    for (int o = 0; o < kOctaves; ++o) {
      const int g = base_cells << o;
      cells_[o] = g;
      lattice_[o].resize(static_cast<std::size_t>(g + 1) * (g + 1));
      for (double& v : lattice_[o]) v = rng.uniform();
    }
  }

  // u, v in [0,1]; result in [0,1].
  double operator()(double u, double v) const {
    double total = 0;
    double amp = 1;
    double norm = 0;
    for (int o = 0; o < kOctaves; ++o) {
      total += amp * octave(o, u, v);
      norm += amp;
      amp *= 0.5;
    }
    return total / norm;
  }

 private:
  static constexpr int kOctaves = 3;

  double octave(int o, double u, double v) const {
    const int g = cells_[o];
    const double x = std::clamp(u, 0.0, 1.0) * g;
    const double y = std::clamp(v, 0.0, 1.0) * g;
    const int x0 = std::min(static_cast<int>(x), g - 1);
    const int y0 = std::min(static_cast<int>(y), g - 1);
    const double fx = smooth(x - x0);
    const double fy = smooth(y - y0);
    auto at = [&](int i, int j) { return lattice_[o][static_cast<std::size_t>(j) * (g + 1) + i]; };
    const double top = at(x0, y0) * (1 - fx) + at(x0 + 1, y0) * fx;
    const double bottom = at(x0, y0 + 1) * (1 - fx) + at(x0 + 1, y0 + 1) * fx;
    return top * (1 - fy) + bottom * fy;
  }

  static double smooth(double t) { return t * t * (3 - 2 * t); }

  std::array<int, kOctaves> cells_{};
  std::array<std::vector<double>, kOctaves> lattice_;
};

struct Texture {
  std::array<double, 3> base{};
  std::array<double, 3> tint{};
  double contrast = 0.35;
};

std::array<double, 3> shade(const Texture& t, double n) {
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(t.base[k] + t.contrast * t.tint[k] * (n - 0.5), 0.0, 1.0);
  return c;
}

struct Stripe {
  double px, py;  // point on the centre line
  double nx, ny;  // unit normal
  double half_width;
};

std::vector<std::uint8_t> draw_mask(Rng& rng, int size) {
  constexpr double kPi = std::numbers::pi;
  const double cx = rng.uniform(0.3, 0.7) * size;
  const double cy = rng.uniform(0.3, 0.7) * size;
  const double rx = rng.uniform(0.15, 0.35) * size;
  const double ry = rng.uniform(0.15, 0.35) * size;
  const double rot = rng.uniform(0, kPi);
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};
  for (int k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(0, 0.12);
    phase[k] = rng.uniform(0, 2 * kPi);
  }
  std::vector<Stripe> stripes;
  if (rng.uniform() < 0.6) {
    const int count = rng.uniform_int(1, 2);
    for (int s = 0; s < count; ++s) {
      const double a = rng.uniform(0, kPi);
      const double off = rng.uniform(-0.5, 0.5) * std::min(rx, ry);
      stripes.push_back(Stripe{cx + off * std::cos(a), cy + off * std::sin(a), std::cos(a), std::sin(a),
                               0.5 * rng.uniform(0.04, 0.08) * size});
    }
  }

  const double cr = std::cos(rot);
  const double sr = std::sin(rot);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dx = j + 0.5 - cx;
      const double dy = i + 0.5 - cy;
      const double u = (dx * cr + dy * sr) / rx;
      const double v = (-dx * sr + dy * cr) / ry;
      const double phi = std::atan2(v, u);
      double radius = 1;
      for (int k = 0; k < 3; ++k) radius += amp[k] * std::cos((k + 2) * phi + phase[k]);
      bool inside = u * u + v * v < radius * radius;
      for (const auto& st : stripes) {
        const double d = (j + 0.5 - st.px) * st.nx + (i + 0.5 - st.py) * st.ny;
        if (std::abs(d) < st.half_width) inside = false;
      }
      mask[static_cast<std::size_t>(i) * size + j] = inside ? 255 : 0;
    }
  }
  return mask;
}

double area_fraction(const std::vector<std::uint8_t>& mask) {
  std::size_t on = 0;
  for (auto b : mask) on += b != 0;
  return static_cast<double>(on) / mask.size();
}

}  // namespace

SyntheticSample synth_sample(std::uint64_t seed, int size, double delta) {
  if (size < 8) throw ConfigError("gen_synthetic: size must be at least 8");
  Rng rng(seed);

  Texture bg;
  for (int k = 0; k < 3; ++k) {
    bg.base[k] = rng.uniform(0.25, 0.75);
    bg.tint[k] = rng.uniform(0.7, 1.3);
  }
  const int bg_cells = rng.uniform_int(3, 6);
  ValueNoise bg_noise(rng, bg_cells);

  // Foreground: same family, base colour pulled towards white or black by
  // delta, lattice slightly finer, fresh lattice values.
  Texture fg = bg;
  const double mean_base = (bg.base[0] + bg.base[1] + bg.base[2]) / 3;
  const double target = mean_base < 0.5 ? 1.0 : 0.0;
  for (int k = 0; k < 3; ++k) {
    fg.base[k] = bg.base[k] * (1 - delta) + target * delta;
    fg.tint[k] = bg.tint[k] * rng.uniform(1 - delta, 1 + delta);
  }
  const int fg_cells = bg_cells + static_cast<int>(std::lround(delta * bg_cells));
  ValueNoise fg_noise(rng, std::max(1, fg_cells));

  std::vector<std::uint8_t> mask;
  bool accepted = false;
  for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
    mask = draw_mask(rng, size);
    const double a = area_fraction(mask);
    accepted = a >= 0.05 && a <= 0.5;
  }
  if (!accepted) {
    // Plain centred disc of radius size/4: area fraction pi/16.
    mask.assign(static_cast<std::size_t>(size) * size, 0);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double dx = j + 0.5 - size / 2.0;
        const double dy = i + 0.5 - size / 2.0;
        if (dx * dx + dy * dy < size * size / 16.0) mask[static_cast<std::size_t>(i) * size + j] = 255;
      }
    }
  }

  SyntheticSample out;
  out.mask = GrayImage{size, size, mask};
  out.image = RgbImage{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3)};
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * size + j;
      const double u = (j + 0.5) / size;
      const double v = (i + 0.5) / size;
      const auto c = mask[idx] ? shade(fg, fg_noise(u, v)) : shade(bg, bg_noise(u, v));
      for (int k = 0; k < 3; ++k) out.image.px[idx * 3 + k] = quantize(c[k]);
    }
  }
  return out;
}

Manifest gen_synthetic(const SyntheticOptions& opt, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (opt.n < 1) throw ConfigError("gen_synthetic: n must be >= 1");
  if (opt.size <= 0 || opt.size % 32 != 0) throw ConfigError("gen_synthetic: size must be a positive multiple of 32");
  if (!(opt.delta >= 0 && opt.delta <= 1)) throw ConfigError("gen_synthetic: delta must be in [0,1]");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "masks", ec);
  if (ec) throw IoError("gen_synthetic: cannot create " + out_dir + ": " + ec.message());

  Rng master(opt.seed);
  Manifest listing;
  Manifest resolved;
  for (int k = 0; k < opt.n; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "syn_%04d", k);
    const SyntheticSample s = synth_sample(master.next(), opt.size, opt.delta);
    const std::string image_rel = std::string("images/") + id + ".ppm";
    const std::string mask_rel = std::string("masks/") + id + ".pgm";
    write_ppm(s.image, (fs::path(out_dir) / image_rel).string());
    write_pgm(s.mask, (fs::path(out_dir) / mask_rel).string());
    listing.entries.push_back(ManifestEntry{id, image_rel, mask_rel});
    resolved.entries.push_back(ManifestEntry{id, (fs::path(out_dir) / image_rel).string(),
                                             (fs::path(out_dir) / mask_rel).string()});
  }
  write_manifest(listing, (fs::path(out_dir) / "manifest.tsv").string());
  return resolved;
}

}  // namespace cofi
