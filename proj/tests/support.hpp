#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cofinet/config.hpp"
#include "cofinet/rng.hpp"
#include "cofinet/tensor.hpp"

namespace testing {

template <typename T>
cofi::Tensor<T> random_tensor(cofi::Shape s, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  cofi::Rng rng(seed);
  cofi::Tensor<T> t(s);
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Owned copy of a tensor's values; safe to range over when the tensor is a
// temporary.
template <typename T>
std::vector<T> values(const cofi::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cofinet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Narrow model for fast tests at 64×64.
inline cofi::Config small_config(std::uint64_t seed = 0) {
  cofi::Config cfg;
  cfg.input_size = 64;
  cfg.widths = {8, 8, 16, 16};
  cfg.latent = 16;
  cfg.stem_width = 8;
  cfg.mskm_depth = 1;
  cfg.unet_base = 4;
  cfg.fusion_width = 8;
  cfg.sbd_hidden = 8;
  cfg.batch_size = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace testing
