#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace cofi {

// Module swaps for ablation runs.
struct Ablation {
  bool use_msfi = true;
  bool use_mskm = true;
  bool use_sbd = true;
};

struct Config {
  // Training defaults follow the published setup.
  int input_size = 384;
  double lr = 0.001;
  double weight_decay = 0.0001;
  int batch_size = 8;
  int epochs = 100;
  int early_stop_patience = 10;

  // Architecture widths. Encoder stage widths C1..C4 are also the per-level
  // widths of the fused features and skip stack; MSKM needs them divisible
  // by 4 (one block per activation).
  std::array<int, 4> widths{32, 64, 128, 256};
  int latent = 256;
  int stem_width = 16;
  int mskm_depth = 2;
  int unet_base = 16;
  int fusion_width = 32;
  int sbd_hidden = 64;

  Ablation ablation;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

Config config_from_json(const std::string& text);
std::string config_to_json(const Config& cfg);

}  // namespace cofi
