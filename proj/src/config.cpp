#include "cofinet/config.hpp"

#include <json.hpp>

#include "cofinet/error.hpp"

namespace cofi {
namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ConfigError(std::string("config field '") + field + "': " + why);
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

void Config::validate() const {
  require(input_size > 0 && input_size % 32 == 0, "input_size", "must be a positive multiple of 32");
  require(lr > 0, "lr", "must be positive");
  require(weight_decay >= 0, "weight_decay", "must be non-negative");
  require(batch_size > 0, "batch_size", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(early_stop_patience > 0, "early_stop_patience", "must be positive");
  for (int w : widths) {
    require(w > 0 && w % 4 == 0, "widths", "every width must be a positive multiple of 4");
  }
  require(latent > 0, "latent", "must be positive");
  require(stem_width > 0, "stem_width", "must be positive");
  require(mskm_depth >= 1, "mskm_depth", "must be at least 1");
  require(unet_base > 0, "unet_base", "must be positive");
  require(fusion_width > 0, "fusion_width", "must be positive");
  require(sbd_hidden > 0, "sbd_hidden", "must be positive");
}

Config config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  Config cfg;
  read(j, "input_size", cfg.input_size);
  read(j, "lr", cfg.lr);
  read(j, "weight_decay", cfg.weight_decay);
  read(j, "batch_size", cfg.batch_size);
  read(j, "epochs", cfg.epochs);
  read(j, "early_stop_patience", cfg.early_stop_patience);
  read(j, "widths", cfg.widths);
  read(j, "latent", cfg.latent);
  read(j, "stem_width", cfg.stem_width);
  read(j, "mskm_depth", cfg.mskm_depth);
  read(j, "unet_base", cfg.unet_base);
  read(j, "fusion_width", cfg.fusion_width);
  read(j, "sbd_hidden", cfg.sbd_hidden);
  read(j, "use_msfi", cfg.ablation.use_msfi);
  read(j, "use_mskm", cfg.ablation.use_mskm);
  read(j, "use_sbd", cfg.ablation.use_sbd);
  read(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const Config& cfg) {
  nlohmann::ordered_json j;
  j["input_size"] = cfg.input_size;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["early_stop_patience"] = cfg.early_stop_patience;
  j["widths"] = cfg.widths;
  j["latent"] = cfg.latent;
  j["stem_width"] = cfg.stem_width;
  j["mskm_depth"] = cfg.mskm_depth;
  j["unet_base"] = cfg.unet_base;
  j["fusion_width"] = cfg.fusion_width;
  j["sbd_hidden"] = cfg.sbd_hidden;
  j["use_msfi"] = cfg.ablation.use_msfi;
  j["use_mskm"] = cfg.ablation.use_mskm;
  j["use_sbd"] = cfg.ablation.use_sbd;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

}  // namespace cofi
