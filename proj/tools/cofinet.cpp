// Command-line front end: gen-data, train, eval, infer, gradcheck.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cofinet/error.hpp"
#include "cofinet/image_io.hpp"
#include "cofinet/ops.hpp"
#include "cofinet/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumeric = 4, kGradcheck = 5 };

struct ConfigFlags {
  std::string path;
  std::optional<std::uint64_t> seed;
  std::optional<int> input_size, batch_size, epochs, early_stop_patience, latent, stem_width, mskm_depth,
      unet_base, fusion_width, sbd_hidden;
  std::optional<double> lr, weight_decay;
  std::vector<int> widths;
  bool no_sbd = false;
  bool no_mskm = false;
  bool no_msfi = false;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "JSON config file");
    app->add_option("--seed", seed);
    app->add_option("--input-size,--input_size", input_size);
    app->add_option("--lr", lr);
    app->add_option("--weight-decay,--weight_decay", weight_decay);
    app->add_option("--batch-size,--batch_size", batch_size);
    app->add_option("--epochs", epochs);
    app->add_option("--early-stop-patience,--early_stop_patience", early_stop_patience);
    app->add_option("--widths", widths, "C1 C2 C3 C4")->expected(4);
    app->add_option("--latent", latent);
    app->add_option("--stem-width,--stem_width", stem_width);
    app->add_option("--mskm-depth,--mskm_depth", mskm_depth);
    app->add_option("--unet-base,--unet_base", unet_base);
    app->add_option("--fusion-width,--fusion_width", fusion_width);
    app->add_option("--sbd-hidden,--sbd_hidden", sbd_hidden);
    app->add_flag("--no-sbd", no_sbd, "drop the broadcast (fine mask) decoder");
    app->add_flag("--no-mskm", no_mskm, "plain 3x3 blocks instead of MSKM");
    app->add_flag("--no-msfi", no_msfi, "plain 1x1 convs instead of multiplicative fusion");
  }

  cofi::Config resolve() const {
    cofi::Config cfg;
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw cofi::IoError("cannot open config " + path);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = cofi::config_from_json(ss.str());
    }
    auto set = [](auto& field, const auto& opt) {
      if (opt) field = *opt;
    };
    set(cfg.seed, seed);
    set(cfg.input_size, input_size);
    set(cfg.lr, lr);
    set(cfg.weight_decay, weight_decay);
    set(cfg.batch_size, batch_size);
    set(cfg.epochs, epochs);
    set(cfg.early_stop_patience, early_stop_patience);
    set(cfg.latent, latent);
    set(cfg.stem_width, stem_width);
    set(cfg.mskm_depth, mskm_depth);
    set(cfg.unet_base, unet_base);
    set(cfg.fusion_width, fusion_width);
    set(cfg.sbd_hidden, sbd_hidden);
    if (widths.size() == 4) std::copy(widths.begin(), widths.end(), cfg.widths.begin());
    if (no_sbd) cfg.ablation.use_sbd = false;
    if (no_mskm) cfg.ablation.use_mskm = false;
    if (no_msfi) cfg.ablation.use_msfi = false;
    cfg.validate();
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"CoFiNet camouflaged object detection (desk scale)"};
  app.require_subcommand(1);

  cofi::SyntheticOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic camouflage corpus");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--n", gen.n, "number of samples");
  gen_cmd->add_option("--size", gen.size, "side length, multiple of 32");
  gen_cmd->add_option("--delta", gen.delta, "foreground/background dissimilarity in [0,1]");

  ConfigFlags train_flags;
  std::string train_manifest, val_manifest, train_out;
  int max_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "train and keep the best checkpoint");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--train", train_manifest, "training manifest")->required();
  train_cmd->add_option("--val", val_manifest, "validation manifest (default: the training manifest)");
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--max-steps,--max_steps", max_steps, "stop after this many optimizer steps");

  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_manifest, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "predict every sample and write a metrics report");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--out", eval_out, "directory for masks and report.json")->required();

  ConfigFlags infer_flags;
  std::string infer_ckpt, infer_image, infer_out;
  bool emit = false;
  auto* infer_cmd = app.add_subcommand("infer", "predict one image");
  infer_flags.attach(infer_cmd);
  infer_cmd->add_option("--checkpoint", infer_ckpt)->required();
  infer_cmd->add_option("--image", infer_image, "P6 PPM input")->required();
  infer_cmd->add_option("--out", infer_out, "output PGM path")->required();
  infer_cmd->add_flag("--emit-intermediate", emit, "also write .coarse.pgm and .fine.pgm");

  ConfigFlags gc_flags;
  cofi::GradcheckOptions gc;
  int gc_seeds = static_cast<int>(gc.seeds.size());
  bool corrupt = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every module");
  gc_flags.attach(gc_cmd);
  gc_cmd->add_option("--seeds", gc_seeds, "number of seeds, starting at --seed");
  gc_cmd->add_option("--samples", gc.samples_per_tensor, "elements sampled per parameter tensor");
  gc_cmd->add_flag("--corrupt-backward", corrupt, "test fixture: scale conv weight gradients by 1.05");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*gen_cmd) {
    const auto m = cofi::gen_synthetic(gen, gen_out);
    std::printf("wrote %zu samples to %s\n", m.entries.size(), gen_out.c_str());
  } else if (*train_cmd) {
    const cofi::Config cfg = train_flags.resolve();
    const auto train_m = cofi::read_manifest(train_manifest, "train");
    const auto val_m = val_manifest.empty() ? train_m : cofi::read_manifest(val_manifest, "val");
    cofi::TrainOptions opt;
    opt.out_dir = train_out;
    opt.max_steps = max_steps;
    opt.on_epoch = [](const cofi::EpochLog& e) {
      std::fputs(cofi::train_log_line(e).c_str(), stdout);
      std::fflush(stdout);
    };
    std::fputs(cofi::train_log_header().c_str(), stdout);
    const auto r = cofi::train(cfg, train_m, val_m, opt);
    std::printf("best val_mae %.6f at epoch %d; checkpoint %s\n", r.best_val_mae, r.best_epoch,
                r.checkpoint_path.c_str());
  } else if (*eval_cmd) {
    const cofi::Config cfg = eval_flags.resolve();
    const auto report = cofi::eval_cmd(cfg, eval_ckpt, cofi::read_manifest(eval_manifest, "test"), eval_out);
    std::fputs(report.to_json().c_str(), stdout);
  } else if (*infer_cmd) {
    const cofi::Config cfg = infer_flags.resolve();
    for (const auto& p : cofi::infer(cfg, infer_ckpt, infer_image, infer_out, emit)) std::printf("%s\n", p.c_str());
  } else if (*gc_cmd) {
    const cofi::Config cfg = gc_flags.resolve();
    gc.seeds.clear();
    for (int i = 0; i < gc_seeds; ++i) gc.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    cofi::debug::set_corrupt_conv_backward(corrupt);
    const auto report = cofi::gradcheck_cmd(cfg, gc);
    std::fputs(report.to_text().c_str(), stdout);
    if (!report.passed()) return kGradcheck;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cofi::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const cofi::DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kConfig;
  } catch (const cofi::ValueError& e) {
    std::fprintf(stderr, "value error: %s\n", e.what());
    return kConfig;
  } catch (const cofi::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const cofi::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (const cofi::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const cofi::StateError& e) {
    std::fprintf(stderr, "state error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
