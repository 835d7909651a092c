#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args, const testing::TempDir& dir) {
  const std::string log = dir / "cli.log";
  const std::string cmd = std::string(COFINET_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

const char* kSmall = " --input-size 64 --widths 8 8 16 16 --latent 16 --stem-width 8 --mskm-depth 1"
                     " --unet-base 4 --fusion-width 8 --sbd-hidden 8 --batch-size 4";

}  // namespace

TEST_CASE("cli: gen-data, train, eval, infer succeed") {
  testing::TempDir dir("cli");
  const std::string data = dir / "data";
  REQUIRE(cli("gen-data --out " + data + " --seed 3 --n 3 --size 64", dir).code == 0);
  CHECK(std::filesystem::exists(data + "/manifest.tsv"));

  const Run t = cli("train --train " + data + "/manifest.tsv --out " + (dir / "run") + " --epochs 1" + kSmall, dir);
  INFO(t.out);
  REQUIRE(t.code == 0);
  CHECK(t.out.find("epoch\ttotal") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "run/best.ckpt"));

  const Run e = cli("eval --checkpoint " + (dir / "run/best.ckpt") + " --manifest " + data + "/manifest.tsv --out " +
                        (dir / "eval") + kSmall,
                    dir);
  CHECK(e.code == 0);
  CHECK(e.out.find("\"aggregate\"") != std::string::npos);

  const Run i = cli("infer --checkpoint " + (dir / "run/best.ckpt") + " --image " + data +
                        "/images/syn_0000.ppm --out " + (dir / "m.pgm") + " --emit-intermediate" + kSmall,
                    dir);
  CHECK(i.code == 0);
  CHECK(std::filesystem::exists(dir / "m.fine.pgm"));

  // Flags may come from a JSON config file.
  std::ofstream(dir / "cfg.json") << "{\"input_size\": 64, \"widths\": [8, 8, 16, 16], \"latent\": 16,"
                                     " \"stem_width\": 8, \"mskm_depth\": 1, \"unet_base\": 4,"
                                     " \"fusion_width\": 8, \"sbd_hidden\": 8}";
  CHECK(cli("infer --config " + (dir / "cfg.json") + " --checkpoint " + (dir / "run/best.ckpt") + " --image " + data +
                "/images/syn_0001.ppm --out " + (dir / "n.pgm"),
            dir)
            .code == 0);
}

TEST_CASE("cli: configuration errors exit 2") {
  testing::TempDir dir("cli2");
  CHECK(cli("train --train x.tsv --out o --input-size 100", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("gen-data --out " + (dir / "d") + " --size 48", dir).code == 2);
  const Run r = cli("train --train x.tsv --out o --epochs 0", dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("epochs") != std::string::npos);
}

TEST_CASE("cli: I/O and format errors exit 3") {
  testing::TempDir dir("cli3");
  const Run r = cli("train --train " + (dir / "missing.tsv") + " --out " + (dir / "o") + kSmall, dir);
  CHECK(r.code == 3);
  CHECK(r.out.find("missing.tsv") != std::string::npos);
  std::ofstream(dir / "bad.ppm") << "P3 1 1 255 0 0 0";
  std::ofstream(dir / "x.ckpt") << "junk";
  CHECK(cli("infer --checkpoint " + (dir / "x.ckpt") + " --image " + (dir / "bad.ppm") + " --out " + (dir / "o.pgm") +
                kSmall,
            dir)
            .code == 3);
}

TEST_CASE("cli: gradcheck negative control exits 5") {
  testing::TempDir dir("cli5");
  const Run r = cli("gradcheck --seeds 1 --samples 1 --corrupt-backward", dir);
  CHECK(r.code == 5);
  CHECK(r.out.find("FAIL") != std::string::npos);
}
