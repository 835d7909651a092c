#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cofinet/error.hpp"
#include "cofinet/image_io.hpp"
#include "cofinet/rng.hpp"
#include "support.hpp"

using namespace cofi;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::string format_error(const std::vector<std::uint8_t>& b, bool gray) {
  try {
    if (gray) {
      parse_pgm(b);
    } else {
      parse_ppm(b);
    }
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("pgm/ppm: examples") {
  auto mask = bytes_of("P5\n2 2\n255\n");
  mask.insert(mask.end(), 4, 255);
  const auto g = parse_pgm(mask);
  CHECK(g.h == 2);
  CHECK(g.w == 2);
  for (double v : gray_to_plane(g).v) CHECK(v == 1.0);

  auto red = bytes_of("P6 1 1 255 ");
  red.insert(red.end(), {255, 0, 0});
  const auto t = rgb_to_tensor<double>(parse_ppm(red));
  CHECK(t.shape() == Shape{1, 3, 1, 1});
  CHECK(t.at(0, 0, 0, 0) == 1.0);
  CHECK(t.at(0, 1, 0, 0) == 0.0);
  CHECK(t.at(0, 2, 0, 0) == 0.0);

  // Comments in the header are skipped.
  auto commented = bytes_of("P5\n# made by hand\n1 1\n255\n");
  commented.push_back(7);
  CHECK(parse_pgm(commented).px == std::vector<std::uint8_t>{7});
}

TEST_CASE("pgm/ppm: malformed input names a byte offset") {
  CHECK(format_error(bytes_of("P6\n2 2\n255\n"), true).find("byte 0") != std::string::npos);
  CHECK(format_error(bytes_of("Q5\n2 2\n255\n"), true).find("byte 0") != std::string::npos);
  // Header is 11 bytes; four pixels needed, one present.
  auto truncated = bytes_of("P5\n2 2\n255\n");
  truncated.push_back(0);
  const auto msg = format_error(truncated, true);
  CHECK(msg.find("truncated") != std::string::npos);
  CHECK(msg.find("byte 11") != std::string::npos);
  CHECK(format_error(bytes_of("P5\n2 2\n65535\n"), true).find("maxval") != std::string::npos);
  CHECK(format_error(bytes_of("P6\n2 x\n255\n"), false).find("byte") != std::string::npos);
  CHECK_FALSE(format_error(bytes_of("P5\n2"), true).empty());
}

TEST_CASE("pgm/ppm: encode and parse round trip") {
  Rng rng(1);
  GrayImage g{5, 7, {}};
  for (int i = 0; i < 35; ++i) g.px.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
  CHECK(parse_pgm(encode_pgm(g)).px == g.px);
  RgbImage c{3, 4, {}};
  for (int i = 0; i < 36; ++i) c.px.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, 255)));
  const auto back = parse_ppm(encode_ppm(c));
  CHECK(back.px == c.px);
  CHECK(back.h == 3);
  CHECK(back.w == 4);
  // Header is plain ASCII integers.
  const auto enc = encode_pgm(g);
  CHECK(std::string(enc.begin(), enc.begin() + 11) == "P5\n7 5\n255\n");
}

TEST_CASE("save_mask: quantisation and round trip") {
  testing::TempDir dir("io");
  CHECK(quantize(0.5) == 128);
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(-0.2) == 0);
  CHECK(quantize(1.7) == 255);

  save_mask(Plane(3, 3, 0.5), dir / "half.pgm");
  for (auto b : read_pgm(dir / "half.pgm").px) CHECK(b == 128);

  Rng rng(2);
  Plane soft(6, 5);
  for (double& v : soft.v) v = rng.uniform();
  save_mask(soft, dir / "soft.pgm");
  const auto back = gray_to_plane(read_pgm(dir / "soft.pgm"));
  for (std::size_t i = 0; i < soft.size(); ++i) CHECK(back.v[i] == quantize(soft.v[i]) / 255.0);

  Plane bin(6, 5);
  for (double& v : bin.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  TensorD t({1, 1, 6, 5});
  for (std::size_t i = 0; i < bin.size(); ++i) t.mutable_data()[i] = bin.v[i];
  save_mask(t, dir / "bin.pgm");
  const auto raw = read_pgm(dir / "bin.pgm");
  for (auto b : raw.px) CHECK((b == 0 || b == 255));
  CHECK(gray_to_plane(raw).v == bin.v);

  CHECK_THROWS_AS(save_mask(bin, dir / "no/such/dir/x.pgm"), IoError);
  CHECK_THROWS_AS(save_mask(TensorD({1, 2, 3, 3}), dir / "two.pgm"), DimensionError);
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
}

TEST_CASE("load_sample: scaling, binarisation, resize") {
  testing::TempDir dir("load");
  RgbImage img{4, 4, std::vector<std::uint8_t>(48, 51)};
  GrayImage mask{4, 4, {0, 127, 128, 255, 0, 0, 255, 255, 10, 200, 0, 0, 255, 0, 0, 129}};
  write_ppm(img, dir / "i.ppm");
  write_pgm(mask, dir / "m.pgm");
  const auto s = load_sample<double>(dir / "i.ppm", dir / "m.pgm", 0, "x");
  CHECK(s.image.shape() == Shape{1, 3, 4, 4});
  for (double v : s.image.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  const std::vector<double> expect{0, 0, 1, 1, 0, 0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1};
  CHECK(testing::values(s.mask) == expect);
  CHECK(s.id == "x");

  const auto big = load_sample<float>(dir / "i.ppm", dir / "m.pgm", 8);
  CHECK(big.image.shape() == Shape{1, 3, 8, 8});
  for (float v : big.mask.data()) CHECK((v == 0.0f || v == 1.0f));
  // Nearest with floor((i + 0.5)·in/out): output (1,5) reads input (0,2).
  CHECK(big.mask.at(0, 0, 1, 5) == 1.0f);

  write_pgm(GrayImage{4, 5, std::vector<std::uint8_t>(20)}, dir / "m5.pgm");
  CHECK_THROWS_AS(load_sample<float>(dir / "i.ppm", dir / "m5.pgm", 0), DimensionError);
  write_text(dir / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(load_sample<float>(dir / "bad.ppm", dir / "m.pgm", 0), FormatError);
}

TEST_CASE("resize: nearest keeps binarity, bilinear preserves constants") {
  Plane p(3, 3);
  for (int i = 0; i < 9; ++i) p.v[i] = i % 2;
  const auto up = resize_nearest(p, 7, 5);
  for (double v : up.v) CHECK((v == 0.0 || v == 1.0));
  const auto c = resize_plane_bilinear(Plane(3, 4, 0.3), 9, 2);
  for (double v : c.v) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(resize_nearest(p, 3, 3).v == p.v);
}

TEST_CASE("manifest: relative paths, duplicates, missing files") {
  testing::TempDir dir("manifest");
  write_ppm(RgbImage{1, 1, {0, 0, 0}}, dir / "a.ppm");
  write_pgm(GrayImage{1, 1, {0}}, dir / "a.pgm");
  write_text(dir / "m.tsv", "one\ta.ppm\ta.pgm\ntwo\ta.ppm\ta.pgm\n");
  const auto m = read_manifest(dir / "m.tsv", "val");
  REQUIRE(m.entries.size() == 2);
  CHECK(m.split == "val");
  CHECK(m.entries[1].id == "two");
  CHECK(fs::path(m.entries[0].image) == fs::path(dir / "a.ppm"));

  write_text(dir / "dup.tsv", "one\ta.ppm\ta.pgm\none\ta.ppm\ta.pgm\n");
  try {
    read_manifest(dir / "dup.tsv");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("duplicate id one") != std::string::npos);
  }
  write_text(dir / "gone.tsv", "one\tnope.ppm\ta.pgm\n");
  CHECK_THROWS_AS(read_manifest(dir / "gone.tsv"), IoError);
  write_text(dir / "short.tsv", "one\ta.ppm\n");
  CHECK_THROWS_AS(read_manifest(dir / "short.tsv"), FormatError);
  CHECK_THROWS_AS(read_manifest(dir / "absent.tsv"), IoError);

  Manifest out;
  out.entries = {{"z", "a.ppm", "a.pgm"}};
  write_manifest(out, dir / "w.tsv");
  CHECK(read_manifest(dir / "w.tsv").entries[0].id == "z");
}

TEST_CASE("gen_synthetic: byte-identical replay") {
  testing::TempDir a("syn_a"), b("syn_b");
  const SyntheticOptions opt{7, 4, 64, 0.15};
  gen_synthetic(opt, a.str());
  gen_synthetic(opt, b.str());
  for (const char* rel : {"manifest.tsv", "images/syn_0000.ppm", "masks/syn_0003.pgm", "images/syn_0003.ppm"}) {
    INFO(rel);
    CHECK(read_bytes(a / rel) == read_bytes(b / rel));
  }
  const auto m = read_manifest(a / "manifest.tsv");
  CHECK(m.entries.size() == 4);
  CHECK(m.entries[0].id == "syn_0000");

  testing::TempDir c("syn_c");
  gen_synthetic({8, 4, 64, 0.15}, c.str());
  CHECK(read_bytes(a / "images/syn_0000.ppm") != read_bytes(c / "images/syn_0000.ppm"));
}

TEST_CASE("gen_synthetic: argument checks") {
  testing::TempDir d("syn_bad");
  CHECK_THROWS_AS(gen_synthetic({1, 2, 48, 0.15}, d.str()), ConfigError);
  CHECK_THROWS_AS(gen_synthetic({1, 0, 64, 0.15}, d.str()), ConfigError);
  CHECK_THROWS_AS(gen_synthetic({1, 1, 64, 1.5}, d.str()), ConfigError);
}

TEST_CASE("synthetic samples: binary masks, area in [0.05, 0.5], 100 samples") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = synth_sample(seed, 64, 0.15);
    std::size_t on = 0;
    for (auto b : s.mask.px) {
      CHECK((b == 0 || b == 255));
      on += b == 255;
    }
    const double area = static_cast<double>(on) / s.mask.px.size();
    INFO("seed " << seed << " area " << area);
    CHECK(area >= 0.05);
    CHECK(area <= 0.5);
    CHECK(s.image.px.size() == 64u * 64u * 3u);
  }
}

TEST_CASE("synthetic samples: distinct textures are separable by mean colour") {
  // Each pixel goes to whichever class mean colour is nearer.
  double total = 0;
  const int count = 20;
  for (std::uint64_t seed = 0; seed < count; ++seed) {
    const auto s = synth_sample(seed, 64, 0.9);
    std::array<double, 3> fg{}, bg{};
    double nf = 0, nb = 0;
    for (std::size_t i = 0; i < s.mask.px.size(); ++i) {
      auto& acc = s.mask.px[i] ? fg : bg;
      for (int k = 0; k < 3; ++k) acc[k] += s.image.px[i * 3 + k];
      (s.mask.px[i] ? nf : nb) += 1;
    }
    for (int k = 0; k < 3; ++k) {
      fg[k] /= nf;
      bg[k] /= nb;
    }
    double wrong = 0;
    for (std::size_t i = 0; i < s.mask.px.size(); ++i) {
      double df = 0, db = 0;
      for (int k = 0; k < 3; ++k) {
        df += std::pow(s.image.px[i * 3 + k] - fg[k], 2);
        db += std::pow(s.image.px[i * 3 + k] - bg[k], 2);
      }
      wrong += (df < db) != (s.mask.px[i] != 0);
    }
    total += wrong / s.mask.px.size();
  }
  CHECK(total / count < 0.1);
}
