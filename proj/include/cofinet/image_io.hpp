#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cofinet/metrics.hpp"
#include "cofinet/tensor.hpp"

namespace cofi {

// 8-bit rasters. Rgb stores interleaved r,g,b per pixel.
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> px;
};

struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> px;
};

// Binary P5/P6 with maxval 255. Malformed input throws FormatError carrying
// the byte offset of the problem.
GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes);
RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

GrayImage read_pgm(const std::string& path);
RgbImage read_ppm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);

std::vector<std::uint8_t> read_bytes(const std::string& path);
void write_bytes(const std::vector<std::uint8_t>& bytes, const std::string& path);

// px / 255.
Plane gray_to_plane(const GrayImage& img);
// floor(255·v + 0.5), clamped to [0,255].
std::uint8_t quantize(double v);
GrayImage plane_to_gray(const Plane& p);

// (1,3,H,W) in [0,1].
template <typename T>
Tensor<T> rgb_to_tensor(const RgbImage& img);

// Nearest-neighbour with source index floor((i + 0.5)·in/out).
Plane resize_nearest(const Plane& p, int out_h, int out_w);
Plane resize_plane_bilinear(const Plane& p, int out_h, int out_w);

template <typename T>
struct Sample {
  Tensor<T> image;  // (1,3,S,S)
  Tensor<T> mask;   // (1,1,S,S), values in {0,1}
  std::string id;
};

// Mask binarised at 0.5 on the 8-bit scale; image resized bilinearly and
// mask by nearest neighbour to `size` (<= 0 keeps the native size).
template <typename T>
Sample<T> load_sample(const std::string& image_path, const std::string& mask_path, int size,
                      std::string id = {});

// Tensor of shape (1,1,H,W) or a plane, written as P5.
template <typename T>
void save_mask(const Tensor<T>& mask, const std::string& path);
void save_mask(const Plane& mask, const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string image;
  std::string mask;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string split = "train";
};

// "id<TAB>image<TAB>mask" per line; relative paths resolve against the
// manifest's directory. Duplicate ids and missing files are errors.
Manifest read_manifest(const std::string& path, const std::string& split = "train");
// Writes paths as given.
void write_manifest(const Manifest& m, const std::string& path);

struct SyntheticOptions {
  std::uint64_t seed = 0;
  int n = 8;
  int size = 64;
  // Foreground/background dissimilarity; small values camouflage the blob.
  double delta = 0.15;
};

struct SyntheticSample {
  RgbImage image;
  GrayImage mask;
};

SyntheticSample synth_sample(std::uint64_t seed, int size, double delta);

// Writes images/<id>.ppm, masks/<id>.pgm and manifest.tsv under out_dir.
Manifest gen_synthetic(const SyntheticOptions& opt, const std::string& out_dir);

}  // namespace cofi
