#include "cofinet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "cofinet/error.hpp"
#include "cofinet/ops.hpp"

namespace cofi {
namespace fs = std::filesystem;

namespace {

struct Header {
  int w = 0;
  int h = 0;
  std::size_t data_offset = 0;
};

bool is_space(std::uint8_t b) { return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  void magic(char kind) {
    if (b_.size() < 2 || b_[0] != 'P' || b_[1] != static_cast<std::uint8_t>(kind)) {
      throw FormatError(std::string("bad magic at byte 0: expected P") + kind);
    }
    pos_ = 2;
  }

  int integer(const char* what) {
    const std::size_t start = pos_;
    skip_space();
    if (pos_ == start) fail(std::string("expected whitespace before ") + what);
    if (pos_ >= b_.size()) fail(std::string("truncated header, missing ") + what);
    if (b_[pos_] < '0' || b_[pos_] > '9') fail(std::string("expected ") + what);
    long long v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1 << 24)) fail(std::string(what) + " too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !is_space(b_[pos_])) fail("expected single whitespace after maxval");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(msg + " at byte " + std::to_string(pos_));
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (is_space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

Header parse_header(const std::vector<std::uint8_t>& bytes, char kind, int channels) {
  HeaderReader r(bytes);
  r.magic(kind);
  Header hd;
  hd.w = r.integer("width");
  if (hd.w <= 0) r.fail("width must be positive");
  hd.h = r.integer("height");
  if (hd.h <= 0) r.fail("height must be positive");
  const std::size_t maxval_pos = r.pos();
  const int maxval = r.integer("maxval");
  if (maxval != 255) {
    throw FormatError("unsupported maxval " + std::to_string(maxval) + " at byte " + std::to_string(maxval_pos));
  }
  hd.data_offset = r.raster_start();
  const std::size_t need = static_cast<std::size_t>(hd.w) * hd.h * channels;
  if (bytes.size() < hd.data_offset + need) {
    throw FormatError("truncated raster: expected " + std::to_string(need) + " bytes from byte " +
                      std::to_string(hd.data_offset) + ", file ends at byte " + std::to_string(bytes.size()));
  }
  return hd;
}

std::vector<std::uint8_t> encode(char kind, int w, int h, const std::vector<std::uint8_t>& px) {
  const std::string head = std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

template <typename T>
Tensor<T> plane_tensor(const Plane& p) {
  return Tensor<T>(Shape{1, 1, p.h, p.w}, std::vector<T>(p.v.begin(), p.v.end()));
}

}  // namespace

GrayImage parse_pgm(const std::vector<std::uint8_t>& bytes) {
  const Header hd = parse_header(bytes, '5', 1);
  GrayImage img{hd.h, hd.w, {}};
  const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(hd.data_offset);
  img.px.assign(begin, begin + static_cast<std::ptrdiff_t>(hd.w) * hd.h);
  return img;
}

RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes) {
  const Header hd = parse_header(bytes, '6', 3);
  RgbImage img{hd.h, hd.w, {}};
  const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(hd.data_offset);
  img.px.assign(begin, begin + static_cast<std::ptrdiff_t>(hd.w) * hd.h * 3);
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  if (img.px.size() != static_cast<std::size_t>(img.w) * img.h) throw DimensionError("encode_pgm: pixel count");
  return encode('5', img.w, img.h, img.px);
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  if (img.px.size() != static_cast<std::size_t>(img.w) * img.h * 3) throw DimensionError("encode_ppm: pixel count");
  return encode('6', img.w, img.h, img.px);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

GrayImage read_pgm(const std::string& path) {
  try {
    return parse_pgm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

RgbImage read_ppm(const std::string& path) {
  try {
    return parse_ppm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_pgm(const GrayImage& img, const std::string& path) { write_bytes(encode_pgm(img), path); }
void write_ppm(const RgbImage& img, const std::string& path) { write_bytes(encode_ppm(img), path); }

Plane gray_to_plane(const GrayImage& img) {
  Plane p(img.h, img.w);
  for (std::size_t i = 0; i < p.size(); ++i) p.v[i] = img.px[i] / 255.0;
  return p;
}

std::uint8_t quantize(double v) {
  const double q = std::floor(255.0 * v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

GrayImage plane_to_gray(const Plane& p) {
  GrayImage img{p.h, p.w, std::vector<std::uint8_t>(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i) img.px[i] = quantize(p.v[i]);
  return img;
}

template <typename T>
Tensor<T> rgb_to_tensor(const RgbImage& img) {
  Tensor<T> t(Shape{1, 3, img.h, img.w});
  auto d = t.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) d[c * plane + i] = static_cast<T>(img.px[i * 3 + c] / 255.0);
  }
  return t;
}

Plane resize_nearest(const Plane& p, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw DimensionError("resize_nearest: non-positive output size");
  Plane out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const int si = std::min(p.h - 1, static_cast<int>((i + 0.5) * p.h / out_h));
    for (int j = 0; j < out_w; ++j) {
      const int sj = std::min(p.w - 1, static_cast<int>((j + 0.5) * p.w / out_w));
      out(i, j) = p(si, sj);
    }
  }
  return out;
}

Plane resize_plane_bilinear(const Plane& p, int out_h, int out_w) {
  if (p.h == out_h && p.w == out_w) return p;
  NoGradGuard guard;
  const auto r = resize_bilinear(plane_tensor<double>(p), out_h, out_w);
  Plane out(out_h, out_w);
  std::copy(r.data().begin(), r.data().end(), out.v.begin());
  return out;
}

template <typename T>
Sample<T> load_sample(const std::string& image_path, const std::string& mask_path, int size, std::string id) {
  const RgbImage rgb = read_ppm(image_path);
  const GrayImage gray = read_pgm(mask_path);
  if (rgb.h != gray.h || rgb.w != gray.w) {
    throw DimensionError("load_sample: image " + image_path + " is " + std::to_string(rgb.h) + "x" +
                         std::to_string(rgb.w) + " but mask " + mask_path + " is " + std::to_string(gray.h) +
                         "x" + std::to_string(gray.w));
  }
  Plane mask(gray.h, gray.w);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.v[i] = gray.px[i] >= 128 ? 1.0 : 0.0;

  Sample<T> s;
  s.id = id.empty() ? fs::path(image_path).stem().string() : std::move(id);
  NoGradGuard guard;
  auto image = rgb_to_tensor<double>(rgb);
  if (size > 0 && (rgb.h != size || rgb.w != size)) {
    image = resize_bilinear(image, size, size);
    mask = resize_nearest(mask, size, size);
  }
  s.image = image.template cast<T>();
  s.mask = plane_tensor<T>(mask);
  return s;
}

template <typename T>
void save_mask(const Tensor<T>& mask, const std::string& path) {
  const Shape& s = mask.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError("save_mask: expected (1,1,H,W), got " + s.str());
  Plane p(s.h, s.w);
  std::copy(mask.data().begin(), mask.data().end(), p.v.begin());
  save_mask(p, path);
}

void save_mask(const Plane& mask, const std::string& path) { write_pgm(plane_to_gray(mask), path); }

Manifest read_manifest(const std::string& path, const std::string& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  Manifest m;
  m.split = split;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    if (!ids.insert(fields[0]).second) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate id " + fields[0]);
    }
    auto resolve = [&](const std::string& p) {
      const fs::path fp(p);
      return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
    };
    ManifestEntry e{fields[0], resolve(fields[1]), resolve(fields[2])};
    for (const auto* p : {&e.image, &e.mask}) {
      if (!fs::exists(*p)) throw IoError(path + ":" + std::to_string(line_no) + ": missing file " + *p);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::string text;
  for (const auto& e : m.entries) text += e.id + "\t" + e.image + "\t" + e.mask + "\n";
  write_bytes(std::vector<std::uint8_t>(text.begin(), text.end()), path);
}

template Tensor<float> rgb_to_tensor<float>(const RgbImage&);
template Tensor<double> rgb_to_tensor<double>(const RgbImage&);
template Sample<float> load_sample<float>(const std::string&, const std::string&, int, std::string);
template Sample<double> load_sample<double>(const std::string&, const std::string&, int, std::string);
template void save_mask<float>(const Tensor<float>&, const std::string&);
template void save_mask<double>(const Tensor<double>&, const std::string&);

}  // namespace cofi
