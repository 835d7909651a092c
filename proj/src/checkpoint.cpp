#include "cofinet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cofinet/error.hpp"

namespace cofi {
namespace {

constexpr char kMagic[5] = {'C', 'O', 'F', 'I', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}), path);
  if (r.str(5) != std::string(kMagic, 5)) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected COFI1)");
  }
  const std::uint32_t count = r.u32();
  std::vector<CheckpointRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.str(r.u32());
    const auto n = static_cast<std::int32_t>(r.u32());
    const auto c = static_cast<std::int32_t>(r.u32());
    const auto h = static_cast<std::int32_t>(r.u32());
    const auto w = static_cast<std::int32_t>(r.u32());
    if (n < 1 || c < 1 || h < 1 || w < 1) r.fail("non-positive shape for " + rec.name);
    rec.shape = Shape{n, c, h, w};
    rec.values.resize(rec.shape.numel());
    for (float& v : rec.values) v = std::bit_cast<float>(r.u32());
    records.push_back(std::move(rec));
  }
  if (!r.done()) r.fail("trailing bytes");
  return records;
}

void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::string out(kMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out += rec.name;
    for (int d : {rec.shape.n, rec.shape.c, rec.shape.h, rec.shape.w}) {
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : rec.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint " + path);
}

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<Parameter<T>>& params) {
  std::vector<CheckpointRecord> records;
  records.reserve(params.size());
  for (const auto& p : params) {
    records.push_back(CheckpointRecord{
        p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  write_checkpoint(path, records);
}

template <typename T>
void load_checkpoint(const std::string& path, std::vector<Parameter<T>>& params) {
  const auto records = read_checkpoint(path);
  const std::size_t common = std::min(records.size(), params.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (records[i].name != params[i].name || !(records[i].shape == params[i].tensor.shape())) {
      throw FormatError(path + ": parameter " + std::to_string(i) + " is " + records[i].name + " " +
                        records[i].shape.str() + " but the model expects " + params[i].name + " " +
                        params[i].tensor.shape().str());
    }
  }
  if (records.size() != params.size()) {
    const std::string first =
        records.size() > params.size() ? records[common].name : params[common].name;
    throw FormatError(path + ": checkpoint has " + std::to_string(records.size()) +
                      " parameters, model has " + std::to_string(params.size()) +
                      " (first unmatched: " + first + ")");
  }
  for (std::size_t i = 0; i < common; ++i) {
    auto dst = params[i].tensor.mutable_data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(records[i].values[j]);
  }
}

template void save_checkpoint(const std::string&, const std::vector<Parameter<float>>&);
template void save_checkpoint(const std::string&, const std::vector<Parameter<double>>&);
template void load_checkpoint(const std::string&, std::vector<Parameter<float>>&);
template void load_checkpoint(const std::string&, std::vector<Parameter<double>>&);

}  // namespace cofi
