#pragma once

#include <string>
#include <vector>

#include "cofinet/layers.hpp"

// Binary parameter file, all integers little-endian:
//
//   bytes 0..4   "COFI1"
//   u32          record count
//   per record:
//     u32        name length L
//     L bytes    name (UTF-8, no terminator)
//     4 × i32    shape n, c, h, w
//     n·c·h·w × f32 (IEEE-754 binary32) values, row-major NCHW
//
// Records appear in parameter registration order.
namespace cofi {

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<CheckpointRecord> read_checkpoint(const std::string& path);
void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<Parameter<T>>& params);

// Copies values into `params`. The file must list exactly the same names and
// shapes in the same order; otherwise FormatError names the first mismatch.
template <typename T>
void load_checkpoint(const std::string& path, std::vector<Parameter<T>>& params);

}  // namespace cofi
