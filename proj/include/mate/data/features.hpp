#pragma once

#include <filesystem>

#include "mate/numerics/tensor.hpp"

namespace mate::data {

/// Acoustic frame sequence, frames x dims. Values are stored as float32 on
/// disk and promoted to double in memory.
struct AudioFeatures {
  num::Tensor values;

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t dims() const noexcept { return values.cols(); }
};

/// MATF layout: "MATF", u32 LE rows, u32 LE cols, rows*cols f32 LE row-major.
/// Throws DataError ("not a MATF file", "corrupt feature file").
AudioFeatures read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const AudioFeatures& features);

}  // namespace mate::data
