#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace repalign::npy {

// Two-dimensional float array as stored in a .npy file. Rows are contiguous.
struct Array2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

/// Reads format versions 1.0-3.0 with dtype '<f8' or '<f4' in C order.
/// One-dimensional arrays load as a single row.
Array2D read(const std::filesystem::path& path);

/// Writes format version 1.0, dtype '<f8', C order, shape (rows, cols).
void write(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
           std::span<const double> values);

}  // namespace repalign::npy
