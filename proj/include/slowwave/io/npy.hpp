#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "slowwave/core/array.hpp"

namespace slowwave::io {

namespace fs = std::filesystem;

enum class Dtype { F8, F4, U2, B1 };

/// Array of any supported dtype, widened to double.
struct NpyArray {
  std::vector<std::size_t> shape;
  Dtype dtype = Dtype::F8;
  std::vector<double> data;  // C order

  std::size_t size() const;
};

/// NPY v1.0, little-endian, C order.
NpyArray read_npy(const fs::path& path);
void write_npy(const fs::path& path, const std::vector<std::size_t>& shape, std::span<const double> data,
               Dtype dtype = Dtype::F8);

void save(const fs::path& path, const Image& img);
void save(const fs::path& path, const Mask& mask);
void save(const fs::path& path, const Stack& stack);
void save(const fs::path& path, const Series& series);

Stack load_stack(const fs::path& path);
Image load_image(const fs::path& path);
Mask load_mask(const fs::path& path);
Series load_series(const fs::path& path);

/// Raw little-endian samples described by a JSON sidecar {"shape": [T, H, W], "dtype": "<f4", "fs": ...}.
/// The sidecar may name the data file under "file"; otherwise it is the sidecar path minus ".json".
struct RawStack {
  Stack frames;
  double fs = 0.0;
};
RawStack load_raw_stack(const fs::path& sidecar);

}  // namespace slowwave::io
