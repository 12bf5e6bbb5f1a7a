#pragma once

#include <cmath>
#include <numbers>

#include "slowwave/core/random.hpp"
#include "slowwave/signal/signal.hpp"

namespace testing {

using namespace slowwave;

/// Left half / right half masks covering the whole frame.
inline std::pair<Mask, Mask> split_masks(Eigen::Index rows, Eigen::Index cols) {
  Mask left = Mask::Constant(rows, cols, false);
  Mask right = Mask::Constant(rows, cols, false);
  left.leftCols(cols / 2).setConstant(true);
  right.rightCols(cols - cols / 2).setConstant(true);
  return {left, right};
}

inline signal::Recording constant_recording(std::ptrdiff_t frames, Eigen::Index rows, Eigen::Index cols, double value,
                                            double fs = 100.0) {
  signal::Recording rec;
  rec.frames = Stack(frames, rows, cols, value);
  rec.fs = fs;
  std::tie(rec.mask_left, rec.mask_right) = split_masks(rows, cols);
  rec.condition = "test";
  return rec;
}

inline Series sinusoid(std::size_t n, double fs, double hz, double amplitude = 1.0, double phase = 0.0) {
  Series s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / fs + phase);
  }
  return s;
}

inline Image random_image(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Image img(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) img(r, c) = scale * rng.normal();
  }
  return img;
}

inline double max_abs(const Series& s) {
  double m = 0.0;
  for (double v : s) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace testing
