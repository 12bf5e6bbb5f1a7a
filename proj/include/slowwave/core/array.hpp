#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

#include "slowwave/core/error.hpp"

namespace slowwave {

/// 2-D image indexed (row, col). Row-major so a frame of a Stack maps onto it directly.
using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImageMap = Eigen::Map<Image>;
using ConstImageMap = Eigen::Map<const Image>;

using Series = std::vector<double>;

/// Time x rows x cols block of doubles, frames stored contiguously.
class Stack {
 public:
  Stack() = default;
  Stack(std::ptrdiff_t frames, std::ptrdiff_t rows, std::ptrdiff_t cols, double fill = 0.0)
      : frames_(frames), rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(frames * rows * cols), fill) {
    if (frames < 0 || rows < 0 || cols < 0) {
      throw Error(ErrorCode::InvalidArgument, "negative stack extent");
    }
  }

  std::ptrdiff_t frames() const noexcept { return frames_; }
  std::ptrdiff_t rows() const noexcept { return rows_; }
  std::ptrdiff_t cols() const noexcept { return cols_; }
  std::ptrdiff_t frame_size() const noexcept { return rows_ * cols_; }
  bool empty() const noexcept { return data_.empty(); }

  ImageMap frame(std::ptrdiff_t t) { return ImageMap(data_.data() + t * frame_size(), rows_, cols_); }
  ConstImageMap frame(std::ptrdiff_t t) const {
    return ConstImageMap(data_.data() + t * frame_size(), rows_, cols_);
  }

  double& operator()(std::ptrdiff_t t, std::ptrdiff_t r, std::ptrdiff_t c) {
    return data_[static_cast<std::size_t>((t * rows_ + r) * cols_ + c)];
  }
  double operator()(std::ptrdiff_t t, std::ptrdiff_t r, std::ptrdiff_t c) const {
    return data_[static_cast<std::size_t>((t * rows_ + r) * cols_ + c)];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  /// Frames [first, last) as a new stack.
  Stack slice(std::ptrdiff_t first, std::ptrdiff_t last) const;

  bool same_shape(const Stack& other) const noexcept {
    return frames_ == other.frames_ && rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::ptrdiff_t frames_ = 0;
  std::ptrdiff_t rows_ = 0;
  std::ptrdiff_t cols_ = 0;
  std::vector<double> data_;
};

inline bool same_shape(const Image& a, const Image& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}
inline bool same_shape(const Image& a, const Mask& m) {
  return a.rows() == m.rows() && a.cols() == m.cols();
}

std::ptrdiff_t count(const Mask& mask);

/// Throws ShapeMismatch with `what` when the extents differ.
void require_shape(std::ptrdiff_t rows, std::ptrdiff_t cols, const Mask& mask, const char* what);

}  // namespace slowwave
