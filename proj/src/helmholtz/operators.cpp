#include <string>

#include "slowwave/helmholtz/helmholtz.hpp"

namespace slowwave::helmholtz {
namespace {

Image directional_diff(const Image& values, const Mask& mask, int dr, int dc) {
  if (!same_shape(values, mask)) throw Error(ErrorCode::ShapeMismatch, "difference operand and mask differ");
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  auto inside = [&](Eigen::Index r, Eigen::Index c) {
    return r >= 0 && r < rows && c >= 0 && c < cols && mask(r, c);
  };
  Image out = Image::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      const bool fwd = inside(r + dr, c + dc);
      const bool bwd = inside(r - dr, c - dc);
      if (fwd && bwd) {
        out(r, c) = 0.5 * (values(r + dr, c + dc) - values(r - dr, c - dc));
      } else if (fwd) {
        out(r, c) = values(r + dr, c + dc) - values(r, c);
      } else if (bwd) {
        out(r, c) = values(r, c) - values(r - dr, c - dc);
      }
    }
  }
  return out;
}

}  // namespace

Image diff_rows(const Image& values, const Mask& mask) { return directional_diff(values, mask, 1, 0); }
Image diff_cols(const Image& values, const Mask& mask) { return directional_diff(values, mask, 0, 1); }

Image divergence(const FlowField& f) { return diff_rows(f.u, f.valid) + diff_cols(f.v, f.valid); }

Image curl(const FlowField& f) { return diff_rows(f.v, f.valid) - diff_cols(f.u, f.valid); }

FlowField gradient(const Image& phi, const Mask& mask) {
  return FlowField{diff_rows(phi, mask), diff_cols(phi, mask), mask};
}

FlowField rotated_gradient(const Image& psi, const Mask& mask) {
  return FlowField{diff_cols(psi, mask), -diff_rows(psi, mask), mask};
}

std::pair<Image, Image> sources_sinks(const Image& div_map) {
  return {div_map.max(0.0), div_map.min(0.0)};
}

FlowField add(const FlowField& a, const FlowField& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "field shapes differ");
  return FlowField{a.u + b.u, a.v + b.v, a.valid || b.valid};
}

FlowField subtract(const FlowField& a, const FlowField& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "field shapes differ");
  return FlowField{a.u - b.u, a.v - b.v, a.valid || b.valid};
}

}  // namespace slowwave::helmholtz
