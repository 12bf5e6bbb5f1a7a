#include "slowwave/core/array.hpp"

#include <algorithm>
#include <string>

namespace slowwave {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::BandOutOfRange: return "BandOutOfRange";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::ScheduleOverlap: return "ScheduleOverlap";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::NonFiniteParams: return "NonFiniteParams";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::MissingUpstream: return "MissingUpstream";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

Stack Stack::slice(std::ptrdiff_t first, std::ptrdiff_t last) const {
  if (first < 0 || last > frames_ || first > last) {
    throw Error(ErrorCode::InvalidArgument,
                "frame range [" + std::to_string(first) + ", " + std::to_string(last) + ") out of bounds");
  }
  Stack out(last - first, rows_, cols_);
  std::copy(data_.begin() + first * frame_size(), data_.begin() + last * frame_size(), out.data_.begin());
  return out;
}

std::ptrdiff_t count(const Mask& mask) { return mask.count(); }

void require_shape(std::ptrdiff_t rows, std::ptrdiff_t cols, const Mask& mask, const char* what) {
  if (mask.rows() != rows || mask.cols() != cols) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", got " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
  }
}

}  // namespace slowwave
