#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slowwave {

enum class ErrorCode {
  ShapeMismatch,
  ZeroBaseline,
  BandOutOfRange,
  EmptyMask,
  NonFiniteInput,
  NoConvergence,
  SupportViolation,
  ScheduleOverlap,
  DivergedLoss,
  NonFiniteParams,
  InsufficientSamples,
  MissingUpstream,
  InvalidArgument,
  Io,
  Format,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace slowwave
