#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "slowwave/core/array.hpp"
#include "slowwave/flow/flow.hpp"
#include "slowwave/signal/signal.hpp"

namespace slowwave::synth {

/// (row, col) pair.
using Vec2 = std::array<double, 2>;

struct BlobSpec {
  Eigen::Index rows = 64;
  Eigen::Index cols = 64;
  std::ptrdiff_t n_frames = 10;
  Vec2 velocity{0.0, 0.0};  // px/frame, (row, col)
  double sigma = 6.0;
  double amplitude = 10.0;  // peak gradient near 1, the scale of the default flow alpha
  double baseline = 0.0;
  Vec2 start{-1.0, -1.0};   // blob centre in frame 0; negative means image centre
};

struct BlobStimulus {
  Stack frames;
  Vec2 velocity;
  Vec2 start;
};

/// Gaussian blob translated by analytic evaluation. |velocity| must be <= 2 px/frame.
BlobStimulus make_translating_blob(const BlobSpec& spec);

struct TrendSourceSpec {
  Eigen::Index rows = 64;
  Eigen::Index cols = 64;
  std::ptrdiff_t n_frames = 8;
  Vec2 trend_direction{1.0, 0.0};  // drift direction, normalized internally; default image-down
  Vec2 source_center{40.0, 40.0};
  double front_speed = 0.5;       // px/frame of the global wave front
  double front_amplitude = 1.0;
  double front_width = 8.0;       // px, logistic width of the front
  double source_rate = 0.25;      // focal amplitude added per frame
  double source_sigma = 4.0;
  double baseline = 0.0;
};

struct TrendSourceStimulus {
  Stack frames;
  Vec2 drift_direction;  // unit vector, zero when the front is static
  Vec2 source_center;
  bool has_source = false;
};

/// Global front entering from the edge opposite trend_direction plus a focal spot of rising
/// intensity. Throws SupportViolation when the source centre lies outside `mask`.
TrendSourceStimulus make_trend_source_stimulus(const TrendSourceSpec& spec, const Mask* mask = nullptr);

enum class FieldKind { Gradient, Rotational };

/// Compact bump A * exp(1 - 1/(1 - (d/R)^2)) for d < R, zero elsewhere.
struct PotentialSpec {
  Vec2 center{32.0, 32.0};
  double radius = 12.0;
  double amplitude = 1.0;
};

double bump(const PotentialSpec& spec, double row, double col);

struct ManufacturedField {
  flow::FlowField field;
  Image potential;
};

/// field = grad(phi*) or J grad(psi*) by central differences of the analytic potential.
/// Throws SupportViolation when the potential exceeds 1e-12 within 2 px of the mask boundary.
ManufacturedField make_manufactured_field(FieldKind kind, const PotentialSpec& spec, const Mask& mask);
/// Sum of bumps.
ManufacturedField make_manufactured_field(FieldKind kind, const std::vector<PotentialSpec>& specs, const Mask& mask);

/// Two elliptical hemispheres separated by a gap at the midline column.
std::pair<Mask, Mask> hemisphere_masks(Eigen::Index rows, Eigen::Index cols);

struct EventSpec {
  double onset_s = 0.0;
  double duration_s = 1.0;
  double amplitude = 0.1;       // peak of the spatial-mean dF/F
  Vec2 direction{1.0, 0.0};     // wave front direction (row, col)
  Vec2 source_center{-1.0, -1.0};  // negative means left-hemisphere centre
};

struct RecordingSpec {
  Eigen::Index rows = 48;
  Eigen::Index cols = 48;
  double fs = 100.0;
  double duration_s = 30.0;
  double baseline = 1000.0;
  std::vector<EventSpec> events;
  double noise_sigma = 0.0;          // i.i.d. Gaussian, dF/F units
  double heartbeat_amplitude = 0.0;  // dF/F units
  double heartbeat_hz = 15.0;
  bool with_aux = false;
  double aux_hz = 1.3;               // breathing reference frequency
  std::string condition = "synthetic";
  std::uint64_t seed = 0;
};

struct RecordingTruth {
  std::vector<signal::Interval> windows;
  std::vector<double> peak_amplitudes;  // exact peak of the injected spatial-mean dF/F
  std::vector<Vec2> directions;
  std::vector<Vec2> sources;
};

/// Baseline fluorescence with scheduled waves, optional noise and heartbeat.
/// Throws ScheduleOverlap when event windows overlap or leave the recording.
std::pair<signal::Recording, RecordingTruth> make_recording(const RecordingSpec& spec);

}  // namespace slowwave::synth
