#include "slowwave/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "slowwave/core/random.hpp"

namespace slowwave::synth {
namespace {

Vec2 normalized(Vec2 d) {
  const double n = std::hypot(d[0], d[1]);
  if (!(n > 0.0)) return {0.0, 0.0};
  return {d[0] / n, d[1] / n};
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Wave geometry shared by the trend-plus-source stimulus and the recording events: a logistic front
// moving along `dir` from the image edge it points away from.
struct Front {
  Vec2 dir;
  double s_min = 0.0;
  double extent = 0.0;

  Front(Vec2 direction, Eigen::Index rows, Eigen::Index cols) : dir(normalized(direction)) {
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (const double r : {0.0, static_cast<double>(rows - 1)}) {
      for (const double c : {0.0, static_cast<double>(cols - 1)}) {
        const double s = r * dir[0] + c * dir[1];
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    s_min = lo;
    extent = hi - lo;
  }

  /// Distance of (r, c) from the entry edge, measured along dir.
  double depth(double r, double c) const { return r * dir[0] + c * dir[1] - s_min; }
};

}  // namespace

BlobStimulus make_translating_blob(const BlobSpec& spec) {
  if (std::hypot(spec.velocity[0], spec.velocity[1]) > 2.0) {
    throw Error(ErrorCode::InvalidArgument, "blob velocity exceeds 2 px/frame");
  }
  if (!(spec.sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "blob sigma must be positive");
  const Vec2 start = spec.start[0] < 0.0 || spec.start[1] < 0.0
                         ? Vec2{0.5 * static_cast<double>(spec.rows - 1), 0.5 * static_cast<double>(spec.cols - 1)}
                         : spec.start;
  BlobStimulus out{Stack(spec.n_frames, spec.rows, spec.cols), spec.velocity, start};
  const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::ptrdiff_t t = 0; t < spec.n_frames; ++t) {
    const double cr = start[0] + spec.velocity[0] * static_cast<double>(t);
    const double cc = start[1] + spec.velocity[1] * static_cast<double>(t);
    for (Eigen::Index r = 0; r < spec.rows; ++r) {
      for (Eigen::Index c = 0; c < spec.cols; ++c) {
        const double dr = static_cast<double>(r) - cr;
        const double dc = static_cast<double>(c) - cc;
        out.frames(t, r, c) = spec.baseline + spec.amplitude * std::exp(-(dr * dr + dc * dc) * inv2s2);
      }
    }
  }
  return out;
}

TrendSourceStimulus make_trend_source_stimulus(const TrendSourceSpec& spec, const Mask* mask) {
  const auto sr = static_cast<Eigen::Index>(std::lround(spec.source_center[0]));
  const auto sc = static_cast<Eigen::Index>(std::lround(spec.source_center[1]));
  const bool on_image = sr >= 0 && sr < spec.rows && sc >= 0 && sc < spec.cols;
  if (!on_image || (mask != nullptr && !(*mask)(sr, sc))) {
    throw Error(ErrorCode::SupportViolation, "source centre outside the mask");
  }
  if (!(spec.front_width > 0.0) || !(spec.source_sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "front and source widths must be positive");
  }

  const Front front(spec.trend_direction, spec.rows, spec.cols);
  TrendSourceStimulus out;
  out.frames = Stack(spec.n_frames, spec.rows, spec.cols);
  const bool drifting = spec.front_speed != 0.0 && spec.front_amplitude != 0.0;
  out.drift_direction = drifting ? front.dir : Vec2{0.0, 0.0};
  out.source_center = spec.source_center;
  out.has_source = spec.source_rate != 0.0;

  const double start = 0.25 * front.extent;
  const double inv2s2 = 1.0 / (2.0 * spec.source_sigma * spec.source_sigma);
  for (std::ptrdiff_t t = 0; t < spec.n_frames; ++t) {
    const double position = start + spec.front_speed * static_cast<double>(t);
    const double focal = spec.source_rate * static_cast<double>(t + 1);
    for (Eigen::Index r = 0; r < spec.rows; ++r) {
      for (Eigen::Index c = 0; c < spec.cols; ++c) {
        const double depth = front.depth(static_cast<double>(r), static_cast<double>(c));
        const double dr = static_cast<double>(r) - spec.source_center[0];
        const double dc = static_cast<double>(c) - spec.source_center[1];
        out.frames(t, r, c) = spec.baseline +
                              spec.front_amplitude * logistic((position - depth) / spec.front_width) +
                              focal * std::exp(-(dr * dr + dc * dc) * inv2s2);
      }
    }
  }
  return out;
}

double bump(const PotentialSpec& spec, double row, double col) {
  const double d2 = ((row - spec.center[0]) * (row - spec.center[0]) + (col - spec.center[1]) * (col - spec.center[1])) /
                    (spec.radius * spec.radius);
  if (d2 >= 1.0) return 0.0;
  return spec.amplitude * std::exp(1.0 - 1.0 / (1.0 - d2));
}

ManufacturedField make_manufactured_field(FieldKind kind, const std::vector<PotentialSpec>& specs, const Mask& mask) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  auto potential = [&](double r, double c) {
    double s = 0.0;
    for (const auto& spec : specs) s += bump(spec, r, c);
    return s;
  };

  ManufacturedField out{flow::FlowField::zeros(mask), Image::Zero(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out.potential(r, c) = potential(static_cast<double>(r), static_cast<double>(c));
  }

  // Support check: no mass within 2 px (Chebyshev) of any non-mask pixel or the image edge.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (std::abs(out.potential(r, c)) <= 1e-12) continue;
      for (Eigen::Index dr = -2; dr <= 2; ++dr) {
        for (Eigen::Index dc = -2; dc <= 2; ++dc) {
          const Eigen::Index rr = r + dr;
          const Eigen::Index cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols || !mask(rr, cc)) {
            throw Error(ErrorCode::SupportViolation, "potential is non-zero within 2 px of the mask boundary at (" +
                                                         std::to_string(r) + ", " + std::to_string(c) + ")");
          }
        }
      }
    }
  }

  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      const double rd = static_cast<double>(r);
      const double cd = static_cast<double>(c);
      const double d_row = 0.5 * (potential(rd + 1.0, cd) - potential(rd - 1.0, cd));
      const double d_col = 0.5 * (potential(rd, cd + 1.0) - potential(rd, cd - 1.0));
      if (kind == FieldKind::Gradient) {
        out.field.u(r, c) = d_row;
        out.field.v(r, c) = d_col;
      } else {
        out.field.u(r, c) = d_col;
        out.field.v(r, c) = -d_row;
      }
    }
  }
  return out;
}

ManufacturedField make_manufactured_field(FieldKind kind, const PotentialSpec& spec, const Mask& mask) {
  return make_manufactured_field(kind, std::vector<PotentialSpec>{spec}, mask);
}

std::pair<Mask, Mask> hemisphere_masks(Eigen::Index rows, Eigen::Index cols) {
  Mask left = Mask::Constant(rows, cols, false);
  Mask right = Mask::Constant(rows, cols, false);
  const double cr = 0.5 * static_cast<double>(rows - 1);
  const double mid = 0.5 * static_cast<double>(cols - 1);
  const double ry = 0.46 * static_cast<double>(rows);
  const double rx = 0.23 * static_cast<double>(cols);
  const double gap = 1.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double y = (static_cast<double>(r) - cr) / ry;
      const double cd = static_cast<double>(c);
      const double xl = (cd - (mid - gap - rx)) / rx;
      const double xr = (cd - (mid + gap + rx)) / rx;
      if (cd < mid - gap && xl * xl + y * y <= 1.0) left(r, c) = true;
      if (cd > mid + gap && xr * xr + y * y <= 1.0) right(r, c) = true;
    }
  }
  return {left, right};
}

std::pair<signal::Recording, RecordingTruth> make_recording(const RecordingSpec& spec) {
  if (!(spec.fs > 0.0) || !(spec.duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "fs and duration must be positive");
  const auto n_frames = static_cast<std::ptrdiff_t>(std::lround(spec.duration_s * spec.fs));
  auto [left, right] = hemisphere_masks(spec.rows, spec.cols);
  const Mask both = left || right;
  const double n_mask = static_cast<double>(both.count());

  RecordingTruth truth;
  for (const auto& ev : spec.events) {
    const auto on = static_cast<std::ptrdiff_t>(std::lround(ev.onset_s * spec.fs));
    const auto off = on + static_cast<std::ptrdiff_t>(std::lround(ev.duration_s * spec.fs));
    if (on < 0 || off > n_frames || off - on < 2) throw Error(ErrorCode::ScheduleOverlap, "event window outside the recording");
    for (const auto& prev : truth.windows) {
      if (on < prev.offset && prev.onset < off) throw Error(ErrorCode::ScheduleOverlap, "scheduled events overlap");
    }
    truth.windows.push_back({on, off});
    truth.directions.push_back(normalized(ev.direction));
  }

  // Smooth vignetting of the resting fluorescence.
  Image base(spec.rows, spec.cols);
  const double cr = 0.5 * static_cast<double>(spec.rows - 1);
  const double cc = 0.5 * static_cast<double>(spec.cols - 1);
  const double scale2 = static_cast<double>(spec.rows * spec.rows + spec.cols * spec.cols);
  for (Eigen::Index r = 0; r < spec.rows; ++r) {
    for (Eigen::Index c = 0; c < spec.cols; ++c) {
      const double d2 = (static_cast<double>(r) - cr) * (static_cast<double>(r) - cr) +
                        (static_cast<double>(c) - cc) * (static_cast<double>(c) - cc);
      base(r, c) = spec.baseline * (0.8 + 0.2 * std::exp(-2.0 * d2 / scale2));
    }
  }

  // Injected dF/F, zero outside the hemispheres.
  Stack dff(n_frames, spec.rows, spec.cols);
  const double default_src_r = cr;
  const double default_src_c = 0.5 * cc;
  for (std::size_t e = 0; e < spec.events.size(); ++e) {
    const auto& ev = spec.events[e];
    const auto [on, off] = truth.windows[e];
    const auto length = off - on;
    const Vec2 src = ev.source_center[0] < 0.0 || ev.source_center[1] < 0.0 ? Vec2{default_src_r, default_src_c}
                                                                             : ev.source_center;
    truth.sources.push_back(src);
    const Front front(ev.direction, spec.rows, spec.cols);
    const double speed = front.extent / static_cast<double>(length);
    const double width = std::max(2.0, 0.08 * front.extent);
    const double sigma = std::max(2.0, 0.1 * static_cast<double>(std::min(spec.rows, spec.cols)));
    const double ramp = 0.25 * static_cast<double>(length);
    double peak = 0.0;
    for (std::ptrdiff_t tau = 0; tau < length; ++tau) {
      const double td = static_cast<double>(tau);
      // Step onset at 0.6, linear rise to 1, plateau, linear fall back to 0.6.
      const double envelope = 0.6 + 0.4 * std::min({1.0, td / ramp, (static_cast<double>(length - 1) - td) / ramp});
      const double position = 0.2 * front.extent + speed * td;
      const double growth = (td + 1.0) / static_cast<double>(length);
      Image pattern(spec.rows, spec.cols);
      for (Eigen::Index r = 0; r < spec.rows; ++r) {
        for (Eigen::Index c = 0; c < spec.cols; ++c) {
          const double depth = front.depth(static_cast<double>(r), static_cast<double>(c));
          const double dr = static_cast<double>(r) - src[0];
          const double dc = static_cast<double>(c) - src[1];
          pattern(r, c) = 0.05 + logistic((position - depth) / width) +
                          2.0 * growth * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
      }
      const double mean = both.select(pattern, 0.0).sum() / n_mask;
      const double level = ev.amplitude * envelope;
      dff.frame(on + tau) = both.select(pattern * (level / mean), 0.0);
      peak = std::max(peak, level);
    }
    truth.peak_amplitudes.push_back(peak);
  }

  Rng rng(spec.seed);
  signal::Recording rec;
  rec.fs = spec.fs;
  rec.mask_left = left;
  rec.mask_right = right;
  rec.condition = spec.condition;
  rec.frames = Stack(n_frames, spec.rows, spec.cols);
  for (std::ptrdiff_t t = 0; t < n_frames; ++t) {
    const double beat =
        spec.heartbeat_amplitude * std::sin(2.0 * std::numbers::pi * spec.heartbeat_hz * static_cast<double>(t) / spec.fs);
    for (Eigen::Index r = 0; r < spec.rows; ++r) {
      for (Eigen::Index c = 0; c < spec.cols; ++c) {
        const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0;
        rec.frames(t, r, c) = base(r, c) * (1.0 + dff(t, r, c) + beat + noise);
      }
    }
  }
  if (spec.with_aux) {
    Series aux(static_cast<std::size_t>(n_frames));
    for (std::ptrdiff_t t = 0; t < n_frames; ++t) {
      aux[static_cast<std::size_t>(t)] =
          std::sin(2.0 * std::numbers::pi * spec.aux_hz * static_cast<double>(t) / spec.fs) + 0.1 * rng.normal();
    }
    rec.aux = std::move(aux);
  }
  return {std::move(rec), std::move(truth)};
}

}  // namespace slowwave::synth
