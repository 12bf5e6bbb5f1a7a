#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slowwave/core/array.hpp"

namespace slowwave::signal {

/// A widefield recording: raw fluorescence frames with hemisphere masks.
struct Recording {
  Stack frames;  // time x rows x cols, non-negative intensity
  double fs = 0.0;
  Mask mask_left;
  Mask mask_right;
  std::string condition;
  std::optional<Series> aux;  // breathing / hemodynamic reference, one sample per frame

  /// Throws ShapeMismatch / InvalidArgument when an invariant is broken.
  void validate() const;
  Mask union_mask() const { return mask_left || mask_right; }
};

struct Event {
  std::ptrdiff_t onset_frame = 0;
  std::ptrdiff_t offset_frame = 0;  // exclusive
  Stack dffw;                       // per-pixel change relative to the event baseline
  Image baseline;
  Series mean_trace;
  double duration_s = 0.0;
  double peak_amplitude = 0.0;
};

struct BaselineSpec {
  enum class Kind { Percentile, Mean };
  Kind kind = Kind::Percentile;
  double percentile = 10.0;
};

struct BandstopConfig {
  double low_hz = 10.0;
  double high_hz = 20.0;
  double transition_hz = 0.5;
  bool per_pixel = false;
};

struct DetrendSpec {
  enum class Kind { Linear, MovingAverage };
  Kind kind = Kind::Linear;
  double window_s = 2.0;  // MovingAverage only
};

struct SegmentConfig {
  double k_on = 1.0;
  double k_off = 0.5;
  double min_duration_s = 0.1;
  double merge_gap_s = 0.1;
};

struct EventConfig {
  double baseline_window_s = 0.2;
  std::ptrdiff_t min_baseline_frames = 5;
};

struct ExclusionConfig {
  double min_peak_amplitude = 0.05;
  double max_correlation = 0.3;
};

struct Interval {
  std::ptrdiff_t onset = 0;
  std::ptrdiff_t offset = 0;  // exclusive
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Per-pixel baseline F0 over the full recording.
Image baseline_image(const Stack& frames, const BaselineSpec& spec);

/// (F_t - F0) / F0 for every frame. Pixels outside both masks with F0 <= 0 are set to 0.
Stack compute_dff(const Recording& rec, const BaselineSpec& spec = {});

/// Zero-phase FFT-domain band-stop with raised-cosine edges outside [low, high].
Series bandstop_filter(std::span<const double> series, double fs, const BandstopConfig& cfg = {});

/// Applies bandstop_filter to every pixel trace in place.
void bandstop_stack(Stack& stack, double fs, const BandstopConfig& cfg = {});

Series spatial_mean(const Stack& stack, const Mask& mask);

/// Least-squares linear detrend.
Series detrend(std::span<const double> series);
Series detrend(std::span<const double> series, const DetrendSpec& spec, double fs);

/// Hysteresis thresholding at mu + k_on*sigma / mu + k_off*sigma.
std::vector<Interval> segment_events(std::span<const double> series, double fs, const SegmentConfig& cfg = {});

Event extract_event(const Recording& rec, std::ptrdiff_t onset, std::ptrdiff_t offset, const EventConfig& cfg = {});

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Keeps events with peak_amplitude >= min_peak and, when aux is given, r(mean_trace, aux) <= max_corr.
std::vector<Event> exclude_events(std::vector<Event> events, std::optional<std::span<const double>> aux,
                                  const ExclusionConfig& cfg = {});

/// Single-event form of the exclusion rule.
bool passes_exclusion(const Event& event, std::optional<std::span<const double>> aux,
                      const ExclusionConfig& cfg = {});

struct PowerSpectrum {
  double fs = 0.0;
  Series freqs;
  Series power;
};

/// One-sided periodogram.
PowerSpectrum power_spectrum(std::span<const double> series, double fs);

/// Frequency of maximum power over the open interval (0, fs/2).
double peak_frequency(const PowerSpectrum& spectrum);

struct DetectionConfig {
  BaselineSpec baseline;
  BandstopConfig bandstop;
  DetrendSpec detrend;
  SegmentConfig segment;
  EventConfig event;
  ExclusionConfig exclusion;
};

struct Detection {
  Series raw_trace;       // spatial mean dF/F
  Series filtered_trace;  // after band-stop
  Series detection_trace; // after detrending
  std::vector<Interval> intervals;
  std::vector<Event> events;  // every segmented event
  std::vector<bool> kept;     // exclusion verdict per event
};

/// Full detection chain on one recording.
Detection detect(const Recording& rec, const DetectionConfig& cfg = {});

}  // namespace slowwave::signal
