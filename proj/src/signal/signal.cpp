#include "slowwave/signal/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "slowwave/signal/fft.hpp"

namespace slowwave::signal {

void Recording::validate() const {
  if (frames.frames() < 2) throw Error(ErrorCode::InvalidArgument, "recording needs at least 2 frames");
  if (!(fs > 0.0)) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");
  require_shape(frames.rows(), frames.cols(), mask_left, "mask_left");
  require_shape(frames.rows(), frames.cols(), mask_right, "mask_right");
  if ((mask_left && mask_right).any()) throw Error(ErrorCode::InvalidArgument, "hemisphere masks overlap");
  if (aux && static_cast<std::ptrdiff_t>(aux->size()) != frames.frames()) {
    throw Error(ErrorCode::ShapeMismatch, "aux length " + std::to_string(aux->size()) + " != frame count " +
                                              std::to_string(frames.frames()));
  }
}

namespace {

double percentile_of(std::vector<double>& values, double p) {
  // Linear interpolation between order statistics.
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double vlo = values[lo];
  if (hi == lo) return vlo;
  const double vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return vlo + (pos - static_cast<double>(lo)) * (vhi - vlo);
}

Stack normalize_by(const Stack& frames, const Image& base, const Mask& mask) {
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      if (mask(r, c) && !(base(r, c) > 0.0)) {
        throw Error(ErrorCode::ZeroBaseline, "non-positive baseline at pixel (" + std::to_string(r) + ", " +
                                                 std::to_string(c) + ")");
      }
    }
  }
  Stack out(frames.frames(), frames.rows(), frames.cols());
  for (std::ptrdiff_t t = 0; t < frames.frames(); ++t) {
    out.frame(t) = ((base > 0.0).select((frames.frame(t) - base) / base, 0.0));
  }
  return out;
}

}  // namespace

Image baseline_image(const Stack& frames, const BaselineSpec& spec) {
  if (frames.frames() < 1) throw Error(ErrorCode::InvalidArgument, "empty stack");
  Image base(frames.rows(), frames.cols());
  if (spec.kind == BaselineSpec::Kind::Mean) {
    base.setZero();
    for (std::ptrdiff_t t = 0; t < frames.frames(); ++t) base += frames.frame(t);
    base /= static_cast<double>(frames.frames());
    return base;
  }
  if (spec.percentile < 0.0 || spec.percentile > 100.0) {
    throw Error(ErrorCode::InvalidArgument, "percentile must lie in [0, 100]");
  }
  std::vector<double> trace(static_cast<std::size_t>(frames.frames()));
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    for (Eigen::Index c = 0; c < base.cols(); ++c) {
      for (std::ptrdiff_t t = 0; t < frames.frames(); ++t) trace[static_cast<std::size_t>(t)] = frames(t, r, c);
      base(r, c) = percentile_of(trace, spec.percentile);
    }
  }
  return base;
}

Stack compute_dff(const Recording& rec, const BaselineSpec& spec) {
  rec.validate();
  return normalize_by(rec.frames, baseline_image(rec.frames, spec), rec.union_mask());
}

Series bandstop_filter(std::span<const double> series, double fs, const BandstopConfig& cfg) {
  if (series.size() < 8) throw Error(ErrorCode::InvalidArgument, "band-stop needs at least 8 samples");
  if (!(fs > 0.0) || !(cfg.low_hz > 0.0) || !(cfg.low_hz < cfg.high_hz) || !(cfg.high_hz < fs / 2.0)) {
    throw Error(ErrorCode::BandOutOfRange, "band [" + std::to_string(cfg.low_hz) + ", " +
                                               std::to_string(cfg.high_hz) + "] Hz invalid for fs=" +
                                               std::to_string(fs));
  }
  if (cfg.transition_hz < 0.0) throw Error(ErrorCode::BandOutOfRange, "negative transition width");

  const std::size_t n = series.size();
  auto spectrum = rfft(series);
  const double tr = cfg.transition_hz;
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    double gain = 1.0;
    if (f >= cfg.low_hz && f <= cfg.high_hz) {
      gain = 0.0;
    } else if (tr > 0.0 && f > cfg.low_hz - tr && f < cfg.low_hz) {
      gain = 0.5 * (1.0 + std::cos(std::numbers::pi * (f - (cfg.low_hz - tr)) / tr));
    } else if (tr > 0.0 && f > cfg.high_hz && f < cfg.high_hz + tr) {
      gain = 0.5 * (1.0 - std::cos(std::numbers::pi * (f - cfg.high_hz) / tr));
    }
    spectrum[k] *= gain;
  }
  return irfft(spectrum, n);
}

void bandstop_stack(Stack& stack, double fs, const BandstopConfig& cfg) {
  Series trace(static_cast<std::size_t>(stack.frames()));
  for (std::ptrdiff_t r = 0; r < stack.rows(); ++r) {
    for (std::ptrdiff_t c = 0; c < stack.cols(); ++c) {
      for (std::ptrdiff_t t = 0; t < stack.frames(); ++t) trace[static_cast<std::size_t>(t)] = stack(t, r, c);
      const Series filtered = bandstop_filter(trace, fs, cfg);
      for (std::ptrdiff_t t = 0; t < stack.frames(); ++t) stack(t, r, c) = filtered[static_cast<std::size_t>(t)];
    }
  }
}

Series spatial_mean(const Stack& stack, const Mask& mask) {
  require_shape(stack.rows(), stack.cols(), mask, "spatial_mean mask");
  const auto n = mask.count();
  if (n == 0) throw Error(ErrorCode::EmptyMask, "spatial_mean over empty mask");
  Series out(static_cast<std::size_t>(stack.frames()));
  for (std::ptrdiff_t t = 0; t < stack.frames(); ++t) {
    out[static_cast<std::size_t>(t)] = mask.select(stack.frame(t), 0.0).sum() / static_cast<double>(n);
  }
  return out;
}

Series detrend(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "detrend needs at least 2 samples");
  const double center = 0.5 * static_cast<double>(n - 1);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  double stt = 0.0;
  double sty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) - center;
    stt += t * t;
    sty += t * (series[i] - mean);
  }
  const double slope = sty / stt;
  Series out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = series[i] - mean - slope * (static_cast<double>(i) - center);
  return out;
}

Series detrend(std::span<const double> series, const DetrendSpec& spec, double fs) {
  if (spec.kind == DetrendSpec::Kind::Linear) return detrend(series);
  if (series.size() < 2) throw Error(ErrorCode::InvalidArgument, "detrend needs at least 2 samples");
  const auto half = static_cast<std::ptrdiff_t>(std::max(0.0, std::round(spec.window_s * fs / 2.0)));
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  Series prefix(series.size() + 1, 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series[i];
  Series out(series.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min(n, i + half + 1);
    out[i] = series[i] - (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

std::vector<Interval> segment_events(std::span<const double> series, double fs, const SegmentConfig& cfg) {
  std::vector<Interval> runs;
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  if (n == 0) return runs;
  const double mu = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : series) var += (x - mu) * (x - mu);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  if (!(sigma > 0.0)) return runs;
  const double on = mu + cfg.k_on * sigma;
  const double off = mu + cfg.k_off * sigma;

  // Connected runs above the offset threshold that reach the onset threshold.
  for (std::ptrdiff_t i = 0; i < n;) {
    if (!(series[i] > off)) {
      ++i;
      continue;
    }
    std::ptrdiff_t j = i;
    bool triggered = false;
    while (j < n && series[j] > off) {
      triggered = triggered || series[j] > on;
      ++j;
    }
    if (triggered) runs.push_back({i, j});
    i = j;
  }

  const double merge_frames = cfg.merge_gap_s * fs;
  std::vector<Interval> merged;
  for (const auto& run : runs) {
    if (!merged.empty() && static_cast<double>(run.onset - merged.back().offset) < merge_frames) {
      merged.back().offset = run.offset;
    } else {
      merged.push_back(run);
    }
  }

  const double min_frames = cfg.min_duration_s * fs;
  std::erase_if(merged, [&](const Interval& iv) {
    return static_cast<double>(iv.offset - iv.onset) < min_frames - 1e-9;
  });
  return merged;
}

Event extract_event(const Recording& rec, std::ptrdiff_t onset, std::ptrdiff_t offset, const EventConfig& cfg) {
  rec.validate();
  if (onset < 0 || offset > rec.frames.frames() || onset >= offset) {
    throw Error(ErrorCode::InvalidArgument, "event range [" + std::to_string(onset) + ", " +
                                                std::to_string(offset) + ") invalid");
  }
  const Mask mask = rec.union_mask();
  if (!mask.any()) throw Error(ErrorCode::EmptyMask, "recording has empty hemisphere masks");

  Event ev;
  ev.onset_frame = onset;
  ev.offset_frame = offset;
  const auto window = std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(std::lround(cfg.baseline_window_s * rec.fs)));
  if (onset >= cfg.min_baseline_frames) {
    const auto first = onset - std::min(window, onset);
    ev.baseline = Image::Zero(rec.frames.rows(), rec.frames.cols());
    for (std::ptrdiff_t t = first; t < onset; ++t) ev.baseline += rec.frames.frame(t);
    ev.baseline /= static_cast<double>(onset - first);
  } else {
    ev.baseline = rec.frames.frame(onset);
  }

  ev.dffw = normalize_by(rec.frames.slice(onset, offset), ev.baseline, mask);
  ev.mean_trace = spatial_mean(ev.dffw, mask);
  ev.duration_s = static_cast<double>(offset - onset) / rec.fs;
  ev.peak_amplitude = *std::max_element(ev.mean_trace.begin(), ev.mean_trace.end());
  return ev;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "pearson: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

bool passes_exclusion(const Event& event, std::optional<std::span<const double>> aux, const ExclusionConfig& cfg) {
  if (event.peak_amplitude < cfg.min_peak_amplitude) return false;
  if (!aux) return true;
  if (event.offset_frame > static_cast<std::ptrdiff_t>(aux->size())) {
    throw Error(ErrorCode::ShapeMismatch, "aux shorter than event window");
  }
  const auto segment = aux->subspan(static_cast<std::size_t>(event.onset_frame),
                                    static_cast<std::size_t>(event.offset_frame - event.onset_frame));
  // An undefined correlation (flat trace or flat aux) cannot indicate an artifact.
  const auto r = pearson(event.mean_trace, segment);
  return !r || *r <= cfg.max_correlation;
}

std::vector<Event> exclude_events(std::vector<Event> events, std::optional<std::span<const double>> aux,
                                  const ExclusionConfig& cfg) {
  std::vector<Event> kept;
  kept.reserve(events.size());
  for (auto& ev : events) {
    if (passes_exclusion(ev, aux, cfg)) kept.push_back(std::move(ev));
  }
  return kept;
}

PowerSpectrum power_spectrum(std::span<const double> series, double fs) {
  if (series.size() < 8) throw Error(ErrorCode::InvalidArgument, "power spectrum needs at least 8 samples");
  const std::size_t n = series.size();
  const auto spectrum = rfft(series);
  PowerSpectrum out;
  out.fs = fs;
  out.freqs.resize(spectrum.size());
  out.power.resize(spectrum.size());
  const double scale = 1.0 / (fs * static_cast<double>(n));
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    out.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    out.power[k] = std::norm(spectrum[k]) * scale * (unpaired ? 1.0 : 2.0);
  }
  return out;
}

double peak_frequency(const PowerSpectrum& spectrum) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < spectrum.freqs.size(); ++k) {
    if (!(spectrum.freqs[k] < spectrum.fs / 2.0)) break;
    if (best == 0 || spectrum.power[k] > spectrum.power[best]) best = k;
  }
  if (best == 0) throw Error(ErrorCode::InvalidArgument, "spectrum has no bins inside (0, fs/2)");
  return spectrum.freqs[best];
}

Detection detect(const Recording& rec, const DetectionConfig& cfg) {
  rec.validate();
  Detection out;
  const Stack dff = compute_dff(rec, cfg.baseline);
  out.raw_trace = spatial_mean(dff, rec.union_mask());
  out.filtered_trace = bandstop_filter(out.raw_trace, rec.fs, cfg.bandstop);
  out.detection_trace = detrend(out.filtered_trace, cfg.detrend, rec.fs);
  out.intervals = segment_events(out.detection_trace, rec.fs, cfg.segment);
  std::optional<std::span<const double>> aux;
  if (rec.aux) aux = std::span<const double>(*rec.aux);
  // Optionally strip the band from every pixel before events are cut out for flow.
  std::optional<Recording> filtered;
  if (cfg.bandstop.per_pixel && !out.intervals.empty()) {
    filtered = rec;
    bandstop_stack(filtered->frames, rec.fs, cfg.bandstop);
  }
  const Recording& source = filtered ? *filtered : rec;
  for (const auto& iv : out.intervals) {
    out.events.push_back(extract_event(source, iv.onset, iv.offset, cfg.event));
    out.kept.push_back(passes_exclusion(out.events.back(), aux, cfg.exclusion));
  }
  return out;
}

}  // namespace slowwave::signal
