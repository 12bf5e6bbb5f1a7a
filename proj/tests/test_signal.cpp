#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "slowwave/signal/signal.hpp"
#include "slowwave/synth/synth.hpp"

using namespace slowwave;
using namespace slowwave::signal;
using testing::constant_recording;
using testing::sinusoid;

TEST_CASE("compute_dff: identity, uniform gain, single bright frame") {
  auto rec = constant_recording(20, 6, 8, 100.0);
  const Stack zero = compute_dff(rec);
  for (double v : zero.data()) CHECK(v == 0.0);

  // Three frames at F0 pin the 10th percentile; the other frames sit at 1.05 * F0.
  auto scaled = constant_recording(20, 6, 8, 105.0);
  scaled.frames.frame(0).setConstant(100.0);
  scaled.frames.frame(1).setConstant(100.0);
  scaled.frames.frame(2).setConstant(100.0);
  const Stack five = compute_dff(scaled);
  for (std::ptrdiff_t t = 3; t < 20; ++t)
    for (double v : Eigen::Map<const Eigen::ArrayXd>(five.frame(t).data(), 48)) CHECK(v == doctest::Approx(0.05).epsilon(1e-12));

  // F0 = 100 (10th percentile), one frame at 110 inside the mask: (110 - 100) / 100.
  auto bright = constant_recording(20, 6, 8, 100.0);
  bright.frames.frame(7).block(1, 1, 2, 3).setConstant(110.0);
  const Stack dff = compute_dff(bright);
  CHECK(dff(7, 1, 1) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(dff(7, 2, 3) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(dff(7, 0, 0) == 0.0);
  CHECK(dff(6, 1, 1) == 0.0);
}

TEST_CASE("compute_dff: gain invariance") {
  Rng rng(3);
  auto rec = constant_recording(30, 5, 6, 0.0);
  for (double& v : rec.frames.data()) v = 50.0 + 10.0 * rng.uniform();
  Recording gained = rec;
  for (double& v : gained.frames.data()) v *= 3.7;
  const Stack a = compute_dff(rec);
  const Stack b = compute_dff(gained);
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("compute_dff: errors") {
  auto rec = constant_recording(10, 4, 4, 100.0);
  rec.frames.frame(0)(0, 0) = 0.0;
  for (std::ptrdiff_t t = 0; t < 10; ++t) rec.frames(t, 0, 0) = 0.0;
  CHECK_THROWS_AS(compute_dff(rec), Error);
  try {
    compute_dff(rec);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroBaseline);
  }

  auto bad = constant_recording(10, 4, 4, 100.0);
  bad.mask_left = Mask::Constant(3, 4, true);
  try {
    compute_dff(bad);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("bandstop_filter: sinusoid oracles") {
  const double fs = 100.0;
  const std::size_t n = 1000;
  const Series pass = sinusoid(n, fs, 2.0);
  const Series out_pass = bandstop_filter(pass, fs);
  double dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) dev = std::max(dev, std::abs(out_pass[i] - pass[i]));
  CHECK(dev < 0.01);

  const Series stop = sinusoid(n, fs, 15.0);
  CHECK(testing::max_abs(bandstop_filter(stop, fs)) < 0.01);

  const Series zeros(64, 0.0);
  for (double v : bandstop_filter(zeros, fs)) CHECK(v == 0.0);
}

TEST_CASE("bandstop_filter: >= 40 dB in band, <= 1% passband change on pure tones") {
  const double fs = 100.0;
  const std::size_t n = 2000;  // 0.05 Hz bins
  for (double hz : {10.0, 12.5, 15.0, 17.5, 20.0}) {
    const Series out = bandstop_filter(sinusoid(n, fs, hz), fs);
    CHECK(20.0 * std::log10(testing::max_abs(out)) <= -40.0);
  }
  for (double hz : {0.5, 1.0, 5.0, 9.0, 21.0, 30.0, 45.0}) {
    const Series in = sinusoid(n, fs, hz);
    const Series out = bandstop_filter(in, fs);
    CHECK(std::abs(testing::max_abs(out) / testing::max_abs(in) - 1.0) < 0.01);
  }
}

TEST_CASE("bandstop_filter: linearity") {
  Rng rng(11);
  Series x(257), y(257);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  const double a = 2.5;
  const double b = -0.75;
  Series mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Series fx = bandstop_filter(x, 100.0);
  const Series fy = bandstop_filter(y, 100.0);
  const Series fm = bandstop_filter(mix, 100.0);
  const double scale = testing::max_abs(fm);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fm[i] - (a * fx[i] + b * fy[i])) <= 1e-10 * scale);
}

TEST_CASE("bandstop_filter: band validation") {
  const Series s(64, 1.0);
  BandstopConfig bad;
  bad.low_hz = 30.0;
  bad.high_hz = 60.0;
  try {
    bandstop_filter(s, 100.0, bad);
    FAIL("expected BandOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BandOutOfRange);
  }
  bad = {};
  bad.low_hz = 0.0;
  CHECK_THROWS_AS(bandstop_filter(s, 100.0, bad), Error);
  bad = {};
  bad.low_hz = 20.0;
  bad.high_hz = 10.0;
  CHECK_THROWS_AS(bandstop_filter(s, 100.0, bad), Error);
}

TEST_CASE("spatial_mean") {
  Stack s(4, 3, 3, 2.5);
  const Mask all = Mask::Constant(3, 3, true);
  for (double v : spatial_mean(s, all)) CHECK(v == 2.5);

  Mask one = Mask::Constant(3, 3, false);
  one(1, 2) = true;
  for (std::ptrdiff_t t = 0; t < 4; ++t) s(t, 1, 2) = static_cast<double>(t) * 1.5;
  const Series trace = spatial_mean(s, one);
  for (std::ptrdiff_t t = 0; t < 4; ++t) CHECK(trace[static_cast<std::size_t>(t)] == s(t, 1, 2));

  Rng rng(5);
  Stack r(6, 7, 5);
  for (double& v : r.data()) v = rng.normal();
  Mask m = Mask::Constant(7, 5, false);
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) m(i, j) = rng.uniform() < 0.4;
  m(0, 0) = true;
  const Series got = spatial_mean(r, m);
  for (std::ptrdiff_t t = 0; t < 6; ++t) {
    double sum = 0.0;
    int cnt = 0;
    for (Eigen::Index i = 0; i < 7; ++i)
      for (Eigen::Index j = 0; j < 5; ++j)
        if (m(i, j)) {
          sum += r(t, i, j);
          ++cnt;
        }
    CHECK(got[static_cast<std::size_t>(t)] == doctest::Approx(sum / cnt).epsilon(1e-14));
  }

  try {
    spatial_mean(s, Mask::Constant(3, 3, false));
    FAIL("expected EmptyMask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyMask);
  }
}

TEST_CASE("detrend: linear, constant, centred cosine + ramp") {
  Series line(100);
  for (std::size_t i = 0; i < line.size(); ++i) line[i] = 0.3 * static_cast<double>(i) - 7.0;
  for (double v : detrend(line)) CHECK(std::abs(v) < 1e-12);
  for (double v : detrend(Series(17, 4.2))) CHECK(std::abs(v) < 1e-13);

  // A cosine centred on the window with an integer number of periods is orthogonal to
  // both the constant and the linear term, so detrending a cosine + ramp returns the cosine.
  const std::size_t n = 400;
  const double centre = 0.5 * static_cast<double>(n - 1);
  Series cosine(n), mixed(n);
  for (std::size_t i = 0; i < n; ++i) {
    cosine[i] = std::cos(2.0 * std::numbers::pi * 5.0 * (static_cast<double>(i) - centre) / static_cast<double>(n));
    mixed[i] = cosine[i] + 0.01 * static_cast<double>(i) + 3.0;
  }
  const Series rec = detrend(mixed);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += (rec[i] - cosine[i]) * (rec[i] - cosine[i]);
  CHECK(std::sqrt(sq / static_cast<double>(n)) < 1e-8);
}

TEST_CASE("detrend: idempotent, zero mean and slope") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Series x(50 + static_cast<std::size_t>(trial) * 7);
    for (auto& v : x) v = rng.normal() * 10.0 + rng.uniform() * static_cast<double>(trial);
    const Series once = detrend(x);
    const Series twice = detrend(once);
    const double scale = testing::max_abs(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(once[i] - twice[i]) <= 1e-10 * scale);
    const double mean = std::accumulate(once.begin(), once.end(), 0.0) / static_cast<double>(once.size());
    CHECK(std::abs(mean) < 1e-10 * scale);
  }
}

TEST_CASE("detrend: moving-average variant removes a slow drift") {
  Series x(500);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.002 * static_cast<double>(i);
  const Series out = detrend(x, DetrendSpec{DetrendSpec::Kind::MovingAverage, 1.0}, 100.0);
  // Interior samples see a symmetric window around a line.
  for (std::size_t i = 60; i < 440; ++i) CHECK(std::abs(out[i]) < 1e-12);
}

namespace {

// Reference: scan the series for runs above the offset threshold that reach the onset threshold.
std::vector<Interval> threshold_oracle(const Series& x, double on, double off) {
  std::vector<Interval> out;
  bool active = false;
  bool hit = false;
  std::ptrdiff_t start = 0;
  for (std::size_t i = 0; i <= x.size(); ++i) {
    const bool above = i < x.size() && x[i] > off;
    if (above && !active) {
      active = true;
      hit = false;
      start = static_cast<std::ptrdiff_t>(i);
    }
    if (above && x[i] > on) hit = true;
    if (!above && active) {
      active = false;
      if (hit) out.push_back({start, static_cast<std::ptrdiff_t>(i)});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("segment_events: flat, boxcar, merge gap") {
  CHECK(segment_events(Series(1000, 0.3), 100.0).empty());

  Series box(1000, 0.0);
  std::fill(box.begin() + 400, box.begin() + 500, 1.0);
  const auto one = segment_events(box, 100.0);
  REQUIRE(one.size() == 1);
  CHECK(std::abs(one[0].onset - 400) <= 1);
  CHECK(std::abs(one[0].offset - 500) <= 1);

  const double mu = std::accumulate(box.begin(), box.end(), 0.0) / 1000.0;
  double var = 0.0;
  for (double v : box) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / 1000.0);
  CHECK(one == threshold_oracle(box, mu + sd, mu + 0.5 * sd));

  // Gap of 20 frames (0.2 s) > merge_gap 0.1 s: two events.
  Series two(1000, 0.0);
  std::fill(two.begin() + 200, two.begin() + 300, 1.0);
  std::fill(two.begin() + 320, two.begin() + 420, 1.0);
  const auto apart = segment_events(two, 100.0);
  REQUIRE(apart.size() == 2);
  CHECK(apart[0] == Interval{200, 300});
  CHECK(apart[1] == Interval{320, 420});

  // Gap of 5 frames (0.05 s): merged.
  Series close(1000, 0.0);
  std::fill(close.begin() + 200, close.begin() + 300, 1.0);
  std::fill(close.begin() + 305, close.begin() + 405, 1.0);
  const auto merged = segment_events(close, 100.0);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0] == Interval{200, 405});
}

TEST_CASE("segment_events: intervals disjoint, sorted, at least min_duration") {
  Rng rng(99);
  SegmentConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    Series x(800);
    double level = 0.0;
    for (auto& v : x) {
      level = 0.9 * level + rng.normal();
      v = level;
    }
    const auto ivs = segment_events(x, 100.0, cfg);
    for (std::size_t i = 0; i < ivs.size(); ++i) {
      CHECK(ivs[i].onset < ivs[i].offset);
      CHECK(static_cast<double>(ivs[i].offset - ivs[i].onset) >= cfg.min_duration_s * 100.0 - 1e-9);
      if (i > 0) CHECK(ivs[i - 1].offset < ivs[i].onset);
    }
  }
}

TEST_CASE("extract_event: baseline and peak") {
  auto rec = constant_recording(60, 5, 6, 200.0);
  Event flat = extract_event(rec, 30, 40);
  CHECK(flat.peak_amplitude == 0.0);
  for (double v : flat.dffw.data()) CHECK(v == 0.0);
  CHECK(flat.duration_s == doctest::Approx(0.1));
  CHECK(flat.dffw.frames() == 10);

  rec.frames.frame(35).setConstant(240.0);
  const Event step = extract_event(rec, 30, 40);
  CHECK(step.peak_amplitude == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(step.mean_trace.size() == 10);
  CHECK(step.mean_trace[5] == doctest::Approx(0.2).epsilon(1e-12));

  // Fewer than five pre-onset frames: the first event frame is the baseline.
  auto early = constant_recording(20, 3, 4, 100.0);
  for (std::ptrdiff_t t = 2; t < 8; ++t) early.frames.frame(t).setConstant(100.0 + 10.0 * static_cast<double>(t - 2));
  const Event e = extract_event(early, 2, 8);
  CHECK(e.baseline(0, 0) == 100.0);
  CHECK(e.peak_amplitude == doctest::Approx(0.5).epsilon(1e-12));

  // Pre-onset window of 200 ms = 20 frames.
  auto windowed = constant_recording(100, 3, 4, 100.0);
  for (std::ptrdiff_t t = 30; t < 50; ++t) windowed.frames.frame(t).setConstant(t < 40 ? 90.0 : 110.0);
  const Event w = extract_event(windowed, 50, 60);
  CHECK(w.baseline(1, 1) == doctest::Approx(100.0).epsilon(1e-12));

  auto zero = constant_recording(30, 3, 4, 0.0);
  try {
    extract_event(zero, 10, 20);
    FAIL("expected ZeroBaseline");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ZeroBaseline);
  }
}

TEST_CASE("extract_event: synthetic events match the injected peak amplitude") {
  synth::RecordingSpec spec;
  spec.rows = 32;
  spec.cols = 32;
  spec.duration_s = 10.0;
  spec.events = {{2.0, 1.0, 0.1, {1.0, 0.0}}, {5.0, 0.8, 0.17, {0.0, 1.0}}};
  const auto [rec, truth] = synth::make_recording(spec);
  for (std::size_t i = 0; i < truth.windows.size(); ++i) {
    const Event ev = extract_event(rec, truth.windows[i].onset, truth.windows[i].offset);
    CHECK(std::abs(ev.peak_amplitude - truth.peak_amplitudes[i]) < 1e-6);
  }
}

TEST_CASE("exclude_events: amplitude and correlation rules") {
  auto make = [](double peak, std::ptrdiff_t on, std::ptrdiff_t off) {
    Event e;
    e.onset_frame = on;
    e.offset_frame = off;
    e.mean_trace.resize(static_cast<std::size_t>(off - on));
    for (std::size_t i = 0; i < e.mean_trace.size(); ++i) {
      e.mean_trace[i] = peak * std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(e.mean_trace.size() - 1));
    }
    e.peak_amplitude = *std::max_element(e.mean_trace.begin(), e.mean_trace.end());
    return e;
  };
  const Event low = make(0.04, 0, 20);
  const Event good = make(0.10, 20, 40);
  CHECK(exclude_events({low}, std::nullopt).empty());
  CHECK(exclude_events({good}, std::nullopt).size() == 1);

  Series aux(60, 0.0);
  std::copy(good.mean_trace.begin(), good.mean_trace.end(), aux.begin() + 20);
  CHECK(exclude_events({good}, std::span<const double>(aux)).empty());

  // Unrelated aux keeps the event; surviving events are untouched.
  Series other = sinusoid(60, 100.0, 9.0);
  const auto kept = exclude_events({low, good}, std::span<const double>(other));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].mean_trace == good.mean_trace);
  CHECK(kept[0].onset_frame == 20);
}

TEST_CASE("exclude_events never grows the list") {
  Rng rng(8);
  std::vector<Event> events;
  for (int i = 0; i < 30; ++i) {
    Event e;
    e.onset_frame = i * 10;
    e.offset_frame = i * 10 + 10;
    e.mean_trace.resize(10);
    for (auto& v : e.mean_trace) v = 0.1 * rng.uniform();
    e.peak_amplitude = *std::max_element(e.mean_trace.begin(), e.mean_trace.end());
    events.push_back(e);
  }
  Series aux(300);
  for (auto& v : aux) v = rng.normal();
  const auto kept = exclude_events(events, std::span<const double>(aux));
  CHECK(kept.size() <= events.size());
}

TEST_CASE("power_spectrum: peaks") {
  const double fs = 100.0;
  const auto spec = power_spectrum(sinusoid(3000, fs, 0.9), fs);
  const double bin = fs / 3000.0;
  CHECK(std::abs(peak_frequency(spec) - 0.9) <= bin);

  const auto flat = power_spectrum(Series(512, 3.0), fs);
  CHECK(flat.power[0] > 0.0);
  for (std::size_t k = 1; k < flat.power.size(); ++k) CHECK(flat.power[k] < 1e-20);

  Series two = sinusoid(3000, fs, 0.2);
  const Series fast = sinusoid(3000, fs, 15.0, 0.8);
  for (std::size_t i = 0; i < two.size(); ++i) two[i] += fast[i];
  const auto both = power_spectrum(two, fs);
  std::vector<std::size_t> order(both.power.size() - 1);
  std::iota(order.begin(), order.end(), 1);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return both.power[a] > both.power[b]; });
  std::vector<double> top{both.freqs[order[0]], both.freqs[order[1]]};
  std::sort(top.begin(), top.end());
  CHECK(std::abs(top[0] - 0.2) <= bin);
  CHECK(std::abs(top[1] - 15.0) <= bin);
}

TEST_CASE("power_spectrum: Parseval for the one-sided periodogram") {
  Rng rng(4);
  Series x(256);
  for (auto& v : x) v = rng.normal();
  const double fs = 50.0;
  const auto spec = power_spectrum(x, fs);
  double energy = 0.0;
  for (double v : x) energy += v * v;
  double integral = 0.0;
  for (double p : spec.power) integral += p * fs / 256.0;
  CHECK(integral == doctest::Approx(energy / 256.0).epsilon(1e-10));
}
