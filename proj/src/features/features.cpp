#include "slowwave/features/features.hpp"

#include <algorithm>
#include <cmath>

#include "slowwave/core/error.hpp"

namespace slowwave::features {

DirectionalSums& DirectionalSums::operator+=(const DirectionalSums& o) {
  up += o.up;
  down += o.down;
  left += o.left;
  right += o.right;
  lateral_left += o.lateral_left;
  medial_left += o.medial_left;
  lateral_right += o.lateral_right;
  medial_right += o.medial_right;
  return *this;
}

DirectionalSums directional_sums(const FlowField& f, const DirectionConfig& cfg) {
  const double mid = cfg.midline_col < 0.0 ? 0.5 * static_cast<double>(f.cols() - 1) : cfg.midline_col;
  DirectionalSums s;
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
      if (!f.valid(r, c)) continue;
      const double u = cfg.flip_vertical ? -f.u(r, c) : f.u(r, c);
      const double v = f.v(r, c);
      s.up += std::max(-u, 0.0);
      s.down += std::max(u, 0.0);
      s.left += std::max(-v, 0.0);
      s.right += std::max(v, 0.0);
      const double x = static_cast<double>(c);
      if (x < mid) {
        s.lateral_left += std::max(-v, 0.0);
        s.medial_left += std::max(v, 0.0);
      } else if (x > mid) {
        s.lateral_right += std::max(v, 0.0);
        s.medial_right += std::max(-v, 0.0);
      }
    }
  }
  return s;
}

DirectionalSums directional_sums(const FlowSequence& seq, const DirectionConfig& cfg) {
  DirectionalSums s;
  for (const auto& f : seq.fields) s += directional_sums(f, cfg);
  return s;
}

namespace {

std::optional<double> ratio(double num, double den) {
  if (!(den > 0.0)) return std::nullopt;
  return std::clamp(num / den, 0.0, 1.0);
}

}  // namespace

FlowRatios flow_ratios(const DirectionalSums& s, Side side) {
  FlowRatios out;
  out.vertical_fraction = ratio(s.up + s.down, s.up + s.down + s.left + s.right);
  out.bottom_up_share = ratio(s.up, s.up + s.down);
  double lateral = 0.0;
  double medial = 0.0;
  if (side != Side::Right) {
    lateral += s.lateral_left;
    medial += s.medial_left;
  }
  if (side != Side::Left) {
    lateral += s.lateral_right;
    medial += s.medial_right;
  }
  out.medial_to_lateral = ratio(lateral, lateral + medial);
  return out;
}

TemporalMeans temporal_means(const signal::Event& event, const std::vector<HelmholtzResult>& decompositions) {
  const auto rows = event.dffw.rows();
  const auto cols = event.dffw.cols();
  TemporalMeans m{Image::Zero(rows, cols), Image::Zero(rows, cols), Image::Zero(rows, cols)};
  for (const auto& h : decompositions) {
    if (h.sources.rows() != rows || h.sources.cols() != cols) {
      throw Error(ErrorCode::ShapeMismatch, "decomposition and event frames differ in shape");
    }
    m.source_mean += h.sources;
    m.sink_mean += h.sinks;
  }
  if (!decompositions.empty()) {
    m.source_mean /= static_cast<double>(decompositions.size());
    m.sink_mean /= static_cast<double>(decompositions.size());
  }
  for (std::ptrdiff_t t = 0; t < event.dffw.frames(); ++t) m.dff_mean_map += event.dffw.frame(t);
  if (event.dffw.frames() > 0) m.dff_mean_map /= static_cast<double>(event.dffw.frames());
  return m;
}

FlowField flow_component(const FlowField& f, const HelmholtzResult& h) { return helmholtz::subtract(f, h.grad_phi); }

Series resample(const Series& s, std::size_t n) {
  if (n == 0) return {};
  if (s.empty()) throw Error(ErrorCode::InvalidArgument, "cannot resample an empty series");
  if (s.size() == n) return s;
  if (s.size() == 1) return Series(n, s.front());
  if (n == 1) return {s.front()};
  Series out(n);
  const double step = static_cast<double>(s.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = step * static_cast<double>(i);
    const auto k = std::min(static_cast<std::size_t>(x), s.size() - 2);
    const double w = x - static_cast<double>(k);
    out[i] = (1.0 - w) * s[k] + w * s[k + 1];
  }
  return out;
}

namespace {

// Overlap weights of the n output bins over the m input cells, as an n x m matrix.
Eigen::MatrixXd block_weights(Eigen::Index m, Eigen::Index n) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, m);
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = scale * static_cast<double>(i);
    const double hi = scale * static_cast<double>(i + 1);
    for (auto j = static_cast<Eigen::Index>(lo); j < m && static_cast<double>(j) < hi; ++j) {
      const double overlap = std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
      if (overlap > 0.0) w(i, j) = overlap / scale;
    }
  }
  return w;
}

}  // namespace

Image downsample(const Image& img, Eigen::Index n) {
  if (n <= 0) throw Error(ErrorCode::InvalidArgument, "map size must be positive");
  const Eigen::MatrixXd rows = block_weights(img.rows(), n);
  const Eigen::MatrixXd cols = block_weights(img.cols(), n);
  const Eigen::MatrixXd out = rows * img.matrix() * cols.transpose();
  return out.array();
}

FeatureVector build_feature_vector(const signal::Event& event, const FlowSequence& seq,
                                   const std::vector<HelmholtzResult>& decompositions, const std::string& condition,
                                   const FeatureConfig& cfg) {
  if (seq.fields.size() != decompositions.size()) {
    throw Error(ErrorCode::ShapeMismatch, "flow and decomposition counts differ");
  }
  FeatureVector fv;
  DirectionalSums total;
  Series up_trace;
  Series down_trace;
  for (std::size_t t = 0; t < seq.fields.size(); ++t) {
    const DirectionalSums s = directional_sums(flow_component(seq.fields[t], decompositions[t]), cfg.direction);
    total += s;
    up_trace.push_back(s.up);
    down_trace.push_back(s.down);
  }
  const FlowRatios both = flow_ratios(total, Side::Both);
  fv.vertical_fraction = both.vertical_fraction;
  fv.bottom_up_share = both.bottom_up_share;
  fv.medial_to_lateral_left = flow_ratios(total, Side::Left).medial_to_lateral;
  fv.medial_to_lateral_right = flow_ratios(total, Side::Right).medial_to_lateral;
  fv.up_total = total.up;
  fv.down_total = total.down;
  fv.left_total = total.left;
  fv.right_total = total.right;
  fv.peak_amplitude = event.peak_amplitude;
  fv.duration_s = event.duration_s;

  const TemporalMeans means = temporal_means(event, decompositions);
  fv.source_mean = downsample(means.source_mean, cfg.map_size);
  fv.sink_mean = downsample(means.sink_mean, cfg.map_size);
  fv.dff_mean_map = downsample(means.dff_mean_map, cfg.map_size);
  fv.trace = resample(event.mean_trace, cfg.trace_len);
  if (up_trace.empty()) {
    up_trace.push_back(0.0);
    down_trace.push_back(0.0);
  }
  fv.flow_up_trace = resample(up_trace, cfg.trace_len);
  fv.flow_down_trace = resample(down_trace, cfg.trace_len);
  fv.condition = condition;
  return fv;
}

}  // namespace slowwave::features
