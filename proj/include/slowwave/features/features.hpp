#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slowwave/core/array.hpp"
#include "slowwave/flow/flow.hpp"
#include "slowwave/helmholtz/helmholtz.hpp"
#include "slowwave/signal/signal.hpp"

namespace slowwave::features {

using flow::FlowField;
using flow::FlowSequence;
using helmholtz::HelmholtzResult;

struct DirectionConfig {
  bool flip_vertical = false;  // when set, "up" means increasing row
  double midline_col = -1.0;   // negative means the image centre, (cols - 1) / 2
};

/// Flow totals in px/frame summed over frames and valid pixels. Medial/lateral are split by
/// the side of the midline a pixel lies on; pixels exactly on the midline count for neither.
struct DirectionalSums {
  double up = 0.0;
  double down = 0.0;
  double left = 0.0;
  double right = 0.0;
  double lateral_left = 0.0;
  double medial_left = 0.0;
  double lateral_right = 0.0;
  double medial_right = 0.0;

  DirectionalSums& operator+=(const DirectionalSums& o);
};

DirectionalSums directional_sums(const FlowField& field, const DirectionConfig& cfg = {});
DirectionalSums directional_sums(const FlowSequence& seq, const DirectionConfig& cfg = {});

enum class Side { Left, Right, Both };

struct FlowRatios {
  std::optional<double> vertical_fraction;
  std::optional<double> bottom_up_share;
  std::optional<double> medial_to_lateral;  // lateral share of horizontal flow on `side`
};

FlowRatios flow_ratios(const DirectionalSums& sums, Side side = Side::Both);

struct TemporalMeans {
  Image source_mean;
  Image sink_mean;
  Image dff_mean_map;
};

/// Means over flow frames of O and I, and over event frames of dF/F.
TemporalMeans temporal_means(const signal::Event& event, const std::vector<HelmholtzResult>& decompositions);

/// Flow component used for the directional measures: f - grad_phi (divergence-free part plus harmonic).
FlowField flow_component(const FlowField& f, const HelmholtzResult& h);

/// Linear interpolation onto `n` evenly spaced samples spanning the same interval.
Series resample(const Series& s, std::size_t n);
/// Area-weighted block average to n x n.
Image downsample(const Image& img, Eigen::Index n);

struct FeatureConfig {
  std::size_t trace_len = 128;
  Eigen::Index map_size = 32;
  DirectionConfig direction;
};

struct FeatureVector {
  std::optional<double> vertical_fraction;
  std::optional<double> bottom_up_share;
  std::optional<double> medial_to_lateral_left;
  std::optional<double> medial_to_lateral_right;
  double up_total = 0.0;
  double down_total = 0.0;
  double left_total = 0.0;
  double right_total = 0.0;
  double peak_amplitude = 0.0;
  double duration_s = 0.0;
  Image source_mean;
  Image sink_mean;
  Image dff_mean_map;
  Series trace;
  Series flow_up_trace;
  Series flow_down_trace;
  std::string condition;
};

/// `field` holds one combined (both hemisphere) flow field per frame pair and `decompositions`
/// the matching Helmholtz splits.
FeatureVector build_feature_vector(const signal::Event& event, const FlowSequence& field,
                                   const std::vector<HelmholtzResult>& decompositions, const std::string& condition,
                                   const FeatureConfig& cfg = {});

}  // namespace slowwave::features
