#pragma once

#include <vector>

#include <Eigen/Dense>

#include "slowwave/embed/vae.hpp"
#include "slowwave/features/features.hpp"

namespace slowwave::embed {

/// 1: trace only. 2: trace, source/sink maps, duration, amplitude, directional totals.
/// 3: trace with the up/down flow traces.
std::vector<Stream> variant_streams(int variant, const features::FeatureConfig& cfg = {});

/// input_dim x n_events, streams stacked in variant order. Duration and amplitude enter as
/// sign(x) * sqrt(|x|).
Eigen::MatrixXd assemble(int variant, const std::vector<features::FeatureVector>& events,
                         const features::FeatureConfig& cfg = {});

/// Per-row z-scoring fitted on a training matrix. Constant rows get scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& data);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& data) const;
  /// Restrict to the rows of one stream.
  Standardizer rows(Eigen::Index first, Eigen::Index count) const;
};

}  // namespace slowwave::embed
