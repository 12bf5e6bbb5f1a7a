#include "slowwave/embed/dataset.hpp"

#include <cmath>

#include "slowwave/core/error.hpp"

namespace slowwave::embed {

std::vector<Stream> variant_streams(int variant, const features::FeatureConfig& cfg) {
  const auto len = static_cast<Eigen::Index>(cfg.trace_len);
  const Eigen::Index map = cfg.map_size * cfg.map_size;
  // Every stream gets the same weight, on the scale of a summed squared error over one trace.
  const double p = static_cast<double>(cfg.trace_len);
  switch (variant) {
    case 1:
      return {{"trace", len, p}};
    case 2:
      return {{"trace", len, p}, {"source_mean", map, p}, {"sink_mean", map, p},
              {"duration", 1, p},  {"amplitude", 1, p},     {"directions", 4, p}};
    case 3:
      return {{"trace", len, p}, {"flow_up_trace", len, p}, {"flow_down_trace", len, p}};
    default:
      throw Error(ErrorCode::InvalidArgument, "variant must be 1, 2 or 3");
  }
}

namespace {

double signed_sqrt(double x) { return std::copysign(std::sqrt(std::abs(x)), x); }

void put(Eigen::MatrixXd& m, Eigen::Index& row, Eigen::Index col, const Series& s) {
  for (double v : s) m(row++, col) = v;
}

void put(Eigen::MatrixXd& m, Eigen::Index& row, Eigen::Index col, const Image& img) {
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) m(row++, col) = img(r, c);
}

}  // namespace

Eigen::MatrixXd assemble(int variant, const std::vector<features::FeatureVector>& events,
                         const features::FeatureConfig& cfg) {
  const auto streams = variant_streams(variant, cfg);
  Eigen::Index dim = 0;
  for (const auto& s : streams) dim += s.length;
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(events.size()));
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& fv = events[e];
    const auto col = static_cast<Eigen::Index>(e);
    if (fv.trace.size() != cfg.trace_len || fv.flow_up_trace.size() != cfg.trace_len ||
        fv.source_mean.rows() != cfg.map_size || fv.source_mean.cols() != cfg.map_size) {
      throw Error(ErrorCode::ShapeMismatch, "feature vector does not match the feature config");
    }
    Eigen::Index row = 0;
    put(m, row, col, fv.trace);
    if (variant == 2) {
      put(m, row, col, fv.source_mean);
      put(m, row, col, fv.sink_mean);
      m(row++, col) = signed_sqrt(fv.duration_s);
      m(row++, col) = signed_sqrt(fv.peak_amplitude);
      put(m, row, col, Series{fv.up_total, fv.down_total, fv.left_total, fv.right_total});
    } else if (variant == 3) {
      put(m, row, col, fv.flow_up_trace);
      put(m, row, col, fv.flow_down_trace);
    }
  }
  return m;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& data) {
  if (data.cols() == 0) throw Error(ErrorCode::InvalidArgument, "cannot standardize an empty matrix");
  Standardizer s;
  const auto n = static_cast<double>(data.cols());
  s.mean = data.rowwise().mean();
  s.scale = ((data.colwise() - s.mean).array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i)
    if (!(s.scale(i) > 1e-12 * std::max(1.0, std::abs(s.mean(i))))) s.scale(i) = 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& data) const {
  return ((data.colwise() - mean).array().colwise() / scale.array()).matrix();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& data) const {
  return ((data.array().colwise() * scale.array()).matrix().colwise() + mean);
}

Standardizer Standardizer::rows(Eigen::Index first, Eigen::Index count) const {
  return {mean.segment(first, count), scale.segment(first, count)};
}

}  // namespace slowwave::embed
