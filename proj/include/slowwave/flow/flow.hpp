#pragma once

#include <utility>
#include <vector>

#include "slowwave/core/array.hpp"
#include "slowwave/signal/signal.hpp"

namespace slowwave::flow {

/// Dense displacement field. u is the row (vertical, positive = image-down) component and
/// v the column (horizontal, positive = image-right) component, both in pixels/frame.
struct FlowField {
  Image u;
  Image v;
  Mask valid;

  static FlowField zeros(const Mask& valid);
  Eigen::Index rows() const { return valid.rows(); }
  Eigen::Index cols() const { return valid.cols(); }
};

struct FlowSequence {
  std::vector<FlowField> fields;  // one per consecutive frame pair
  double fs = 0.0;
};

struct HsConfig {
  double alpha = 1.0;
  int max_iters = 300;
  double tol = 1e-4;  // mean per-pixel update magnitude, px

  void validate() const;
};

/// Horn-Schunck cube-average derivatives, located at the centre of each 2x2x2 cube.
/// dy is the derivative along rows (Iy), dx along columns (Ix), dt along time (It).
struct Gradients {
  Image dy;
  Image dx;
  Image dt;
};

Gradients gradients(const Image& frame_a, const Image& frame_b);

struct HsStats {
  int iterations = 0;
  double last_update = 0.0;
  bool converged = false;
};

/// Jacobi Horn-Schunck iteration from a zero field. Neighbour averages use only in-mask
/// pixels (weights 1/6 edge, 1/12 diagonal, renormalized); flow is zero outside the mask.
FlowField horn_schunck(const Image& frame_a, const Image& frame_b, const Mask& mask, const HsConfig& cfg = {},
                       HsStats* stats = nullptr);

/// Discrete energy minimized by horn_schunck:
///   sum_i (Iy u + Ix v + It)^2 + alpha^2 sum_{pairs i~j} w_ij (|u_i - u_j|^2 + |v_i - v_j|^2)
/// over in-mask pixels and in-mask neighbour pairs.
double hs_energy(const FlowField& field, const Gradients& grads, const Mask& mask, double alpha);

/// Flow for every consecutive frame pair, computed separately on each hemisphere mask.
std::pair<FlowSequence, FlowSequence> flow_sequence(const Stack& frames, double fs, const Mask& left,
                                                    const Mask& right, const HsConfig& cfg = {});
std::pair<FlowSequence, FlowSequence> flow_sequence(const signal::Event& event, double fs, const Mask& left,
                                                    const Mask& right, const HsConfig& cfg = {});

}  // namespace slowwave::flow
