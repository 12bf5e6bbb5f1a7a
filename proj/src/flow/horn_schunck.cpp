#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "slowwave/core/parallel.hpp"
#include "slowwave/flow/flow.hpp"

namespace slowwave::flow {
namespace {

struct Neighbour {
  int dr;
  int dc;
  double w;
};

constexpr double kEdge = 1.0 / 6.0;
constexpr double kDiag = 1.0 / 12.0;
constexpr std::array<Neighbour, 8> kStencil{{
    {-1, 0, kEdge}, {1, 0, kEdge}, {0, -1, kEdge}, {0, 1, kEdge},
    {-1, -1, kDiag}, {-1, 1, kDiag}, {1, -1, kDiag}, {1, 1, kDiag},
}};

// Flattened in-mask neighbourhood: for pixel k, links[offsets[k]..offsets[k+1]) are (index, weight).
struct Graph {
  std::vector<Eigen::Index> pixels;  // row-major linear index of each in-mask pixel
  std::vector<std::size_t> offsets;
  std::vector<std::pair<std::size_t, double>> links;
  std::vector<double> weight_sum;
};

Graph build_graph(const Mask& mask) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  std::vector<std::ptrdiff_t> slot(static_cast<std::size_t>(rows * cols), -1);
  Graph g;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (mask(r, c)) {
        slot[static_cast<std::size_t>(r * cols + c)] = static_cast<std::ptrdiff_t>(g.pixels.size());
        g.pixels.push_back(r * cols + c);
      }
    }
  }
  g.offsets.reserve(g.pixels.size() + 1);
  g.offsets.push_back(0);
  for (const auto p : g.pixels) {
    const Eigen::Index r = p / cols;
    const Eigen::Index c = p % cols;
    double total = 0.0;
    for (const auto& n : kStencil) {
      const Eigen::Index rr = r + n.dr;
      const Eigen::Index cc = c + n.dc;
      if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
      const auto s = slot[static_cast<std::size_t>(rr * cols + cc)];
      if (s < 0) continue;
      g.links.emplace_back(static_cast<std::size_t>(s), n.w);
      total += n.w;
    }
    g.offsets.push_back(g.links.size());
    g.weight_sum.push_back(total);
  }
  return g;
}

}  // namespace

FlowField FlowField::zeros(const Mask& valid) {
  return FlowField{Image::Zero(valid.rows(), valid.cols()), Image::Zero(valid.rows(), valid.cols()), valid};
}

void HsConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be >= 0");
}

Gradients gradients(const Image& a, const Image& b) {
  if (!same_shape(a, b)) throw Error(ErrorCode::ShapeMismatch, "gradient frames differ in shape");
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  if (rows < 2 || cols < 2) throw Error(ErrorCode::ShapeMismatch, "gradient frames must be at least 2x2");

  Gradients g{Image(rows, cols), Image(rows, cols), Image(rows, cols)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index r1 = std::min(r + 1, rows - 1);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index c1 = std::min(c + 1, cols - 1);
      g.dx(r, c) = 0.25 * (a(r, c1) - a(r, c) + a(r1, c1) - a(r1, c) + b(r, c1) - b(r, c) + b(r1, c1) - b(r1, c));
      g.dy(r, c) = 0.25 * (a(r1, c) - a(r, c) + a(r1, c1) - a(r, c1) + b(r1, c) - b(r, c) + b(r1, c1) - b(r, c1));
      g.dt(r, c) = 0.25 * (b(r, c) - a(r, c) + b(r1, c) - a(r1, c) + b(r, c1) - a(r, c1) + b(r1, c1) - a(r1, c1));
    }
  }
  return g;
}

FlowField horn_schunck(const Image& frame_a, const Image& frame_b, const Mask& mask, const HsConfig& cfg,
                       HsStats* stats) {
  cfg.validate();
  const Gradients g = gradients(frame_a, frame_b);
  require_shape(frame_a.rows(), frame_a.cols(), mask, "horn_schunck mask");
  if (!mask.any()) throw Error(ErrorCode::EmptyMask, "horn_schunck mask is empty");
  if (!frame_a.allFinite() || !frame_b.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "horn_schunck frames contain NaN or Inf");
  }

  const Graph graph = build_graph(mask);
  const std::size_t n = graph.pixels.size();
  const double alpha2 = cfg.alpha * cfg.alpha;

  std::vector<double> iy(n), ix(n), it(n), denom(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = graph.pixels[k];
    iy[k] = g.dy(p / g.dy.cols(), p % g.dy.cols());
    ix[k] = g.dx(p / g.dx.cols(), p % g.dx.cols());
    it[k] = g.dt(p / g.dt.cols(), p % g.dt.cols());
    denom[k] = alpha2 * graph.weight_sum[k] + ix[k] * ix[k] + iy[k] * iy[k];
  }

  std::vector<double> u(n, 0.0), v(n, 0.0), u_next(n), v_next(n);
  HsStats local;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    double update = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double ubar = 0.0;
      double vbar = 0.0;
      if (graph.weight_sum[k] > 0.0) {
        for (auto l = graph.offsets[k]; l < graph.offsets[k + 1]; ++l) {
          ubar += graph.links[l].second * u[graph.links[l].first];
          vbar += graph.links[l].second * v[graph.links[l].first];
        }
        ubar /= graph.weight_sum[k];
        vbar /= graph.weight_sum[k];
      }
      double un = ubar;
      double vn = vbar;
      if (denom[k] > 0.0) {
        const double resid = (iy[k] * ubar + ix[k] * vbar + it[k]) / denom[k];
        un -= iy[k] * resid;
        vn -= ix[k] * resid;
      }
      update += std::hypot(un - u[k], vn - v[k]);
      u_next[k] = un;
      v_next[k] = vn;
    }
    u.swap(u_next);
    v.swap(v_next);
    local.iterations = iter + 1;
    local.last_update = update / static_cast<double>(n);
    if (local.last_update < cfg.tol) {
      local.converged = true;
      break;
    }
  }

  FlowField out = FlowField::zeros(mask);
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = graph.pixels[k];
    out.u(p / out.u.cols(), p % out.u.cols()) = u[k];
    out.v(p / out.v.cols(), p % out.v.cols()) = v[k];
  }
  if (stats != nullptr) *stats = local;
  return out;
}

double hs_energy(const FlowField& field, const Gradients& grads, const Mask& mask, double alpha) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  double data = 0.0;
  double smooth = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      const double e = grads.dy(r, c) * field.u(r, c) + grads.dx(r, c) * field.v(r, c) + grads.dt(r, c);
      data += e * e;
      // Each unordered pair once: forward half of the stencil.
      for (const auto& n : {Neighbour{1, 0, kEdge}, Neighbour{0, 1, kEdge}, Neighbour{1, 1, kDiag},
                            Neighbour{1, -1, kDiag}}) {
        const Eigen::Index rr = r + n.dr;
        const Eigen::Index cc = c + n.dc;
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols || !mask(rr, cc)) continue;
        const double du = field.u(r, c) - field.u(rr, cc);
        const double dv = field.v(r, c) - field.v(rr, cc);
        smooth += n.w * (du * du + dv * dv);
      }
    }
  }
  return data + alpha * alpha * smooth;
}

std::pair<FlowSequence, FlowSequence> flow_sequence(const Stack& frames, double fs, const Mask& left,
                                                    const Mask& right, const HsConfig& cfg) {
  if (frames.frames() < 2) throw Error(ErrorCode::InvalidArgument, "flow_sequence needs at least 2 frames");
  require_shape(frames.rows(), frames.cols(), left, "left mask");
  require_shape(frames.rows(), frames.cols(), right, "right mask");
  cfg.validate();

  const auto pairs = static_cast<std::size_t>(frames.frames() - 1);
  FlowSequence seq_left{std::vector<FlowField>(pairs), fs};
  FlowSequence seq_right{std::vector<FlowField>(pairs), fs};
  // Jobs 0..pairs-1 are the left hemisphere, pairs..2*pairs-1 the right.
  parallel_for(2 * pairs, [&](std::size_t job) {
    const std::size_t t = job % pairs;
    const bool is_left = job < pairs;
    const Image a = frames.frame(static_cast<std::ptrdiff_t>(t));
    const Image b = frames.frame(static_cast<std::ptrdiff_t>(t) + 1);
    auto& slot = is_left ? seq_left.fields[t] : seq_right.fields[t];
    slot = horn_schunck(a, b, is_left ? left : right, cfg);
  });
  return {std::move(seq_left), std::move(seq_right)};
}

std::pair<FlowSequence, FlowSequence> flow_sequence(const signal::Event& event, double fs, const Mask& left,
                                                    const Mask& right, const HsConfig& cfg) {
  return flow_sequence(event.dffw, fs, left, right, cfg);
}

}  // namespace slowwave::flow
