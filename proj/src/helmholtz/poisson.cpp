#include <array>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "slowwave/helmholtz/helmholtz.hpp"

namespace slowwave::helmholtz {
namespace {

using Labels = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::array<std::array<int, 2>, 4> kFour{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

// Unknowns are the in-mask pixels in row-major order.
struct Domain {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<Eigen::Index> pixel;      // unknown -> linear index
  std::vector<std::ptrdiff_t> unknown;  // linear index -> unknown or -1
  std::vector<int> component;           // unknown -> component label
  int components = 0;

  bool inside(Eigen::Index r, Eigen::Index c) const {
    return r >= 0 && r < rows && c >= 0 && c < cols && unknown[static_cast<std::size_t>(r * cols + c)] >= 0;
  }
};

Domain make_domain(const Mask& mask) {
  Domain d;
  d.rows = mask.rows();
  d.cols = mask.cols();
  d.unknown.assign(static_cast<std::size_t>(d.rows * d.cols), -1);
  for (Eigen::Index r = 0; r < d.rows; ++r) {
    for (Eigen::Index c = 0; c < d.cols; ++c) {
      if (mask(r, c)) {
        d.unknown[static_cast<std::size_t>(r * d.cols + c)] = static_cast<std::ptrdiff_t>(d.pixel.size());
        d.pixel.push_back(r * d.cols + c);
      }
    }
  }
  Labels labels;
  d.components = label_components(mask, labels);
  d.component.reserve(d.pixel.size());
  for (const auto p : d.pixel) d.component.push_back(labels(p / d.cols, p % d.cols));
  return d;
}

// y = -laplacian(x) restricted to unknowns (boundary values excluded), which is SPD for
// Dirichlet and PSD with per-component constant null space for Neumann.
void apply_negative_laplacian(const Domain& d, Boundary bc, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t k = 0; k < d.pixel.size(); ++k) {
    const Eigen::Index r = d.pixel[k] / d.cols;
    const Eigen::Index c = d.pixel[k] % d.cols;
    double acc = 0.0;
    double diag = 0.0;
    for (const auto& o : kFour) {
      const Eigen::Index rr = r + o[0];
      const Eigen::Index cc = c + o[1];
      if (d.inside(rr, cc)) {
        acc -= x[static_cast<std::size_t>(d.unknown[static_cast<std::size_t>(rr * d.cols + cc)])];
        diag += 1.0;
      } else if (bc == Boundary::Dirichlet) {
        diag += 1.0;
      }
    }
    y[k] = acc + diag * x[k];
  }
}

double diagonal(const Domain& d, Boundary bc, std::size_t k) {
  if (bc == Boundary::Dirichlet) return 4.0;
  const Eigen::Index r = d.pixel[k] / d.cols;
  const Eigen::Index c = d.pixel[k] % d.cols;
  double diag = 0.0;
  for (const auto& o : kFour) diag += d.inside(r + o[0], c + o[1]) ? 1.0 : 0.0;
  return diag;
}

void remove_component_means(const Domain& d, std::vector<double>& x) {
  std::vector<double> sum(static_cast<std::size_t>(d.components), 0.0);
  std::vector<double> cnt(static_cast<std::size_t>(d.components), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) {
    sum[static_cast<std::size_t>(d.component[k])] += x[k];
    cnt[static_cast<std::size_t>(d.component[k])] += 1.0;
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto c = static_cast<std::size_t>(d.component[k]);
    x[k] -= sum[c] / cnt[c];
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

int label_components(const Mask& mask, Labels& labels) {
  labels = Labels::Constant(mask.rows(), mask.cols(), -1);
  int next = 0;
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  for (Eigen::Index r0 = 0; r0 < mask.rows(); ++r0) {
    for (Eigen::Index c0 = 0; c0 < mask.cols(); ++c0) {
      if (!mask(r0, c0) || labels(r0, c0) >= 0) continue;
      labels(r0, c0) = next;
      queue.emplace_back(r0, c0);
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        for (const auto& o : kFour) {
          const Eigen::Index rr = r + o[0];
          const Eigen::Index cc = c + o[1];
          if (rr < 0 || rr >= mask.rows() || cc < 0 || cc >= mask.cols()) continue;
          if (!mask(rr, cc) || labels(rr, cc) >= 0) continue;
          labels(rr, cc) = next;
          queue.emplace_back(rr, cc);
        }
      }
      ++next;
    }
  }
  return next;
}

Image laplacian(const Image& x, const Mask& mask, Boundary bc, const Image* boundary) {
  if (!same_shape(x, mask)) throw Error(ErrorCode::ShapeMismatch, "laplacian operand and mask differ");
  if (boundary != nullptr && !same_shape(*boundary, mask)) {
    throw Error(ErrorCode::ShapeMismatch, "boundary values and mask differ");
  }
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  Image out = Image::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      double acc = 0.0;
      for (const auto& o : kFour) {
        const Eigen::Index rr = r + o[0];
        const Eigen::Index cc = c + o[1];
        const bool on_image = rr >= 0 && rr < rows && cc >= 0 && cc < cols;
        if (on_image && mask(rr, cc)) {
          acc += x(rr, cc) - x(r, c);
        } else if (bc == Boundary::Dirichlet) {
          const double g = (on_image && boundary != nullptr) ? (*boundary)(rr, cc) : 0.0;
          acc += g - x(r, c);
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

Image poisson_solve(const Image& rhs, const Mask& mask, Boundary bc, const SolverConfig& cfg, const Image* boundary,
                    SolveReport* report) {
  if (!same_shape(rhs, mask)) throw Error(ErrorCode::ShapeMismatch, "poisson rhs and mask differ");
  if (boundary != nullptr && !same_shape(*boundary, mask)) {
    throw Error(ErrorCode::ShapeMismatch, "boundary values and mask differ");
  }
  const Domain d = make_domain(mask);
  const std::size_t n = d.pixel.size();
  SolveReport local;
  local.components = d.components;
  Image out = Image::Zero(mask.rows(), mask.cols());
  if (n == 0) {
    if (report != nullptr) *report = local;
    return out;
  }

  // System: (-L) x = b.
  std::vector<double> b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = -rhs(d.pixel[k] / d.cols, d.pixel[k] % d.cols);
  if (bc == Boundary::Neumann) {
    remove_component_means(d, b);
  } else if (boundary != nullptr) {
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Index r = d.pixel[k] / d.cols;
      const Eigen::Index c = d.pixel[k] % d.cols;
      for (const auto& o : kFour) {
        const Eigen::Index rr = r + o[0];
        const Eigen::Index cc = c + o[1];
        const bool on_image = rr >= 0 && rr < d.rows && cc >= 0 && cc < d.cols;
        if (on_image && !mask(rr, cc)) b[k] += (*boundary)(rr, cc);
      }
    }
  }

  std::vector<double> inv_diag(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double dk = diagonal(d, bc, k);
    inv_diag[k] = dk > 0.0 ? 1.0 / dk : 0.0;
  }

  const double b_norm = std::sqrt(dot(b, b));
  std::vector<double> x(n, 0.0);
  if (b_norm == 0.0) {
    if (report != nullptr) *report = local;
    return out;
  }

  std::vector<double> r = b;
  std::vector<double> z(n), p(n), ap(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
  p = z;
  double rz = dot(r, z);
  const double target = cfg.cg_tol * b_norm;
  const auto cap = static_cast<long long>(std::ceil(cfg.max_iters_per_pixel * static_cast<double>(n)));
  long long iter = 0;
  double r_norm = b_norm;
  while (r_norm > target) {
    if (iter >= cap) {
      throw Error(ErrorCode::NoConvergence, "CG hit the iteration cap (" + std::to_string(cap) +
                                                ") at relative residual " + std::to_string(r_norm / b_norm));
    }
    apply_negative_laplacian(d, bc, p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;  // residual already in the null space to round-off
    const double step = rz / pap;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += step * p[k];
      r[k] -= step * ap[k];
    }
    if (bc == Boundary::Neumann) remove_component_means(d, r);
    for (std::size_t k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    r_norm = std::sqrt(dot(r, r));
    ++iter;
  }
  if (bc == Boundary::Neumann) remove_component_means(d, x);

  // True residual of the returned iterate.
  apply_negative_laplacian(d, bc, x, ap);
  double res = 0.0;
  for (std::size_t k = 0; k < n; ++k) res += (ap[k] - b[k]) * (ap[k] - b[k]);
  local.iterations = static_cast<int>(iter);
  local.relative_residual = std::sqrt(res) / b_norm;

  for (std::size_t k = 0; k < n; ++k) out(d.pixel[k] / d.cols, d.pixel[k] % d.cols) = x[k];
  if (report != nullptr) *report = local;
  return out;
}

}  // namespace slowwave::helmholtz
