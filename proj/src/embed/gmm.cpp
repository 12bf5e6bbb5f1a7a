#include "slowwave/embed/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "slowwave/core/error.hpp"
#include "slowwave/core/random.hpp"

namespace slowwave::embed {

using Eigen::Matrix2d;
using Eigen::Matrix2Xd;
using Eigen::Vector2d;

void GmmConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "GMM needs at least one component");
  if (!(reg_eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "reg_eps must be positive");
  if (!(tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be non-negative");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be positive");
}

namespace {

double gaussian_log_density(const Vector2d& mean, const Matrix2d& cov, const Vector2d& x) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  const Vector2d d = x - mean;
  // Quadratic form with the closed-form 2x2 inverse.
  const double q = (cov(1, 1) * d(0) * d(0) - (cov(0, 1) + cov(1, 0)) * d(0) * d(1) + cov(0, 0) * d(1) * d(1)) / det;
  return -0.5 * q - 0.5 * std::log(det) - std::log(2.0 * std::numbers::pi);
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// k-means++ seeding.
std::vector<Vector2d> seed_centres(const Matrix2Xd& x, int k, Rng& rng) {
  const auto n = x.cols();
  std::vector<Vector2d> centres{x.col(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))))};
  Eigen::VectorXd d2 = (x.colwise() - centres[0]).colwise().squaredNorm().transpose();
  while (static_cast<int>(centres.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centres.push_back(x.col(pick));
    d2 = d2.cwiseMin((x.colwise() - centres.back()).colwise().squaredNorm().transpose());
  }
  return centres;
}

}  // namespace

double Gmm::component_log_density(int j, const Vector2d& x) const {
  return gaussian_log_density(means[static_cast<std::size_t>(j)], covariances[static_cast<std::size_t>(j)], x);
}

double Gmm::log_density(const Vector2d& x) const {
  Eigen::VectorXd terms(k());
  for (int j = 0; j < k(); ++j) terms(j) = std::log(weights[static_cast<std::size_t>(j)]) + component_log_density(j, x);
  return log_sum_exp(terms);
}

Gmm gmm_fit(const Matrix2Xd& x, const GmmConfig& cfg) {
  cfg.validate();
  const auto n = x.cols();
  if (n == 0) throw Error(ErrorCode::InsufficientSamples, "no samples to fit");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteInput, "embeddings contain non-finite values");
  Gmm g;
  g.requested_k = cfg.k;
  const int k = static_cast<int>(std::min<Eigen::Index>(cfg.k, n));
  g.reduced = k < cfg.k;

  Rng rng(cfg.seed);
  const Vector2d mu = x.rowwise().mean();
  const Matrix2Xd centred = x.colwise() - mu;
  const Matrix2d global = centred * centred.transpose() / static_cast<double>(n) + cfg.reg_eps * Matrix2d::Identity();
  g.means = seed_centres(x, k, rng);
  g.covariances.assign(static_cast<std::size_t>(k), global);
  g.weights.assign(static_cast<std::size_t>(k), 1.0 / k);

  Eigen::MatrixXd resp(k, n);
  auto e_step = [&]() {
    double ll = 0.0;
    Eigen::VectorXd terms(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) terms(j) = std::log(g.weights[static_cast<std::size_t>(j)]) + g.component_log_density(j, x.col(i));
      const double lse = log_sum_exp(terms);
      resp.col(i) = (terms.array() - lse).exp();
      ll += lse;
    }
    return ll / static_cast<double>(n);
  };

  double prev = e_step();
  for (int it = 0; it < cfg.max_iters; ++it) {
    for (int j = 0; j < k; ++j) {
      const auto r = resp.row(j);
      const double nk = r.sum();
      const auto sj = static_cast<std::size_t>(j);
      if (!(nk > 0.0)) {
        // Empty component: keep its mean, fall back to the global spread.
        g.weights[sj] = 0.0;
        g.covariances[sj] = global;
        continue;
      }
      g.weights[sj] = nk / static_cast<double>(n);
      g.means[sj] = (x * r.transpose()) / nk;
      const Matrix2Xd d = x.colwise() - g.means[sj];
      Matrix2d cov = (d * r.asDiagonal() * d.transpose()) / nk;
      cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
      g.covariances[sj] = cov + cfg.reg_eps * Matrix2d::Identity();
    }
    const double ll = e_step();
    g.log_likelihood.push_back(ll);
    if (ll - prev < cfg.tol) {
      g.converged = true;
      break;
    }
    prev = ll;
  }
  return g;
}

std::map<std::string, Gmm> gmm_fit(const Matrix2Xd& points, const std::vector<std::string>& conditions,
                                   const GmmConfig& cfg) {
  if (static_cast<std::size_t>(points.cols()) != conditions.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one condition label per embedding");
  }
  std::map<std::string, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < conditions.size(); ++i) groups[conditions[i]].push_back(static_cast<Eigen::Index>(i));
  std::map<std::string, Gmm> out;
  for (const auto& [label, idx] : groups) {
    Matrix2Xd sub(2, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = points.col(idx[i]);
    out.emplace(label, gmm_fit(sub, cfg));
  }
  return out;
}

std::vector<Prototype> prototypes(const std::map<std::string, Gmm>& models, const Matrix2Xd& embeddings,
                                  const std::vector<std::string>& conditions) {
  if (static_cast<std::size_t>(embeddings.cols()) != conditions.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one condition label per embedding");
  }
  std::vector<Prototype> out;
  for (const auto& [label, g] : models) {
    for (int j = 0; j < g.k(); ++j) {
      Prototype best{label, j, 0, -std::numeric_limits<double>::infinity()};
      bool found = false;
      for (std::size_t i = 0; i < conditions.size(); ++i) {
        if (conditions[i] != label) continue;
        const double ld = g.component_log_density(j, embeddings.col(static_cast<Eigen::Index>(i)));
        if (!found || ld > best.log_density) {
          best.event = i;
          best.log_density = ld;
          found = true;
        }
      }
      if (found) out.push_back(best);
    }
  }
  return out;
}

}  // namespace slowwave::embed
