#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slowwave::embed {

struct GmmConfig {
  int k = 3;
  double reg_eps = 1e-6;  // added to covariance diagonals
  double tol = 1e-6;      // on the mean per-sample log-likelihood
  int max_iters = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Gmm {
  std::vector<double> weights;
  std::vector<Eigen::Vector2d> means;
  std::vector<Eigen::Matrix2d> covariances;
  int requested_k = 0;
  bool reduced = false;                 // fewer samples than requested components
  std::vector<double> log_likelihood;   // mean per-sample, after each EM iteration
  bool converged = false;

  int k() const { return static_cast<int>(weights.size()); }
  double component_log_density(int j, const Eigen::Vector2d& x) const;
  double log_density(const Eigen::Vector2d& x) const;
};

/// points: 2 x n.
Gmm gmm_fit(const Eigen::Matrix2Xd& points, const GmmConfig& cfg = {});

/// One mixture per condition label; conditions run in sorted label order.
std::map<std::string, Gmm> gmm_fit(const Eigen::Matrix2Xd& points, const std::vector<std::string>& conditions,
                                   const GmmConfig& cfg = {});

struct Prototype {
  std::string condition;
  int component = 0;
  std::size_t event = 0;  // column index into the embeddings
  double log_density = 0.0;
};

/// For every condition and component, the event of that condition whose embedding has the highest
/// component density; ties go to the lowest index.
std::vector<Prototype> prototypes(const std::map<std::string, Gmm>& models, const Eigen::Matrix2Xd& embeddings,
                                  const std::vector<std::string>& conditions);

}  // namespace slowwave::embed
