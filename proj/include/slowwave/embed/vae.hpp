#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowwave/core/random.hpp"

namespace slowwave::embed {

struct Stream {
  std::string name;
  Eigen::Index length = 0;
  double weight = 1.0;  // p_i in the loss
};

struct VaeSpec {
  std::vector<Stream> inputs;
  std::vector<Eigen::Index> hidden_sizes{256, 128, 64, 32, 16, 8};
  Eigen::Index latent_dim = 2;
  std::uint64_t seed = 0;

  Eigen::Index input_dim() const;
  void validate() const;
};

/// y = W x + b on column-batched inputs.
struct Dense {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/// Layer order: encoder hidden layers, mean head, log-variance head, decoder hidden layers
/// (mirrored widths), one linear output head per stream.
struct VaeParams {
  VaeSpec spec;
  std::vector<Dense> layers;

  std::size_t n_hidden() const { return spec.hidden_sizes.size(); }
  Dense& mean_head() { return layers[n_hidden()]; }
  Dense& logvar_head() { return layers[n_hidden() + 1]; }
  const Dense& mean_head() const { return layers[n_hidden()]; }
  const Dense& logvar_head() const { return layers[n_hidden() + 1]; }
  std::size_t decoder_begin() const { return n_hidden() + 2; }
  std::size_t heads_begin() const { return 2 * n_hidden() + 2; }
  std::size_t parameter_count() const;
  bool finite() const;
};

/// Glorot-uniform weights and zero biases from spec.seed.
VaeParams init_params(const VaeSpec& spec);

/// Batches are column-major: one sample per column, streams stacked in spec order.
struct VaeOutput {
  Eigen::MatrixXd z_mean;
  Eigen::MatrixXd z_logvar;
  Eigen::MatrixXd z;
  std::vector<Eigen::MatrixXd> reconstructions;  // one per stream, length x batch
};

VaeOutput vae_forward(const VaeParams& params, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise);

/// Split a stacked batch into per-stream blocks.
std::vector<Eigen::MatrixXd> split_streams(const VaeSpec& spec, const Eigen::MatrixXd& batch);

double kl_loss(const Eigen::MatrixXd& z_mean, const Eigen::MatrixXd& z_logvar);
/// KL (batch mean) + sum_i p_i * MSE_i (mean over elements).
double vae_loss(const Eigen::MatrixXd& z_mean, const Eigen::MatrixXd& z_logvar,
                const std::vector<Eigen::MatrixXd>& reconstructions, const std::vector<Eigen::MatrixXd>& targets,
                const std::vector<double>& weights);

/// Loss and its gradient with respect to every parameter (same layout as params).
double loss_and_gradient(const VaeParams& params, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise,
                         VaeParams& grad);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  int epochs = 500;

  void validate() const;
};

struct TrainResult {
  VaeParams params;
  std::vector<double> loss_history;  // mean minibatch loss per epoch
  double initial_loss = 0.0;         // full-data loss before the first step
};

/// dataset: input_dim x n_samples. Throws DivergedLoss on a non-finite loss.
TrainResult vae_train(const VaeSpec& spec, const Eigen::MatrixXd& dataset, const OptimizerConfig& opt = {});

/// Full-data loss with a fixed noise draw.
double dataset_loss(const VaeParams& params, const Eigen::MatrixXd& dataset, std::uint64_t noise_seed);

/// z_mean for each column.
Eigen::MatrixXd encode(const VaeParams& params, const Eigen::MatrixXd& inputs);
/// Decoder outputs per stream for latent codes given as columns.
std::vector<Eigen::MatrixXd> decode(const VaeParams& params, const Eigen::MatrixXd& z);

/// Pearson correlation of reconstruction against target over all elements of each stream.
std::vector<double> reconstruction_correlation(const VaeParams& params, const Eigen::MatrixXd& dataset);

struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  Eigen::Index n = 8;
};

struct Manifold {
  Eigen::Index n = 0;
  Eigen::MatrixXd points;                // latent_dim x n*n, row-major over (z2 descending, z1 ascending)
  std::vector<Eigen::MatrixXd> streams;  // per stream, length x n*n
};

Manifold reconstruction_manifold(const VaeParams& params, const GridSpec& grid = {});

}  // namespace slowwave::embed
