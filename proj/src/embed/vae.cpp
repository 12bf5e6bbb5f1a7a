#include "slowwave/embed/vae.hpp"

#include <cmath>
#include <numeric>

#include "slowwave/core/error.hpp"

namespace slowwave::embed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Index VaeSpec::input_dim() const {
  Eigen::Index d = 0;
  for (const auto& s : inputs) d += s.length;
  return d;
}

void VaeSpec::validate() const {
  if (inputs.empty()) throw Error(ErrorCode::InvalidArgument, "VAE needs at least one input stream");
  for (const auto& s : inputs) {
    if (s.length <= 0) throw Error(ErrorCode::InvalidArgument, "stream '" + s.name + "' has no elements");
    if (!(s.weight > 0.0)) throw Error(ErrorCode::InvalidArgument, "stream '" + s.name + "' needs a positive weight");
  }
  if (hidden_sizes.empty()) throw Error(ErrorCode::InvalidArgument, "VAE needs hidden layers");
  for (auto h : hidden_sizes)
    if (h <= 0) throw Error(ErrorCode::InvalidArgument, "hidden sizes must be positive");
  if (latent_dim <= 0) throw Error(ErrorCode::InvalidArgument, "latent_dim must be positive");
}

std::size_t VaeParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

bool VaeParams::finite() const {
  for (const auto& l : layers)
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  return true;
}

namespace {

Dense make_layer(Eigen::Index in, Eigen::Index out, Rng& rng) {
  Dense d{MatrixXd(out, in), VectorXd::Zero(out)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (Eigen::Index c = 0; c < in; ++c)
    for (Eigen::Index r = 0; r < out; ++r) d.W(r, c) = rng.uniform(-limit, limit);
  return d;
}

MatrixXd affine(const Dense& d, const MatrixXd& x) { return (d.W * x).colwise() + d.b; }

MatrixXd relu(const MatrixXd& a) { return a.cwiseMax(0.0); }

// Activations kept for the backward pass.
struct Trace {
  std::vector<MatrixXd> enc;  // enc[0] = input, enc[l] = output of hidden layer l
  MatrixXd z_mean;
  MatrixXd z_logvar;
  MatrixXd z;
  MatrixXd noise;
  std::vector<MatrixXd> dec;  // dec[0] = z, dec[l] = output of decoder layer l
  std::vector<MatrixXd> recon;
};

void check_batch(const VaeParams& p, const MatrixXd& batch, const MatrixXd& noise) {
  if (batch.rows() != p.spec.input_dim()) throw Error(ErrorCode::ShapeMismatch, "batch rows do not match the input streams");
  if (noise.rows() != p.spec.latent_dim || noise.cols() != batch.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "noise must be latent_dim x batch");
  }
  if (!p.finite()) throw Error(ErrorCode::NonFiniteParams, "VAE parameters contain non-finite values");
}

MatrixXd encoder_top(const VaeParams& p, const MatrixXd& x, std::vector<MatrixXd>* keep) {
  MatrixXd h = x;
  if (keep) keep->push_back(h);
  for (std::size_t l = 0; l < p.n_hidden(); ++l) {
    h = relu(affine(p.layers[l], h));
    if (keep) keep->push_back(h);
  }
  return h;
}

std::vector<MatrixXd> decoder(const VaeParams& p, const MatrixXd& z, std::vector<MatrixXd>* keep) {
  MatrixXd g = z;
  if (keep) keep->push_back(g);
  for (std::size_t l = 0; l < p.n_hidden(); ++l) {
    g = relu(affine(p.layers[p.decoder_begin() + l], g));
    if (keep) keep->push_back(g);
  }
  std::vector<MatrixXd> out;
  for (std::size_t s = 0; s < p.spec.inputs.size(); ++s) out.push_back(affine(p.layers[p.heads_begin() + s], g));
  return out;
}

Trace forward(const VaeParams& p, const MatrixXd& batch, const MatrixXd& noise) {
  Trace t;
  const MatrixXd h = encoder_top(p, batch, &t.enc);
  t.z_mean = affine(p.mean_head(), h);
  t.z_logvar = affine(p.logvar_head(), h);
  t.noise = noise;
  t.z = t.z_mean + ((0.5 * t.z_logvar.array()).exp() * noise.array()).matrix();
  t.recon = decoder(p, t.z, &t.dec);
  return t;
}

// Back through y = relu(W x + b) given dL/dy, writing parameter gradients and returning dL/dx.
MatrixXd relu_back(const Dense& layer, const MatrixXd& x, const MatrixXd& y, const MatrixXd& dy, Dense& g) {
  const MatrixXd da = (y.array() > 0.0).select(dy, 0.0);
  g.W = da * x.transpose();
  g.b = da.rowwise().sum();
  return layer.W.transpose() * da;
}

}  // namespace

VaeParams init_params(const VaeSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  VaeParams p;
  p.spec = spec;
  Eigen::Index width = spec.input_dim();
  for (auto h : spec.hidden_sizes) {
    p.layers.push_back(make_layer(width, h, rng));
    width = h;
  }
  p.layers.push_back(make_layer(width, spec.latent_dim, rng));
  p.layers.push_back(make_layer(width, spec.latent_dim, rng));
  width = spec.latent_dim;
  for (auto it = spec.hidden_sizes.rbegin(); it != spec.hidden_sizes.rend(); ++it) {
    p.layers.push_back(make_layer(width, *it, rng));
    width = *it;
  }
  for (const auto& s : spec.inputs) p.layers.push_back(make_layer(width, s.length, rng));
  return p;
}

std::vector<MatrixXd> split_streams(const VaeSpec& spec, const MatrixXd& batch) {
  std::vector<MatrixXd> out;
  Eigen::Index row = 0;
  for (const auto& s : spec.inputs) {
    out.push_back(batch.middleRows(row, s.length));
    row += s.length;
  }
  return out;
}

VaeOutput vae_forward(const VaeParams& params, const MatrixXd& batch, const MatrixXd& noise) {
  check_batch(params, batch, noise);
  Trace t = forward(params, batch, noise);
  return {std::move(t.z_mean), std::move(t.z_logvar), std::move(t.z), std::move(t.recon)};
}

double kl_loss(const MatrixXd& z_mean, const MatrixXd& z_logvar) {
  const auto terms = z_logvar.array().exp() + z_mean.array().square() - 1.0 - z_logvar.array();
  return 0.5 * terms.sum() / static_cast<double>(z_mean.cols());
}

double vae_loss(const MatrixXd& z_mean, const MatrixXd& z_logvar, const std::vector<MatrixXd>& reconstructions,
                const std::vector<MatrixXd>& targets, const std::vector<double>& weights) {
  if (reconstructions.size() != targets.size() || weights.size() != targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one reconstruction, target and weight per stream");
  }
  double loss = kl_loss(z_mean, z_logvar);
  for (std::size_t s = 0; s < targets.size(); ++s) {
    if (reconstructions[s].rows() != targets[s].rows() || reconstructions[s].cols() != targets[s].cols()) {
      throw Error(ErrorCode::ShapeMismatch, "reconstruction and target shapes differ");
    }
    loss += weights[s] * (reconstructions[s] - targets[s]).squaredNorm() / static_cast<double>(targets[s].size());
  }
  return loss;
}

namespace {

std::vector<double> stream_weights(const VaeSpec& spec) {
  std::vector<double> w;
  for (const auto& s : spec.inputs) w.push_back(s.weight);
  return w;
}

}  // namespace

double loss_and_gradient(const VaeParams& p, const MatrixXd& batch, const MatrixXd& noise, VaeParams& grad) {
  check_batch(p, batch, noise);
  const Trace t = forward(p, batch, noise);
  const auto targets = split_streams(p.spec, batch);
  const double loss = vae_loss(t.z_mean, t.z_logvar, t.recon, targets, stream_weights(p.spec));
  const double inv_b = 1.0 / static_cast<double>(batch.cols());

  grad.spec = p.spec;
  grad.layers.resize(p.layers.size());
  const std::size_t nh = p.n_hidden();

  // Output heads.
  MatrixXd dg = MatrixXd::Zero(t.dec.back().rows(), batch.cols());
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const MatrixXd dr = (2.0 * p.spec.inputs[s].weight / static_cast<double>(targets[s].size())) * (t.recon[s] - targets[s]);
    const Dense& head = p.layers[p.heads_begin() + s];
    Dense& g = grad.layers[p.heads_begin() + s];
    g.W = dr * t.dec.back().transpose();
    g.b = dr.rowwise().sum();
    dg += head.W.transpose() * dr;
  }
  // Decoder.
  for (std::size_t l = nh; l-- > 0;) {
    const std::size_t idx = p.decoder_begin() + l;
    dg = relu_back(p.layers[idx], t.dec[l], t.dec[l + 1], dg, grad.layers[idx]);
  }
  // Reparameterization and KL.
  const auto sd = (0.5 * t.z_logvar.array()).exp();
  const MatrixXd dmu = dg + inv_b * t.z_mean;
  const MatrixXd dlv = (dg.array() * t.noise.array() * 0.5 * sd + 0.5 * inv_b * (t.z_logvar.array().exp() - 1.0)).matrix();
  const MatrixXd& top = t.enc.back();
  grad.mean_head().W = dmu * top.transpose();
  grad.mean_head().b = dmu.rowwise().sum();
  grad.logvar_head().W = dlv * top.transpose();
  grad.logvar_head().b = dlv.rowwise().sum();
  MatrixXd dh = p.mean_head().W.transpose() * dmu + p.logvar_head().W.transpose() * dlv;
  // Encoder.
  for (std::size_t l = nh; l-- > 0;) dh = relu_back(p.layers[l], t.enc[l], t.enc[l + 1], dh, grad.layers[l]);
  return loss;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "moment decays must lie in [0, 1)");
  }
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be non-negative");
}

namespace {

MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

struct Adam {
  std::vector<Dense> m;
  std::vector<Dense> v;
  long step = 0;

  explicit Adam(const VaeParams& p) {
    for (const auto& l : p.layers) {
      m.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()), VectorXd::Zero(l.b.size())});
      v.push_back(m.back());
    }
  }

  void apply(VaeParams& p, const VaeParams& g, const OptimizerConfig& o) {
    ++step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
    const double lr = o.learning_rate * std::sqrt(c2) / c1;
    const double eps = o.epsilon * std::sqrt(c2);
    auto update = [&](auto& param, auto& mom, auto& vel, const auto& gr) {
      mom = o.beta1 * mom + (1.0 - o.beta1) * gr;
      vel = o.beta2 * vel + (1.0 - o.beta2) * gr.cwiseProduct(gr);
      param.array() -= lr * mom.array() / (vel.array().sqrt() + eps);
    };
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      update(p.layers[i].W, m[i].W, v[i].W, g.layers[i].W);
      update(p.layers[i].b, m[i].b, v[i].b, g.layers[i].b);
    }
  }
};

}  // namespace

double dataset_loss(const VaeParams& params, const MatrixXd& dataset, std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  const MatrixXd noise = normal_matrix(rng, params.spec.latent_dim, dataset.cols());
  const VaeOutput out = vae_forward(params, dataset, noise);
  return vae_loss(out.z_mean, out.z_logvar, out.reconstructions, split_streams(params.spec, dataset),
                  stream_weights(params.spec));
}

TrainResult vae_train(const VaeSpec& spec, const MatrixXd& dataset, const OptimizerConfig& opt) {
  opt.validate();
  if (dataset.cols() == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (!dataset.allFinite()) throw Error(ErrorCode::NonFiniteInput, "training data contains non-finite values");
  TrainResult res{init_params(spec), {}, 0.0};
  if (dataset.rows() != spec.input_dim()) throw Error(ErrorCode::ShapeMismatch, "dataset rows do not match the input streams");

  // One stream drives init (inside init_params); this one drives shuffling and noise.
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  res.initial_loss = dataset_loss(res.params, dataset, spec.seed);
  Adam adam(res.params);
  VaeParams grad;
  const auto n = static_cast<std::size_t>(dataset.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t len = std::min(opt.batch_size, n - start);
      MatrixXd batch(dataset.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) batch.col(static_cast<Eigen::Index>(j)) = dataset.col(order[start + j]);
      const MatrixXd noise = normal_matrix(rng, spec.latent_dim, batch.cols());
      const double loss = loss_and_gradient(res.params, batch, noise, grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      total += loss * static_cast<double>(len);
      adam.apply(res.params, grad, opt);
    }
    res.loss_history.push_back(total / static_cast<double>(n));
  }
  return res;
}

MatrixXd encode(const VaeParams& params, const MatrixXd& inputs) {
  if (inputs.rows() != params.spec.input_dim()) throw Error(ErrorCode::ShapeMismatch, "input rows do not match the streams");
  return affine(params.mean_head(), encoder_top(params, inputs, nullptr));
}

std::vector<MatrixXd> decode(const VaeParams& params, const MatrixXd& z) {
  if (z.rows() != params.spec.latent_dim) throw Error(ErrorCode::ShapeMismatch, "latent rows do not match latent_dim");
  return decoder(params, z, nullptr);
}

std::vector<double> reconstruction_correlation(const VaeParams& params, const MatrixXd& dataset) {
  const auto recon = decode(params, encode(params, dataset));
  const auto targets = split_streams(params.spec, dataset);
  std::vector<double> out;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const Eigen::ArrayXd a = recon[s].reshaped().array() - recon[s].mean();
    const Eigen::ArrayXd b = targets[s].reshaped().array() - targets[s].mean();
    const double den = std::sqrt((a * a).sum() * (b * b).sum());
    out.push_back(den > 0.0 ? (a * b).sum() / den : 0.0);
  }
  return out;
}

Manifold reconstruction_manifold(const VaeParams& params, const GridSpec& grid) {
  if (grid.n <= 0) throw Error(ErrorCode::InvalidArgument, "grid size must be positive");
  if (params.spec.latent_dim < 2) throw Error(ErrorCode::InvalidArgument, "manifold needs a 2-D latent space");
  Manifold m;
  m.n = grid.n;
  m.points = MatrixXd::Zero(params.spec.latent_dim, grid.n * grid.n);
  auto coord = [&](Eigen::Index i) {
    if (grid.n == 1) return 0.5 * (grid.lo + grid.hi);
    return grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) / static_cast<double>(grid.n - 1);
  };
  for (Eigen::Index r = 0; r < grid.n; ++r)
    for (Eigen::Index c = 0; c < grid.n; ++c) {
      m.points(0, r * grid.n + c) = coord(c);
      m.points(1, r * grid.n + c) = coord(grid.n - 1 - r);
    }
  m.streams = decode(params, m.points);
  return m;
}

}  // namespace slowwave::embed
