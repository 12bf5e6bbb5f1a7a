#include <doctest.h>

#include <cmath>
#include <numbers>

#include "slowwave/core/error.hpp"
#include "slowwave/embed/dataset.hpp"
#include "slowwave/embed/gmm.hpp"
#include "slowwave/embed/vae.hpp"

using namespace slowwave;
using namespace slowwave::embed;
using Eigen::Matrix2Xd;
using Eigen::MatrixXd;
using Eigen::Vector2d;

namespace {

MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

VaeSpec small_spec(std::uint64_t seed) {
  VaeSpec s;
  s.inputs = {{"a", 3, 1.5}, {"b", 2, 0.5}};
  s.hidden_sizes = {6, 5, 4};
  s.seed = seed;
  return s;
}

// Gaussian bumps whose centre and width are the two latent factors.
MatrixXd bump_traces(Rng& rng, Eigen::Index n, Eigen::Index len) {
  MatrixXd x(len, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = 0.3 + 0.4 * rng.uniform();
    const double s = 0.05 + 0.1 * rng.uniform();
    for (Eigen::Index t = 0; t < len; ++t) {
      const double u = static_cast<double>(t) / static_cast<double>(len - 1);
      x(t, i) = std::exp(-(u - c) * (u - c) / (2.0 * s * s));
    }
  }
  return x;
}

double brute_log_density(const Vector2d& m, const Eigen::Matrix2d& c, const Vector2d& x) {
  const Vector2d d = x - m;
  return -0.5 * d.dot(c.inverse() * d) - 0.5 * std::log(c.determinant()) - std::log(2.0 * std::numbers::pi);
}

}  // namespace

TEST_CASE("vae_forward: hand-computed toy network") {
  VaeSpec spec;
  spec.inputs = {{"x", 2, 1.0}};
  spec.hidden_sizes = {2};
  VaeParams p = init_params(spec);
  for (auto& l : p.layers) {
    l.W = Eigen::Matrix2d::Identity();
    l.b.setZero();
  }
  p.layers[0].b << 0.5, 3.0;
  p.logvar_head().W.setZero();
  p.logvar_head().b.setConstant(-30.0);
  p.layers[p.heads_begin()].W << 2.0, 0.0, 0.0, -1.0;
  p.layers[p.heads_begin()].b << 0.0, 1.0;
  MatrixXd x(2, 1);
  x << 1.0, -2.0;
  MatrixXd noise(2, 1);
  noise << 0.7, -1.1;
  const VaeOutput out = vae_forward(p, x, noise);
  // h = relu((1.5, 1)), z ~ h, decoder relu keeps h, head gives (3, 0).
  CHECK(out.z_mean(0, 0) == 1.5);
  CHECK(out.z_mean(1, 0) == 1.0);
  CHECK(std::abs(out.z(0, 0) - 1.5) < 1e-6);
  CHECK(out.reconstructions[0](0, 0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(out.reconstructions[0](1, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("vae_forward: vanishing variance, determinism and shape errors") {
  VaeParams p = init_params(small_spec(3));
  p.logvar_head().W.setZero();
  p.logvar_head().b.setConstant(-30.0);
  Rng rng(9);
  const MatrixXd x = normal_matrix(rng, 5, 7);
  const VaeOutput a = vae_forward(p, x, normal_matrix(rng, 2, 7));
  CHECK((a.z - a.z_mean).cwiseAbs().maxCoeff() < 1e-5);

  const VaeParams q = init_params(small_spec(3));
  const MatrixXd noise = normal_matrix(rng, 2, 7);
  const VaeOutput b1 = vae_forward(q, x, noise);
  const VaeOutput b2 = vae_forward(q, x, noise);
  CHECK(b1.z == b2.z);
  CHECK(b1.reconstructions[1] == b2.reconstructions[1]);

  CHECK_THROWS_AS(vae_forward(q, normal_matrix(rng, 4, 7), noise), Error);
  CHECK_THROWS_AS(vae_forward(q, x, normal_matrix(rng, 2, 6)), Error);
  VaeParams bad = q;
  bad.layers[1].W(0, 0) = std::nan("");
  try {
    vae_forward(bad, x, noise);
    FAIL("expected NonFiniteParams");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteParams);
  }
}

TEST_CASE("vae_loss: closed forms and linearity") {
  const MatrixXd zero = MatrixXd::Zero(2, 4);
  const std::vector<MatrixXd> t{MatrixXd::Constant(3, 4, 0.3), MatrixXd::Constant(2, 4, -1.0)};
  CHECK(vae_loss(zero, zero, t, t, {1.0, 1.0}) == 0.0);

  MatrixXd shift = MatrixXd::Zero(2, 1);
  shift(0, 0) = 1.0;
  CHECK(kl_loss(shift, MatrixXd::Zero(2, 1)) == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<MatrixXd> r = t;
  r[1](0, 2) += 0.4;
  const double base = vae_loss(zero, zero, r, t, {1.0, 1.0});
  CHECK(base == doctest::Approx(0.16 / 8.0));
  CHECK(vae_loss(zero, zero, r, t, {1.0, 2.0}) == doctest::Approx(2.0 * base));

  Rng rng(4);
  for (int i = 0; i < 50; ++i) CHECK(kl_loss(normal_matrix(rng, 2, 3), normal_matrix(rng, 2, 3)) >= 0.0);
}

TEST_CASE("loss gradient matches central differences") {
  const VaeParams p = init_params(small_spec(21));
  Rng rng(22);
  const MatrixXd x = normal_matrix(rng, 5, 6);
  const MatrixXd noise = normal_matrix(rng, 2, 6);
  VaeParams g;
  const double loss = loss_and_gradient(p, x, noise, g);
  CHECK(std::isfinite(loss));

  const double h = 1e-4;
  double worst = 0.0;
  VaeParams q = p;
  auto fd = [&](double& slot) {
    const double keep = slot;
    slot = keep + h;
    const VaeOutput up = vae_forward(q, x, noise);
    const double lu = vae_loss(up.z_mean, up.z_logvar, up.reconstructions, split_streams(q.spec, x), {1.5, 0.5});
    slot = keep - h;
    const VaeOutput dn = vae_forward(q, x, noise);
    const double ld = vae_loss(dn.z_mean, dn.z_logvar, dn.reconstructions, split_streams(q.spec, x), {1.5, 0.5});
    slot = keep;
    return (lu - ld) / (2.0 * h);
  };
  std::size_t checked = 0;
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < q.layers[l].W.size(); ++i) {
      const double num = fd(q.layers[l].W.data()[i]);
      const double ana = g.layers[l].W.data()[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
      ++checked;
    }
    for (Eigen::Index i = 0; i < q.layers[l].b.size(); ++i) {
      const double num = fd(q.layers[l].b.data()[i]);
      const double ana = g.layers[l].b.data()[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
      ++checked;
    }
  }
  CHECK(checked == p.parameter_count());
  CHECK(worst < 1e-4);
}

TEST_CASE("vae_train: zero epochs, memorization, loss reduction, divergence") {
  VaeSpec spec;
  spec.inputs = {{"trace", 32, 32.0}};
  spec.hidden_sizes = {32, 16, 8};
  spec.seed = 5;
  Rng rng(6);
  const MatrixXd raw = bump_traces(rng, 200, 32);
  const MatrixXd data = Standardizer::fit(raw).apply(raw);

  OptimizerConfig none;
  none.epochs = 0;
  const TrainResult z = vae_train(spec, data, none);
  CHECK(z.loss_history.empty());
  const VaeParams init = init_params(spec);
  for (std::size_t l = 0; l < init.layers.size(); ++l) CHECK(z.params.layers[l].W == init.layers[l].W);

  OptimizerConfig opt;
  opt.epochs = 300;
  const TrainResult r = vae_train(spec, data, opt);
  CHECK(r.loss_history.size() == 300);
  CHECK(r.loss_history.back() < 0.5 * r.initial_loss);
  const TrainResult again = vae_train(spec, data, opt);
  CHECK(again.loss_history == r.loss_history);
  CHECK(encode(again.params, data) == encode(r.params, data));
  CHECK(encode(r.params, data).allFinite());

  // One sample repeated is memorized.
  const Eigen::VectorXd one = (bump_traces(rng, 1, 32).col(0).array() * 3.0 - 1.0).matrix();
  const MatrixXd same = one.replicate(1, 40);
  const TrainResult m = vae_train(spec, same, opt);
  CHECK(reconstruction_correlation(m.params, same)[0] > 0.99);

  OptimizerConfig wild;
  wild.epochs = 50;
  wild.learning_rate = 1e12;
  try {
    vae_train(spec, data * 1e150, wild);
    FAIL("expected DivergedLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergedLoss);
  }
}

TEST_CASE("encode separates two clusters; manifold structure") {
  VaeSpec spec;
  spec.inputs = {{"x", 16, 16.0}};
  spec.hidden_sizes = {32, 16, 8};
  spec.seed = 2;
  Rng rng(13);
  MatrixXd data(16, 120);
  std::vector<int> label(120);
  for (Eigen::Index i = 0; i < 120; ++i) {
    label[static_cast<std::size_t>(i)] = i % 2;
    for (Eigen::Index r = 0; r < 16; ++r) data(r, i) = (i % 2 ? 1.0 : -1.0) * (r < 8 ? 1.0 : -0.5) + 0.2 * rng.normal();
  }
  OptimizerConfig opt;
  opt.epochs = 150;
  const TrainResult tr = vae_train(spec, data, opt);
  const MatrixXd z = encode(tr.params, data);

  // Mean silhouette.
  double sil = 0.0;
  for (Eigen::Index i = 0; i < 120; ++i) {
    double same = 0.0, other = 0.0;
    int ns = 0, no = 0;
    for (Eigen::Index j = 0; j < 120; ++j) {
      if (i == j) continue;
      const double d = (z.col(i) - z.col(j)).norm();
      if (label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)]) {
        same += d;
        ++ns;
      } else {
        other += d;
        ++no;
      }
    }
    const double a = same / ns;
    const double b = other / no;
    sil += (b - a) / std::max(a, b);
  }
  CHECK(sil / 120.0 > 0.0);

  GridSpec one;
  one.n = 1;
  const Manifold m1 = reconstruction_manifold(tr.params, one);
  CHECK(m1.points.cols() == 1);
  CHECK(m1.points.col(0).norm() == 0.0);
  CHECK(m1.streams[0] == decode(tr.params, MatrixXd::Zero(2, 1))[0]);

  const Manifold m8 = reconstruction_manifold(tr.params);
  CHECK(m8.points.cols() == 64);
  CHECK(m8.streams[0].cols() == 64);
  CHECK(m8.points(0, 0) == -3.0);
  CHECK(m8.points(1, 0) == 3.0);
  CHECK(m8.points(0, 63) == 3.0);
  double adjacent = 0.0, far = 0.0;
  for (Eigen::Index r = 0; r < 8; ++r) {
    adjacent += (m8.streams[0].col(r * 8) - m8.streams[0].col(r * 8 + 1)).squaredNorm();
    far += (m8.streams[0].col(r * 8) - m8.streams[0].col(r * 8 + 7)).squaredNorm();
  }
  CHECK(adjacent < far);
}

TEST_CASE("gmm_fit: one Gaussian, two clusters, weights") {
  Rng rng(31);
  Matrix2Xd x(2, 400);
  for (Eigen::Index i = 0; i < 400; ++i) x.col(i) = Vector2d(2.0 + 0.5 * rng.normal(), -1.0 + 0.5 * rng.normal());
  GmmConfig one;
  one.k = 1;
  const Gmm g1 = gmm_fit(x, one);
  REQUIRE(g1.k() == 1);
  CHECK(g1.weights[0] == 1.0);
  CHECK((g1.means[0] - Vector2d(2.0, -1.0)).cwiseAbs().maxCoeff() < 3.0 * 0.5 / std::sqrt(400.0));

  Matrix2Xd two(2, 500);
  for (Eigen::Index i = 0; i < 500; ++i) {
    const double cx = i < 250 ? 0.0 : 10.0;
    two.col(i) = Vector2d(cx + rng.normal(), rng.normal());
  }
  GmmConfig k2;
  k2.k = 2;
  const Gmm g2 = gmm_fit(two, k2);
  const int lo = g2.means[0](0) < g2.means[1](0) ? 0 : 1;
  // Means of the drawn samples, not the generating centres.
  const Vector2d m0 = two.leftCols(250).rowwise().mean();
  const Vector2d m1 = two.rightCols(250).rowwise().mean();
  CHECK((g2.means[static_cast<std::size_t>(lo)] - m0).norm() < 0.1);
  CHECK((g2.means[static_cast<std::size_t>(1 - lo)] - m1).norm() < 0.1);
  CHECK(g2.weights[0] + g2.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& c : g2.covariances) {
    CHECK((c - c.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(c).eigenvalues().minCoeff() >= k2.reg_eps);
  }

  GmmConfig k3;
  const Gmm small = gmm_fit(two.leftCols(2), k3);
  CHECK(small.reduced);
  CHECK(small.k() == 2);
}

TEST_CASE("gmm_fit: EM log-likelihood never decreases") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(rng.below(200));
    Matrix2Xd x(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = static_cast<double>(rng.below(4));
      x.col(i) = Vector2d(3.0 * c + rng.normal() * (0.3 + c), rng.normal() * (1.0 + 0.5 * c) - c);
    }
    GmmConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    cfg.tol = 0.0;
    cfg.max_iters = 200;
    const Gmm g = gmm_fit(x, cfg);
    for (std::size_t i = 1; i < g.log_likelihood.size(); ++i) CHECK(g.log_likelihood[i] >= g.log_likelihood[i - 1] - 1e-9);
  }
}

TEST_CASE("gmm density integrates to one") {
  Rng rng(51);
  Matrix2Xd x(2, 300);
  for (Eigen::Index i = 0; i < 300; ++i) x.col(i) = Vector2d((i % 3) * 2.0 + 0.5 * rng.normal(), (i % 3) * -1.0 + 0.5 * rng.normal());
  const Gmm g = gmm_fit(x);
  // Box [-4, 8] x [-7, 5] holds the mixture to well beyond 4 sigma.
  const double area = 12.0 * 12.0;
  double sum = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) sum += std::exp(g.log_density(Vector2d(rng.uniform(-4.0, 8.0), rng.uniform(-7.0, 5.0))));
  CHECK(std::abs(area * sum / draws - 1.0) < 0.02);
}

TEST_CASE("prototypes: mean hit, ties, brute force") {
  Gmm g;
  g.weights = {0.5, 0.5};
  g.means = {Vector2d(0.0, 0.0), Vector2d(5.0, 5.0)};
  g.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  Matrix2Xd e(2, 5);
  e << 1.0, 5.0, 0.0, 0.0, 4.0,
       1.0, 5.0, 0.0, 0.0, 4.0;
  const std::vector<std::string> cond(5, "a");
  const auto p = prototypes({{"a", g}}, e, cond);
  REQUIRE(p.size() == 2);
  CHECK(p[0].event == 2);  // duplicate at index 3 loses the tie
  CHECK(p[1].event == 1);

  Rng rng(61);
  Matrix2Xd big(2, 1000);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    big.col(i) = Vector2d(4.0 * rng.normal(), 4.0 * rng.normal());
    labels.push_back(i % 3 == 0 ? "iso1.8" : "iso2.6");
  }
  const auto models = gmm_fit(big, labels);
  const auto protos = prototypes(models, big, labels);
  CHECK(protos.size() == 6);
  for (const auto& pr : protos) {
    const Gmm& m = models.at(pr.condition);
    std::size_t best = 0;
    double best_ld = -1e300;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != pr.condition) continue;
      const double ld = brute_log_density(m.means[static_cast<std::size_t>(pr.component)],
                                          m.covariances[static_cast<std::size_t>(pr.component)], big.col(static_cast<Eigen::Index>(i)));
      if (ld > best_ld) {
        best_ld = ld;
        best = i;
      }
    }
    CHECK(pr.event == best);
  }
}

TEST_CASE("variant datasets and standardization") {
  CHECK(variant_streams(1).size() == 1);
  CHECK(variant_streams(2).size() == 6);
  CHECK(variant_streams(3).size() == 3);
  CHECK_THROWS_AS(variant_streams(4), Error);

  features::FeatureVector fv;
  fv.trace = Series(128, 0.5);
  fv.flow_up_trace = Series(128, 1.0);
  fv.flow_down_trace = Series(128, 2.0);
  fv.source_mean = Image::Constant(32, 32, 0.1);
  fv.sink_mean = Image::Constant(32, 32, -0.1);
  fv.duration_s = 2.25;
  fv.peak_amplitude = 0.04;
  fv.up_total = 1.0;
  const MatrixXd a2 = assemble(2, {fv, fv});
  CHECK(a2.rows() == 128 + 2048 + 6);
  CHECK(a2(128 + 2048, 0) == 1.5);
  CHECK(a2(128 + 2049, 1) == doctest::Approx(0.2));
  CHECK(assemble(3, {fv}).rows() == 384);

  Rng rng(71);
  const MatrixXd d = normal_matrix(rng, 6, 30) * 5.0 + MatrixXd::Constant(6, 30, 3.0);
  const Standardizer s = Standardizer::fit(d);
  const MatrixXd z = s.apply(d);
  CHECK(z.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.invert(z) - d).cwiseAbs().maxCoeff() < 1e-12);
}
