#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradient_check.hpp"
#include "vrae/model.hpp"

using vrae::Matrix;
using vrae::Vector;
using namespace vrae::model;

namespace {

VraeConfig tiny_config() {
  VraeConfig c;
  c.input_dim = 2;
  c.hidden_units = 4;
  c.latent_dim = 3;
  c.dropout_rate = 0.0;
  c.batch_size = 2;
  c.seed = 11;
  return c;
}

vrae::data::WindowedDataset toy_dataset(Eigen::Index n, Eigen::Index length, std::uint64_t seed) {
  vrae::data::WindowedDataset ds;
  vrae::SeededRng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.windows.push_back(vrae::sample_uniform(rng, length, 2, -1.0, 1.0));
    ds.labels.push_back(static_cast<int>(i % 2));
  }
  ds.window_length = length;
  ds.stride = length;
  return ds;
}

}  // namespace

TEST_CASE("encoder with zero weights gives a zero state") {
  const auto w = VraeWeights::zeros(tiny_config());
  vrae::SeededRng rng(1);
  const Matrix window = vrae::sample_standard_gaussian(rng, 6, 2);
  CHECK(encoder_forward(w, window).isZero(0.0));
}

TEST_CASE("encoder L=1 equals one cell step") {
  const auto cfg = tiny_config();
  vrae::SeededRng rng(2);
  const auto w = VraeWeights::initialize(cfg, rng);
  const Matrix x = vrae::sample_standard_gaussian(rng, 1, 2);
  const Vector pre = w[kEncInput] * x.row(0).transpose() + w[kEncBias].col(0);
  const Eigen::Index h = cfg.hidden_units;
  const Vector i = vrae::sigmoid(pre.head(h));
  const Vector g = pre.segment(2 * h, h).array().tanh();
  const Vector o = vrae::sigmoid(pre.tail(h));
  const Vector expected = o.array() * (i.array() * g.array()).tanh();
  CHECK((encoder_forward(w, x) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(encoder_forward(w, x) == encoder_forward(w, x));
}

TEST_CASE("posterior heads") {
  const auto cfg = tiny_config();
  SUBCASE("zero weights") {
    const auto w = VraeWeights::zeros(cfg);
    const auto p = posterior_params(w, Vector::Zero(4));
    CHECK(p.mu.isZero(0.0));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(p.sigma(i) == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-14));
  }
  SUBCASE("sigma stays positive over random draws") {
    vrae::SeededRng rng(9);
    for (int trial = 0; trial < 10000; ++trial) {
      auto w = VraeWeights::zeros(cfg);
      w[kSigmaWeight] = 10.0 * vrae::sample_standard_gaussian(rng, 3, 4);
      w[kSigmaBias] = 10.0 * vrae::sample_standard_gaussian(rng, 3, 1);
      const Vector h = 10.0 * vrae::sample_standard_gaussian(rng, 4, 1);
      REQUIRE(posterior_params(w, h).sigma.minCoeff() > 0.0);
    }
  }
  SUBCASE("very negative bias hits the floor") {
    auto w = VraeWeights::zeros(cfg);
    w[kSigmaBias].setConstant(-40.0);
    const auto p = posterior_params(w, Vector::Ones(4));
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(p.sigma(i) > 0.0);
      CHECK(p.sigma(i) == doctest::Approx(1e-6).epsilon(1e-9));
    }
  }
}

TEST_CASE("reparameterize") {
  const Matrix mu = (Matrix(2, 1) << 1.0, 2.0).finished();
  const Matrix sigma = (Matrix(2, 1) << 0.5, 2.0).finished();
  const Matrix eps = (Matrix(2, 1) << 2.0, -1.0).finished();
  const auto s = reparameterize(mu, sigma, eps);
  CHECK(s.z(0, 0) == 2.0);
  CHECK(s.z(1, 0) == 0.0);
  CHECK(reparameterize(mu, sigma, Matrix::Zero(2, 1)).z == mu);
  const auto unit = reparameterize(Matrix::Zero(2, 1), Matrix::Ones(2, 1), eps);
  CHECK(unit.z == eps);
  CHECK_THROWS_AS(reparameterize(mu, Matrix::Zero(2, 1), eps), vrae::InvalidArgument);

  vrae::SeededRng rng(4);
  const Matrix m = vrae::sample_standard_gaussian(rng, 5, 7);
  const Matrix sg = vrae::sample_uniform(rng, 5, 7, 0.1, 3.0);
  const auto drawn = reparameterize(m, sg, rng);
  CHECK((drawn.z - (drawn.mu + (drawn.sigma.array() * drawn.epsilon.array()).matrix())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoder") {
  const auto cfg = tiny_config();
  CHECK(decoder_forward(VraeWeights::zeros(cfg), Vector::Ones(3), 7).isZero(0.0));
  vrae::SeededRng rng(5);
  const auto w = VraeWeights::initialize(cfg, rng);
  const Vector z = vrae::sample_standard_gaussian(rng, 3, 1);
  CHECK(decoder_forward(w, z, 6) == decoder_forward(w, z, 6));
  const Matrix empty = decoder_forward(w, z, 0);
  CHECK(empty.rows() == 0);
  CHECK_THROWS_AS(decoder_forward(w, Vector::Ones(4), 3), vrae::InvalidArgument);
}

TEST_CASE("kl divergence") {
  CHECK(kl_divergence(Vector::Zero(1), Vector::Ones(1)) == 0.0);
  CHECK(kl_divergence(Vector::Ones(1), Vector::Ones(1)) == doctest::Approx(0.5));
  // 0.5 (4 - ln 4 - 1) at 40 digits
  CHECK(kl_divergence(Vector::Zero(1), Vector::Constant(1, 2.0)) ==
        doctest::Approx(0.8068528194400546906).epsilon(1e-14));
  CHECK_THROWS_AS(kl_divergence(Vector::Zero(1), Vector::Zero(1)), vrae::InvalidArgument);

  vrae::SeededRng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Vector mu = vrae::sample_standard_gaussian(rng, 4, 1);
    const Vector sg = vrae::sample_uniform(rng, 4, 1, 0.05, 4.0);
    CHECK(kl_divergence(mu, sg) >= 0.0);
  }
}

TEST_CASE("kl matches a Monte-Carlo estimate") {
  const Vector mu = (Vector(2) << 0.0, 0.0).finished();
  const Vector sigma = (Vector(2) << 2.0, 2.0).finished();
  vrae::SeededRng rng(123);
  double acc = 0.0;
  const int n = 1000000;
  for (int s = 0; s < n; ++s) {
    double log_ratio = 0.0;
    for (Eigen::Index i = 0; i < 2; ++i) {
      const double e = rng.gaussian();
      const double z = mu(i) + sigma(i) * e;
      log_ratio += -std::log(sigma(i)) - 0.5 * e * e + 0.5 * z * z;
    }
    acc += log_ratio;
  }
  const double exact = kl_divergence(mu, sigma);
  CHECK(std::abs(acc / n - exact) / exact < 0.01);
}

TEST_CASE("loss") {
  const Matrix x = Matrix::Constant(4, 2, 0.3);
  CHECK(loss(x, x, Vector::Zero(3), Vector::Ones(3), 1.0).total == 0.0);
  const auto l = loss(x, x.array() - 0.5, Vector::Ones(3), Vector::Ones(3), 0.0);
  CHECK(l.recon == doctest::Approx(0.25));
  CHECK(l.total == l.recon);
  CHECK_THROWS_AS(loss(x, Matrix::Zero(3, 2), Vector::Zero(1), Vector::Ones(1), 1.0), vrae::InvalidArgument);
}

TEST_CASE("backprop matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = vrae::testing::check_gradients(seed);
    INFO("seed " << seed << " abs " << r.max_absolute_error);
    CHECK(r.max_relative_error < 1e-5);
  }
  // Reconstruction only.
  CHECK(vrae::testing::check_gradients(99, 0.0).max_relative_error < 1e-5);
  // A larger step keeps round-off far below every entry, so no floor is needed.
  for (std::uint64_t seed = 21; seed <= 23; ++seed)
    CHECK(vrae::testing::check_gradients(seed, 1.0, 3, 2, 4, 3, 5, 1e-4, 1e-12).max_relative_error < 1e-5);
}

TEST_CASE("kl gradient w.r.t. mu vanishes at mu = 0") {
  // Zero decoder output weights remove the reconstruction path, leaving
  // d/dmu = beta * mu / B.
  auto cfg = tiny_config();
  auto w = VraeWeights::zeros(cfg);
  vrae::SeededRng rng(3);
  w[kEncInput] = vrae::sample_standard_gaussian(rng, 16, 2);
  std::vector<Matrix> batch = {vrae::sample_standard_gaussian(rng, 4, 2)};
  const auto cache = forward(w, batch, vrae::sample_standard_gaussian(rng, 3, 1), Matrix(), 1.0);
  const auto g = backward(w, cache);
  CHECK(cache.latent.mu.isZero(0.0));
  CHECK(g[kMuBias].isZero(0.0));
}

TEST_CASE("reconstruction gradient vanishes at a perfect reconstruction") {
  // Decoder emits its output bias only; a constant window equal to that bias
  // is reconstructed exactly.
  auto cfg = tiny_config();
  auto w = VraeWeights::zeros(cfg);
  w[kOutBias] = (Matrix(2, 1) << 0.25, -0.5).finished();
  Matrix window(5, 2);
  window.col(0).setConstant(0.25);
  window.col(1).setConstant(-0.5);
  std::vector<Matrix> batch = {window};
  const auto cache = forward(w, batch, Matrix::Zero(3, 1), Matrix(), 0.0);
  CHECK(cache.loss.total == 0.0);
  for (const auto& g : backward(w, cache)) CHECK(g.isZero(0.0));
}

TEST_CASE("backward rejects an empty cache") {
  const auto w = VraeWeights::zeros(tiny_config());
  CHECK_THROWS_AS(backward(w, ForwardCache{}), vrae::InvalidArgument);
}

TEST_CASE("beta schedule") {
  AnnealSchedule cyc{AnnealMode::kCyclical, 4, 0.5, 1.0};
  CHECK(beta_at(cyc, 0, 1000) == 0.0);
  CHECK(beta_at(cyc, 250, 1000) == 0.0);  // start of the second cycle
  CHECK(beta_at(cyc, 62, 1000) == doctest::Approx(62.0 / 125.0));
  CHECK(beta_at(cyc, 125, 1000) == doctest::Approx(1.0));  // top of the first ramp
  CHECK(beta_at(cyc, 200, 1000) == 1.0);
  AnnealSchedule two{AnnealMode::kCyclical, 2, 0.5, 1.0};
  CHECK(beta_at(two, 125, 1000) == doctest::Approx(0.5));
  AnnealSchedule constant{AnnealMode::kConstant, 1, 0.5, 0.7};
  for (int s : {0, 10, 999}) CHECK(beta_at(constant, s, 1000) == 0.7);
  CHECK_THROWS_AS(beta_at(cyc, 1000, 1000), vrae::InvalidArgument);
  CHECK_THROWS_AS(beta_at(cyc, -1, 1000), vrae::InvalidArgument);
  for (int s = 0; s < 1000; ++s) {
    const double b = beta_at(cyc, s, 1000);
    REQUIRE((b >= 0.0 && b <= 1.0));
  }
}

TEST_CASE("training reduces reconstruction loss on a two-window set") {
  auto cfg = tiny_config();
  cfg.epochs = 200;
  cfg.learning_rate = 0.01;
  cfg.anneal.beta_max = 0.0;
  const auto ds = toy_dataset(2, 5, 21);
  const auto initial = evaluate(initial_checkpoint(cfg).weights, ds, 0.0);
  const auto ck = train(cfg, ds, ds);
  const auto final_loss = evaluate(ck.weights, ds, 0.0);
  CHECK(ck.history.size() == 200);
  CHECK(final_loss.recon < initial.recon);
  CHECK(ck.history.back().train.recon < ck.history.front().train.recon);
}

TEST_CASE("training with zero epochs returns the initialisation") {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  const auto ds = toy_dataset(3, 5, 2);
  const auto ck = train(cfg, ds, ds);
  const auto init = initial_checkpoint(cfg);
  CHECK(ck.history.empty());
  for (std::size_t p = 0; p < kParamCount; ++p) CHECK(ck.weights.tensors[p] == init.weights.tensors[p]);
}

TEST_CASE("training is deterministic") {
  auto cfg = tiny_config();
  cfg.epochs = 5;
  cfg.dropout_rate = 0.2;
  const auto ds = toy_dataset(7, 5, 3);
  const auto a = train(cfg, ds, ds);
  const auto b = train(cfg, ds, ds);
  for (std::size_t p = 0; p < kParamCount; ++p) CHECK(a.weights.tensors[p] == b.weights.tensors[p]);
  CHECK(a.history.back().train.total == b.history.back().train.total);
}

TEST_CASE("encode_dataset") {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  auto ds = toy_dataset(4, 5, 6);
  ds.windows.push_back(ds.windows[1]);
  ds.labels.push_back(ds.labels[1]);
  const auto enc = encode_dataset(initial_checkpoint(cfg), ds);
  CHECK(enc.latents.rows() == 5);
  CHECK(enc.latents.cols() == 3);
  CHECK(enc.labels == ds.labels);
  CHECK(enc.latents.row(1) == enc.latents.row(4));

  auto wrong = ds;
  wrong.windows[0] = Matrix::Zero(5, 3);
  CHECK_THROWS_AS(encode_dataset(initial_checkpoint(cfg), wrong), vrae::InvalidArgument);
}

TEST_CASE("encode_dataset latent width follows the config") {
  for (Eigen::Index latent : {20, 5}) {
    VraeConfig cfg;
    cfg.input_dim = 2;
    cfg.hidden_units = 6;
    cfg.latent_dim = latent;
    const auto enc = encode_dataset(initial_checkpoint(cfg), toy_dataset(3, 4, 1));
    CHECK(enc.latents.cols() == latent);
  }
}

TEST_CASE("latent line report") {
  SUBCASE("identical classes") {
    Matrix z = Matrix::Ones(6, 4);
    const auto r = latent_line_report(z, {0, 1, 0, 1, 0, 1}, 3);
    CHECK(r.separation.isZero(0.0));
  }
  SUBCASE("one separating dimension ranks first") {
    vrae::SeededRng rng(10);
    Matrix z = vrae::sample_standard_gaussian(rng, 40, 6);
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < 40; ++i) {
      labels.push_back(static_cast<int>(i % 2));
      z(i, 3) = labels.back() == 0 ? 1.0 : -1.0;
    }
    const auto r = latent_line_report(z, labels, 15);
    CHECK(r.ranking.front() == 3);
    CHECK(r.class_means(0, 3) == 1.0);
    CHECK(r.class_means(1, 3) == -1.0);
  }
  SUBCASE("over-large request is clamped with a warning") {
    Matrix z = Matrix::Random(5, 2);
    const auto r = latent_line_report(z, {0, 0, 0, 1, 1}, 10);
    CHECK(r.samples_used == std::vector<std::size_t>{3, 2});
    CHECK(r.warnings.size() == 2);
  }
  SUBCASE("single class") {
    CHECK_THROWS_AS(latent_line_report(Matrix::Zero(3, 2), {1, 1, 1}, 2), vrae::InvalidArgument);
  }
}
