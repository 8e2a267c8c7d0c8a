#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "vrae/projection.hpp"

using vrae::Matrix;
using vrae::Vector;
namespace proj = vrae::projection;

namespace {

Matrix fixture(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  vrae::SeededRng rng(seed);
  return vrae::sample_standard_gaussian(rng, n, d);
}

std::vector<Eigen::Index> permutation(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  vrae::SeededRng rng(seed);
  rng.shuffle(p);
  return p;
}

Matrix permute_rows(const Matrix& x, const std::vector<Eigen::Index>& p) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = x.row(p[static_cast<std::size_t>(i)]);
  return y;
}

}  // namespace

TEST_CASE("pca recovers the dominant axis") {
  Matrix x(4, 2);
  x << -3, 0, -1, 0, 1, 0, 3, 0;
  const auto r = proj::pca(x, 2);
  CHECK(std::abs(r.components(0, 0)) == doctest::Approx(1.0));
  CHECK(r.explained_variance(0) == doctest::Approx(20.0 / 3.0));
  CHECK(r.explained_variance(1) == doctest::Approx(0.0));
}

TEST_CASE("pca components are orthonormal and variances sorted") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = fixture(60, 8, s);
    const auto r = proj::pca(x, 5);
    const Matrix gram = r.components.transpose() * r.components;
    CHECK((gram - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
    for (Eigen::Index i = 1; i < 5; ++i) CHECK(r.explained_variance(i) <= r.explained_variance(i - 1));
    // Projected columns have the explained variances.
    for (Eigen::Index c = 0; c < 5; ++c) {
      const double var = r.embedding.points.col(c).squaredNorm() / 59.0;
      CHECK(var == doctest::Approx(r.explained_variance(c)).epsilon(1e-9));
    }
  }
}

TEST_CASE("pca errors") {
  CHECK_THROWS_AS(proj::pca(Matrix(Matrix::Zero(1, 3)), 1), vrae::InvalidArgument);
  CHECK_THROWS_AS(proj::pca(fixture(5, 3, 1), 4), vrae::InvalidArgument);
}

TEST_CASE("rbf kernel") {
  const Matrix x = fixture(20, 3, 2);
  const Matrix k = proj::rbf_kernel(x, 0.5);
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((k.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(k.minCoeff() > 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
  CHECK_THROWS_AS(proj::rbf_kernel(x, 0.0), vrae::InvalidArgument);
}

TEST_CASE("rbf kernel tends to rank one as gamma vanishes") {
  const Matrix x = fixture(30, 4, 3);
  Eigen::SelfAdjointEigenSolver<Matrix> es(proj::rbf_kernel(x, 1e-12));
  const Vector ev = es.eigenvalues().reverse();
  CHECK(ev(1) / ev(0) < 1e-6);
  // After double centring nothing is left.
  const auto r = proj::kernel_pca_rbf(x, 2, 1e-12);
  CHECK(r.eigenvalues.maxCoeff() < 1e-9);
}

TEST_CASE("kernel pca with tiny gamma matches linear pca up to scale") {
  // exp(-g d^2) ~ 1 - g d^2, whose centred form is 2 g X_c X_c^T.
  const Matrix x = fixture(25, 3, 4);
  const double g = 1e-5;
  const auto k = proj::kernel_pca_rbf(x, 2, g);
  const auto p = proj::pca(x, 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    const Vector a = k.embedding.points.col(c).normalized();
    const Vector b = p.embedding.points.col(c).normalized();
    CHECK(std::abs(a.dot(b)) > 1.0 - 1e-4);
  }
  CHECK(proj::default_rbf_gamma(x) > 0.0);
}

TEST_CASE("perplexity calibration") {
  const Matrix x = fixture(120, 5, 5);
  for (double perp : {5.0, 30.0, 50.0}) {
    const auto a = proj::conditional_affinities(x, perp);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      REQUIRE(std::abs(std::exp2(a.entropy_bits(i)) - perp) < 1e-3);
      REQUIRE(std::abs(a.conditional.row(i).sum() - 1.0) < 1e-12);
      REQUIRE(a.conditional(i, i) == 0.0);
    }
  }
  CHECK_THROWS_AS(proj::conditional_affinities(x, 200.0), vrae::InvalidArgument);
  CHECK_THROWS_AS(proj::conditional_affinities(x, 1.0), vrae::InvalidArgument);
}

TEST_CASE("tsne separates two distant blobs and lowers KL") {
  Matrix x = fixture(60, 5, 6);
  x.topRows(30).array() += 100.0 / std::sqrt(5.0);  // centres 100 apart, unit spread
  proj::TsneOptions opt;
  opt.perplexity = 10.0;
  const auto r = proj::tsne(x, opt);
  CHECK(r.kl_trace.back() <= r.kl_trace[static_cast<std::size_t>(opt.exaggeration_iterations)] + 1e-3);
  // Every point lies on its own class side of the mid-point between class means.
  const Vector ca = r.embedding.points.topRows(30).colwise().mean();
  const Vector cb = r.embedding.points.bottomRows(30).colwise().mean();
  const Vector axis = ca - cb;
  const Vector mid = 0.5 * (ca + cb);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const double side = (r.embedding.points.row(i).transpose() - mid).dot(axis);
    REQUIRE((i < 30 ? side > 0.0 : side < 0.0));
  }
  CHECK(std::abs(r.embedding.points.col(0).mean()) < 1e-9);
}

TEST_CASE("tsne is seed-deterministic") {
  const Matrix x = fixture(30, 3, 7);
  proj::TsneOptions opt;
  opt.perplexity = 8.0;
  opt.iterations = 100;
  opt.init = proj::TsneInit::kRandom;
  opt.seed = 3;
  CHECK(proj::tsne(x, opt).embedding.points == proj::tsne(x, opt).embedding.points);
}

TEST_CASE("spectral embedding") {
  SUBCASE("two disconnected blobs split on the first coordinate") {
    Matrix x = fixture(40, 3, 8);
    x.topRows(20).array() += 50.0;
    const auto e = proj::spectral_embedding(x, 5);
    const double a = e.points.col(0).head(20).mean();
    const double b = e.points.col(0).tail(20).mean();
    CHECK(std::abs(a - b) > 1e-3);
    for (Eigen::Index i = 0; i < 20; ++i) {
      CHECK(std::abs(e.points(i, 0) - a) < 1e-8);
      CHECK(std::abs(e.points(20 + i, 0) - b) < 1e-8);
    }
  }
  SUBCASE("coincident points") {
    const auto e = proj::spectral_embedding(Matrix(Matrix::Ones(10, 3)), 3);
    CHECK(e.points.isZero(0.0));
    CHECK(e.warnings.size() == 1);
  }
  SUBCASE("too many components warns") {
    Matrix x = fixture(40, 2, 9);
    for (Eigen::Index i = 0; i < 40; ++i) x.row(i).array() += 100.0 * static_cast<double>(i / 10);
    CHECK(proj::spectral_embedding(x, 3).warnings.size() == 1);
  }
  SUBCASE("knn graph is symmetric with unit weights") {
    const Matrix w = proj::knn_graph(fixture(30, 2, 10), 4);
    CHECK(w == w.transpose());
    CHECK(w.diagonal().isZero(0.0));
    CHECK(w.rowwise().sum().minCoeff() >= 4.0);
  }
}

TEST_CASE("projections are permutation-equivariant") {
  Matrix x = fixture(50, 6, 11);
  x.topRows(25).array() += 3.0;
  const auto p = permutation(50, 12);
  const Matrix xp = permute_rows(x, p);
  auto check = [&](const Matrix& a, const Matrix& b, double tol) {
    CHECK((permute_rows(a, p) - b).cwiseAbs().maxCoeff() < tol);
  };
  check(proj::pca(x, 2).embedding.points, proj::pca(xp, 2).embedding.points, 1e-9);
  check(proj::kernel_pca_rbf(x, 2, 0.1).embedding.points,
        proj::kernel_pca_rbf(xp, 2, 0.1).embedding.points, 1e-9);
  check(proj::spectral_embedding(x, 8).points, proj::spectral_embedding(xp, 8).points, 1e-9);
  proj::TsneOptions opt;
  opt.perplexity = 10.0;
  const auto a = proj::tsne(x, opt);
  const auto b = proj::tsne(xp, opt);
  check(a.embedding.points, b.embedding.points, 1e-6);
}
