#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "vrae/clustering.hpp"

using vrae::Matrix;
namespace cl = vrae::clustering;

namespace {

Matrix blobs(Eigen::Index per_blob, int count, double spacing, std::uint64_t seed) {
  vrae::SeededRng rng(seed);
  Matrix x = 0.3 * vrae::sample_standard_gaussian(rng, per_blob * count, 2);
  for (int b = 0; b < count; ++b)
    x.middleRows(b * per_blob, per_blob).col(0).array() += spacing * b;
  return x;
}

bool blocks_recovered(const std::vector<int>& labels, Eigen::Index per_blob, int count) {
  std::set<int> seen;
  for (int b = 0; b < count; ++b) {
    const int first = labels[static_cast<std::size_t>(b * per_blob)];
    for (Eigen::Index i = 0; i < per_blob; ++i)
      if (labels[static_cast<std::size_t>(b * per_blob + i)] != first) return false;
    if (!seen.insert(first).second) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("labels are numbered by first appearance") {
  std::vector<int> labels = {5, 5, 2, -1, 7, 2};
  cl::detail::canonicalize(labels);
  CHECK(labels == std::vector<int>{0, 0, 1, -1, 2, 1});
}

TEST_CASE("kmeans++ recovers separated blobs") {
  const Matrix x = blobs(20, 3, 10.0, 1);
  const auto a = cl::kmeans_pp(x, 3, 7);
  CHECK(blocks_recovered(a.labels, 20, 3));
  CHECK(a.centroids.rows() == 3);
  CHECK(a.labels.front() == 0);
  CHECK(a.inertia.has_value());
  CHECK(a.method == "kmeans++");
}

TEST_CASE("kmeans inertia never increases across Lloyd iterations") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    vrae::SeededRng rng(s);
    const Matrix x = vrae::sample_standard_gaussian(rng, 40, 3);
    cl::KMeansOptions opt;
    opt.restarts = 1;
    const auto a = cl::kmeans_pp(x, 4, s, opt);
    for (std::size_t i = 1; i < a.inertia_trace.size(); ++i)
      REQUIRE(a.inertia_trace[i] <= a.inertia_trace[i - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("kmeans edge cases") {
  const Matrix x = blobs(5, 2, 4.0, 2);
  SUBCASE("k = N gives zero inertia") {
    const auto a = cl::kmeans_pp(x, 10, 1);
    CHECK(*a.inertia == doctest::Approx(0.0).scale(1.0));
    CHECK(a.cluster_count() == 10);
  }
  SUBCASE("k = 1 is the mean") {
    const auto a = cl::kmeans_pp(x, 1, 1);
    CHECK((a.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
  }
  SUBCASE("invalid k") {
    CHECK_THROWS_AS(cl::kmeans_pp(x, 11, 1), vrae::InvalidArgument);
    CHECK_THROWS_AS(cl::kmeans_pp(x, 0, 1), vrae::InvalidArgument);
  }
  SUBCASE("deterministic") {
    CHECK(cl::kmeans_pp(x, 3, 5).labels == cl::kmeans_pp(x, 3, 5).labels);
  }
}

TEST_CASE("ward merge heights are monotone") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    vrae::SeededRng rng(s + 100);
    const Matrix x = vrae::sample_standard_gaussian(rng, 30, 3);
    const auto a = cl::hierarchical(x, 1, cl::Linkage::kWard);
    REQUIRE(a.merges.size() == 29);
    for (std::size_t i = 1; i < a.merges.size(); ++i)
      REQUIRE(a.merges[i].height >= a.merges[i - 1].height);
    CHECK(a.merges.back().size == 30);
  }
}

TEST_CASE("ward first merge height") {
  // Ward distance for two singletons is |a - b|.
  Matrix x(3, 1);
  x << 0.0, 1.0, 10.0;
  const auto a = cl::hierarchical(x, 1, cl::Linkage::kWard);
  CHECK(a.merges[0].height == doctest::Approx(1.0));
  // Merging {0,1} with {10}: sqrt(2 * 1 * 2 / 3) * |0.5 - 10|.
  CHECK(a.merges[1].height == doctest::Approx(std::sqrt(4.0 / 3.0) * 9.5));
}

TEST_CASE("hierarchical linkages recover blobs") {
  const Matrix x = blobs(15, 3, 12.0, 3);
  for (auto l : {cl::Linkage::kWard, cl::Linkage::kSingle, cl::Linkage::kComplete, cl::Linkage::kAverage}) {
    const auto a = cl::hierarchical(x, 3, l);
    CHECK(blocks_recovered(a.labels, 15, 3));
    CHECK(a.parameters.count("linkage_" + std::string(cl::to_string(l))) == 1);
  }
  CHECK(cl::parse_linkage("average") == cl::Linkage::kAverage);
  CHECK_THROWS_AS(cl::parse_linkage("centroid"), vrae::InvalidArgument);
  CHECK_THROWS_AS(cl::hierarchical(x, 0, cl::Linkage::kWard), vrae::InvalidArgument);
}

TEST_CASE("dbscan") {
  SUBCASE("eps below the closest pair labels everything noise") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      vrae::SeededRng rng(s);
      const Matrix x = vrae::sample_standard_gaussian(rng, 40, 3);
      double min_d = 1e300;
      for (Eigen::Index i = 0; i < 40; ++i)
        for (Eigen::Index j = i + 1; j < 40; ++j) min_d = std::min(min_d, (x.row(i) - x.row(j)).norm());
      const auto a = cl::dbscan(x, 0.99 * min_d, 2);
      for (int l : a.labels) REQUIRE(l == cl::kNoise);
      CHECK(a.cluster_count() == 0);
    }
  }
  SUBCASE("dense blobs and an outlier") {
    Matrix x = blobs(20, 2, 10.0, 4);
    x.conservativeResize(41, 2);
    x.row(40) << 100.0, 100.0;
    const auto a = cl::dbscan(x, 1.0, 4);
    CHECK(a.labels[40] == cl::kNoise);
    CHECK(a.cluster_count() == 2);
  }
  SUBCASE("min_pts 1 makes every point a core point") {
    Matrix x(3, 1);
    x << 0, 10, 20;
    const auto a = cl::dbscan(x, 1.0, 1);
    CHECK(a.labels == std::vector<int>{0, 1, 2});
  }
  SUBCASE("median knn distance") {
    Matrix x(4, 1);
    x << 0, 1, 3, 6;
    CHECK(cl::median_knn_distance(x, 1) == 2.0);  // {1, 1, 2, 3}
  }
  SUBCASE("invalid parameters") {
    const Matrix x = Matrix::Zero(3, 2);
    CHECK_THROWS_AS(cl::dbscan(x, 0.0, 2), vrae::InvalidArgument);
    CHECK_THROWS_AS(cl::dbscan(x, 1.0, 0), vrae::InvalidArgument);
  }
}
