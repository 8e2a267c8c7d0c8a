#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrae/numerics.hpp"

namespace vrae::clustering {

inline constexpr int kNoise = -1;

struct Merge {
  Eigen::Index left = 0;   // representative cluster ids at merge time
  Eigen::Index right = 0;
  double height = 0.0;
  Eigen::Index size = 0;   // size of the merged cluster
};

template <typename Scalar>
struct ClusterAssignment {
  std::vector<int> labels;  // kNoise or 0..k-1, numbered by first appearance
  std::string method;
  std::map<std::string, double> parameters;
  MatrixX<Scalar> centroids;     // k x d; empty for DBSCAN
  std::optional<Scalar> inertia; // k-means only
  std::vector<Scalar> inertia_trace;  // per Lloyd iteration of the kept restart
  std::vector<Merge> merges;          // hierarchical only, in merge order

  int cluster_count() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    return k;
  }
};

namespace detail {

/// Renumbers non-noise labels 0, 1, ... in order of first appearance and
/// returns the old-to-new map.
inline std::map<int, int> canonicalize(std::vector<int>& labels) {
  std::map<int, int> remap;
  for (int& l : labels) {
    if (l == kNoise) continue;
    auto it = remap.find(l);
    if (it == remap.end()) it = remap.emplace(l, static_cast<int>(remap.size())).first;
    l = it->second;
  }
  return remap;
}

template <typename Scalar>
MatrixX<Scalar> cluster_means(const MatrixX<Scalar>& x, const std::vector<int>& labels, int k) {
  MatrixX<Scalar> c = MatrixX<Scalar>::Zero(k, x.cols());
  std::vector<Scalar> count(static_cast<std::size_t>(k), Scalar(0));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l == kNoise) continue;
    c.row(l) += x.row(i);
    count[static_cast<std::size_t>(l)] += Scalar(1);
  }
  for (int j = 0; j < k; ++j)
    if (count[static_cast<std::size_t>(j)] > Scalar(0)) c.row(j) /= count[static_cast<std::size_t>(j)];
  return c;
}

template <typename Scalar>
Scalar squared_distance(const MatrixX<Scalar>& a, Eigen::Index i, const MatrixX<Scalar>& b,
                        Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// k-means++
// ---------------------------------------------------------------------------

struct KMeansOptions {
  int max_iter = 300;
  double tol = 1e-6;
  int restarts = 10;
};

/// Assigns each point to its nearest centroid (lowest index on ties) and
/// returns the inertia.
template <typename Scalar>
Scalar assign_nearest(const MatrixX<Scalar>& x, const MatrixX<Scalar>& centroids,
                      std::vector<int>& labels) {
  Scalar inertia(0);
  labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const Scalar d = detail::squared_distance(x, i, centroids, c);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    inertia += best;
  }
  return inertia;
}

/// D^2 seeding: first centre uniform, each next centre drawn with probability
/// proportional to its squared distance to the nearest chosen centre.
template <typename Scalar>
MatrixX<Scalar> kmeans_pp_seed(const MatrixX<Scalar>& x, int k, SeededRng& rng) {
  const Eigen::Index n = x.rows();
  MatrixX<Scalar> centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
  VectorX<Scalar> nearest(n);
  for (Eigen::Index i = 0; i < n; ++i) nearest(i) = detail::squared_distance(x, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const Scalar total = nearest.sum();
    Eigen::Index pick = n - 1;
    if (total > Scalar(0)) {
      const Scalar u = static_cast<Scalar>(rng.uniform()) * total;
      Scalar acc(0);
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      nearest(i) = std::min(nearest(i), detail::squared_distance(x, i, centers, c));
  }
  return centers;
}

template <typename Scalar>
ClusterAssignment<Scalar> kmeans_pp(const MatrixX<Scalar>& x, int k, std::uint64_t seed,
                                    const KMeansOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  if (k < 1) throw InvalidArgument("kmeans: k must be at least 1");
  if (k > n) throw InvalidArgument("kmeans: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));
  if (opt.restarts < 1 || opt.max_iter < 1) throw InvalidArgument("kmeans: invalid options");

  SeededRng master(seed);
  ClusterAssignment<Scalar> best;
  for (int restart = 0; restart < opt.restarts; ++restart) {
    SeededRng rng(master.fork_seed());
    MatrixX<Scalar> centers = kmeans_pp_seed(x, k, rng);
    std::vector<int> labels;
    std::vector<Scalar> trace;
    Scalar inertia(0);
    for (int iter = 0; iter < opt.max_iter; ++iter) {
      inertia = assign_nearest(x, centers, labels);
      trace.push_back(inertia);
      MatrixX<Scalar> updated = detail::cluster_means(x, labels, k);
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int l : labels) ++counts[static_cast<std::size_t>(l)];
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) continue;
        // Empty cluster: move its centre to the point farthest from its own centre.
        Eigen::Index far = 0;
        Scalar far_d(-1);
        for (Eigen::Index i = 0; i < n; ++i) {
          const Scalar d = detail::squared_distance(x, i, updated, labels[static_cast<std::size_t>(i)]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        updated.row(c) = x.row(far);
      }
      const Scalar shift = (updated - centers).rowwise().norm().maxCoeff();
      centers = std::move(updated);
      if (shift < static_cast<Scalar>(opt.tol)) break;
    }
    inertia = assign_nearest(x, centers, labels);
    if (trace.empty() || inertia != trace.back()) trace.push_back(inertia);
    if (!best.inertia || inertia < *best.inertia) {
      best.labels = labels;
      best.centroids = centers;
      best.inertia = inertia;
      best.inertia_trace = trace;
    }
  }
  const auto remap = detail::canonicalize(best.labels);
  MatrixX<Scalar> ordered(static_cast<Eigen::Index>(remap.size()), x.cols());
  for (const auto& [old_id, new_id] : remap) ordered.row(new_id) = best.centroids.row(old_id);
  best.centroids = std::move(ordered);
  best.method = "kmeans++";
  best.parameters = {{"k", static_cast<double>(k)},
                     {"seed", static_cast<double>(seed)},
                     {"max_iter", static_cast<double>(opt.max_iter)},
                     {"tol", opt.tol},
                     {"restarts", static_cast<double>(opt.restarts)}};
  return best;
}

// ---------------------------------------------------------------------------
// Agglomerative hierarchical clustering
// ---------------------------------------------------------------------------

enum class Linkage { kWard, kSingle, kComplete, kAverage };

inline Linkage parse_linkage(std::string_view name) {
  if (name == "ward") return Linkage::kWard;
  if (name == "single") return Linkage::kSingle;
  if (name == "complete") return Linkage::kComplete;
  if (name == "average") return Linkage::kAverage;
  throw InvalidArgument("unknown linkage '" + std::string(name) +
                        "' (expected ward, single, complete or average)");
}

inline std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::kWard: return "ward";
    case Linkage::kSingle: return "single";
    case Linkage::kComplete: return "complete";
    case Linkage::kAverage: return "average";
  }
  return "ward";
}

/// Merges from singletons with Lance-Williams distance updates until `k`
/// clusters remain. Ward works on squared Euclidean distances and reports
/// heights as their square roots.
template <typename Scalar>
ClusterAssignment<Scalar> hierarchical(const MatrixX<Scalar>& x, int k,
                                       Linkage linkage = Linkage::kWard) {
  const Eigen::Index n = x.rows();
  if (k < 1 || k > n) throw InvalidArgument("hierarchical: k must lie in [1, N]");
  const bool ward = linkage == Linkage::kWard;

  MatrixX<Scalar> dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar d2 = detail::squared_distance(x, i, x, j);
      dist(i, j) = ward ? d2 : std::sqrt(d2);
    }
  std::vector<Eigen::Index> size(static_cast<std::size_t>(n), 1);
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::vector<Eigen::Index> owner(static_cast<std::size_t>(n));  // point -> representative
  for (Eigen::Index i = 0; i < n; ++i) owner[static_cast<std::size_t>(i)] = i;

  ClusterAssignment<Scalar> out;
  for (Eigen::Index remaining = n; remaining > k; --remaining) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const auto ni = static_cast<Scalar>(size[static_cast<std::size_t>(bi)]);
    const auto nj = static_cast<Scalar>(size[static_cast<std::size_t>(bj)]);
    for (Eigen::Index m = 0; m < n; ++m) {
      if (!active[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      const Scalar dim = dist(bi, m), djm = dist(bj, m);
      Scalar merged{};
      switch (linkage) {
        case Linkage::kWard: {
          const auto nm = static_cast<Scalar>(size[static_cast<std::size_t>(m)]);
          merged = ((ni + nm) * dim + (nj + nm) * djm - nm * best) / (ni + nj + nm);
          break;
        }
        case Linkage::kSingle: merged = std::min(dim, djm); break;
        case Linkage::kComplete: merged = std::max(dim, djm); break;
        case Linkage::kAverage: merged = (ni * dim + nj * djm) / (ni + nj); break;
      }
      dist(bi, m) = dist(m, bi) = merged;
    }
    active[static_cast<std::size_t>(bj)] = false;
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    for (auto& o : owner)
      if (o == bj) o = bi;
    out.merges.push_back({bi, bj, static_cast<double>(ward ? std::sqrt(best) : best),
                          size[static_cast<std::size_t>(bi)]});
  }
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(owner[static_cast<std::size_t>(i)]);
  detail::canonicalize(out.labels);
  out.centroids = detail::cluster_means(x, out.labels, out.cluster_count());
  out.method = "hierarchical";
  out.parameters = {{"k", static_cast<double>(k)}};
  out.parameters["linkage_" + std::string(to_string(linkage))] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

/// Median over points of the distance to the `k`-th nearest other point.
template <typename Scalar>
Scalar median_knn_distance(const MatrixX<Scalar>& x, Eigen::Index k) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw InvalidArgument("median_knn_distance: need at least two points");
  k = std::min(k, n - 1);
  std::vector<Scalar> kth;
  std::vector<Scalar> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row.push_back(std::sqrt(detail::squared_distance(x, i, x, j)));
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    kth.push_back(row[static_cast<std::size_t>(k - 1)]);
  }
  auto mid = kth.begin() + static_cast<long>(kth.size() / 2);
  std::nth_element(kth.begin(), mid, kth.end());
  return *mid;
}

/// Core points have at least `min_pts` points (themselves included) within
/// `eps`. Clusters grow from cores in index order; unreachable points are noise.
template <typename Scalar>
ClusterAssignment<Scalar> dbscan(const MatrixX<Scalar>& x, Scalar eps, int min_pts) {
  if (!(eps > Scalar(0))) throw InvalidArgument("dbscan: eps must be positive");
  if (min_pts < 1) throw InvalidArgument("dbscan: min_pts must be at least 1");
  const Eigen::Index n = x.rows();
  const Scalar eps2 = eps * eps;
  std::vector<std::vector<Eigen::Index>> neighbours(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (detail::squared_distance(x, i, x, j) <= eps2) neighbours[static_cast<std::size_t>(i)].push_back(j);
  auto is_core = [&](Eigen::Index i) {
    return static_cast<int>(neighbours[static_cast<std::size_t>(i)].size()) >= min_pts;
  };

  constexpr int kUnvisited = -2;
  ClusterAssignment<Scalar> out;
  out.labels.assign(static_cast<std::size_t>(n), kUnvisited);
  int cluster = 0;
  std::vector<Eigen::Index> frontier;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.labels[static_cast<std::size_t>(i)] != kUnvisited) continue;
    if (!is_core(i)) {
      out.labels[static_cast<std::size_t>(i)] = kNoise;
      continue;
    }
    out.labels[static_cast<std::size_t>(i)] = cluster;
    frontier.assign(1, i);
    while (!frontier.empty()) {
      const Eigen::Index p = frontier.back();
      frontier.pop_back();
      if (!is_core(p)) continue;
      for (Eigen::Index q : neighbours[static_cast<std::size_t>(p)]) {
        int& lq = out.labels[static_cast<std::size_t>(q)];
        if (lq == kUnvisited || lq == kNoise) {
          const bool unvisited = lq == kUnvisited;
          lq = cluster;
          if (unvisited) frontier.push_back(q);
        }
      }
    }
    ++cluster;
  }
  detail::canonicalize(out.labels);
  out.method = "dbscan";
  out.parameters = {{"eps", static_cast<double>(eps)}, {"min_pts", static_cast<double>(min_pts)}};
  return out;
}

}  // namespace vrae::clustering
