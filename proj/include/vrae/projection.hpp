#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "vrae/numerics.hpp"

namespace vrae::projection {

template <typename Scalar>
struct Embedding2D {
  MatrixX<Scalar> points;  // N x dims (2 for plotting)
  std::string method;
  std::map<std::string, double> parameters;
  Eigen::Index source_dim = 0;
  std::vector<std::string> warnings;
};

namespace detail {

/// Flips each column so its largest-magnitude entry is positive. Makes
/// eigenvector signs a function of the data rather than of the solver.
template <typename Scalar>
void canonicalize_signs(MatrixX<Scalar>& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, c) < Scalar(0)) vectors.col(c) *= Scalar(-1);
  }
}

/// Pairwise squared distances computed entry by entry (no |a|^2 + |b|^2 - 2ab
/// expansion), so the result is exactly symmetric and permutes with the rows.
template <typename Scalar>
MatrixX<Scalar> squared_distances(const MatrixX<Scalar>& x) {
  const Eigen::Index n = x.rows();
  MatrixX<Scalar> d(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    d(j, j) = Scalar(0);
    for (Eigen::Index i = j + 1; i < n; ++i) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  }
  return d;
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
template <typename Scalar>
std::pair<VectorX<Scalar>, MatrixX<Scalar>> descending_eigen(const MatrixX<Scalar>& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

template <typename Scalar>
struct PcaResult {
  Embedding2D<Scalar> embedding;
  MatrixX<Scalar> components;         // d x k, orthonormal columns
  VectorX<Scalar> explained_variance; // k, non-increasing
  VectorX<Scalar> mean;               // d
};

template <typename Scalar>
PcaResult<Scalar> pca(const MatrixX<Scalar>& x, Eigen::Index k) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw InvalidArgument("pca: need at least two points");
  if (k < 1 || k > std::min(n, d))
    throw InvalidArgument("pca: k must lie in [1, min(N, d)] = [1, " +
                          std::to_string(std::min(n, d)) + "]");
  PcaResult<Scalar> r;
  r.mean = x.colwise().mean().transpose();
  const MatrixX<Scalar> centered = x.rowwise() - r.mean.transpose();
  const MatrixX<Scalar> cov = (centered.transpose() * centered) / Scalar(n - 1);
  auto [values, vectors] = detail::descending_eigen<Scalar>(cov);
  r.components = vectors.leftCols(k);
  detail::canonicalize_signs(r.components);
  r.explained_variance = values.head(k).cwiseMax(Scalar(0));
  r.embedding.points = centered * r.components;
  r.embedding.method = "pca";
  r.embedding.parameters = {{"k", static_cast<double>(k)}};
  r.embedding.source_dim = d;
  return r;
}

// ---------------------------------------------------------------------------
// RBF kernel PCA
// ---------------------------------------------------------------------------

template <typename Scalar>
MatrixX<Scalar> rbf_kernel(const MatrixX<Scalar>& x, Scalar gamma) {
  if (!(gamma > Scalar(0))) throw InvalidArgument("rbf kernel: gamma must be positive");
  return (-gamma * detail::squared_distances(x)).array().exp().matrix();
}

/// 1 / (d * median pairwise squared distance); 1/d when all points coincide.
template <typename Scalar>
Scalar default_rbf_gamma(const MatrixX<Scalar>& x) {
  const auto d2 = detail::squared_distances(x);
  std::vector<Scalar> off;
  for (Eigen::Index i = 0; i < d2.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d2.cols(); ++j) off.push_back(d2(i, j));
  const Scalar dims = static_cast<Scalar>(std::max<Eigen::Index>(1, x.cols()));
  if (off.empty()) return Scalar(1) / dims;
  auto mid = off.begin() + static_cast<long>(off.size() / 2);
  std::nth_element(off.begin(), mid, off.end());
  const Scalar median = *mid;
  return median > Scalar(0) ? Scalar(1) / (dims * median) : Scalar(1) / dims;
}

template <typename Scalar>
struct KernelPcaResult {
  Embedding2D<Scalar> embedding;
  VectorX<Scalar> eigenvalues;  // of the centred kernel, top k
};

template <typename Scalar>
KernelPcaResult<Scalar> kernel_pca_rbf(const MatrixX<Scalar>& x, Eigen::Index k, Scalar gamma) {
  const Eigen::Index n = x.rows();
  if (!(gamma > Scalar(0))) throw InvalidArgument("kernel_pca: gamma must be positive");
  if (n < 2) throw InvalidArgument("kernel_pca: need at least two points");
  if (k < 1 || k > n) throw InvalidArgument("kernel_pca: k must lie in [1, N]");
  const MatrixX<Scalar> kernel = rbf_kernel(x, gamma);
  const VectorX<Scalar> row_mean = kernel.rowwise().mean();
  const Scalar all_mean = kernel.mean();
  MatrixX<Scalar> centered = kernel;
  centered.colwise() -= row_mean;
  centered.rowwise() -= row_mean.transpose();
  centered.array() += all_mean;
  centered = (centered + centered.transpose()) / Scalar(2);

  auto [values, vectors] = detail::descending_eigen<Scalar>(centered);
  MatrixX<Scalar> top = vectors.leftCols(k);
  detail::canonicalize_signs(top);
  KernelPcaResult<Scalar> r;
  r.eigenvalues = values.head(k).cwiseMax(Scalar(0));
  r.embedding.points = top * r.eigenvalues.cwiseSqrt().asDiagonal();
  r.embedding.method = "kernel_pca";
  r.embedding.parameters = {{"k", static_cast<double>(k)}, {"gamma", static_cast<double>(gamma)}};
  r.embedding.source_dim = x.cols();
  return r;
}

// ---------------------------------------------------------------------------
// Exact t-SNE
// ---------------------------------------------------------------------------

enum class TsneInit { kPca, kRandom };

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iteration = 250;
  Eigen::Index dims = 2;
  TsneInit init = TsneInit::kPca;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct Affinities {
  MatrixX<Scalar> conditional;  // row i is P(j | i)
  VectorX<Scalar> entropy_bits; // H(P_i) in bits
  VectorX<Scalar> precision;    // beta_i = 1 / (2 sigma_i^2)
};

/// Per-point Gaussian bandwidths found by bisection so that 2^H(P_i) equals
/// the perplexity.
template <typename Scalar>
Affinities<Scalar> conditional_affinities(const MatrixX<Scalar>& x, Scalar perplexity) {
  const Eigen::Index n = x.rows();
  if (!(perplexity > Scalar(1) && perplexity < Scalar(n)))
    throw InvalidArgument("tsne: perplexity must lie in (1, N)");
  const MatrixX<Scalar> d2 = detail::squared_distances(x);
  const Scalar target = std::log(perplexity);  // nats
  Affinities<Scalar> a;
  a.conditional = MatrixX<Scalar>::Zero(n, n);
  a.entropy_bits.resize(n);
  a.precision.resize(n);
  VectorX<Scalar> row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar beta(1), lo(0), hi = std::numeric_limits<Scalar>::infinity();
    Scalar entropy(0);
    // Distances are shifted by the row minimum for stability; the shift
    // cancels in the normalisation.
    Scalar dmin = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int iter = 0; iter < 200; ++iter) {
      Scalar sum(0), weighted(0);
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? Scalar(0) : std::exp(-beta * (d2(i, j) - dmin));
        sum += row(j);
        weighted += row(j) * (d2(i, j) - dmin);
      }
      entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const Scalar diff = entropy - target;
      if (std::abs(diff) < Scalar(1e-10)) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * Scalar(2) : (beta + hi) / Scalar(2);
      } else {
        hi = beta;
        beta = (beta + lo) / Scalar(2);
      }
    }
    a.conditional.row(i) = row.transpose();
    a.entropy_bits(i) = entropy / std::log(Scalar(2));
    a.precision(i) = beta;
  }
  return a;
}

template <typename Scalar>
struct TsneResult {
  Embedding2D<Scalar> embedding;
  std::vector<Scalar> kl_trace;  // KL(P || Q) after each iteration, un-exaggerated P
  Affinities<Scalar> affinities;
};

namespace detail {

template <typename Scalar>
TsneResult<Scalar> tsne_in_order(const MatrixX<Scalar>& x, const TsneOptions& opt) {
  const Eigen::Index n = x.rows();
  TsneResult<Scalar> r;
  r.affinities = conditional_affinities<Scalar>(x, static_cast<Scalar>(opt.perplexity));
  MatrixX<Scalar> p = r.affinities.conditional + r.affinities.conditional.transpose();
  p /= p.sum();
  p = p.cwiseMax(Scalar(1e-12));
  p.diagonal().setZero();

  MatrixX<Scalar> y;
  if (opt.init == TsneInit::kPca && x.cols() >= opt.dims) {
    y = pca<Scalar>(x, opt.dims).embedding.points;
    const Scalar sd = std::sqrt((y.col(0).array() - y.col(0).mean()).square().sum() / Scalar(n));
    y *= sd > Scalar(0) ? Scalar(1e-4) / sd : Scalar(0);
  } else {
    SeededRng rng(opt.seed);
    y = Scalar(1e-4) * sample_standard_gaussian<Scalar>(rng, n, opt.dims);
  }

  MatrixX<Scalar> update = MatrixX<Scalar>::Zero(n, opt.dims);
  MatrixX<Scalar> gains = MatrixX<Scalar>::Ones(n, opt.dims);
  MatrixX<Scalar> num(n, n), grad(n, opt.dims);
  for (int iter = 0; iter < opt.iterations; ++iter) {
    const Scalar exaggeration =
        iter < opt.exaggeration_iterations ? static_cast<Scalar>(opt.early_exaggeration) : Scalar(1);
    const Scalar momentum = static_cast<Scalar>(
        iter < opt.momentum_switch_iteration ? opt.initial_momentum : opt.final_momentum);

    num = (Scalar(1) + detail::squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const Scalar z = num.sum();
    // sum_j (exag p_ij - q_ij) num_ij (y_i - y_j): the KL gradient without its
    // factor 4, the scale the default learning rate of 200 is quoted for.
    const MatrixX<Scalar> w = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    grad = w.rowwise().sum().asDiagonal() * y - w * y;

    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < opt.dims; ++c) {
        const bool same_sign = (grad(i, c) > 0) == (update(i, c) > 0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * Scalar(0.8), Scalar(0.01)) : gains(i, c) + Scalar(0.2);
      }
    }
    update = momentum * update - static_cast<Scalar>(opt.learning_rate) * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();

    // KL(P || Q) at the updated positions.
    num = (Scalar(1) + detail::squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const Scalar zq = num.sum();
    Scalar kl(0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) kl += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / zq, Scalar(1e-300)));
    r.kl_trace.push_back(kl);
  }
  r.embedding.points = std::move(y);
  r.embedding.method = "tsne";
  r.embedding.parameters = {{"perplexity", opt.perplexity},
                            {"iterations", static_cast<double>(opt.iterations)},
                            {"early_exaggeration", opt.early_exaggeration},
                            {"learning_rate", opt.learning_rate},
                            {"seed", static_cast<double>(opt.seed)}};
  r.embedding.source_dim = x.cols();
  return r;
}

}  // namespace detail

/// The optimisation is chaotic enough to amplify summation-order round-off,
/// so rows are processed in lexicographic order and the result mapped back:
/// permuting the input permutes the output exactly.
template <typename Scalar>
TsneResult<Scalar> tsne(const MatrixX<Scalar>& x, const TsneOptions& opt) {
  const Eigen::Index n = x.rows();
  if (n < 4) throw InvalidArgument("tsne: need at least four points");
  if (opt.iterations < 0 || opt.dims < 1) throw InvalidArgument("tsne: invalid options");
  if (!all_finite(x)) throw InvalidArgument("tsne: input contains non-finite values");

  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, Eigen::Index> order(n);
  order.setIdentity();
  auto& idx = order.indices();
  std::stable_sort(idx.data(), idx.data() + n, [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    return false;
  });
  const MatrixX<Scalar> sorted = order.transpose() * x;
  TsneResult<Scalar> r = detail::tsne_in_order(sorted, opt);
  r.embedding.points = order * r.embedding.points;
  r.affinities.conditional = order * r.affinities.conditional * order.transpose();
  r.affinities.entropy_bits = order * r.affinities.entropy_bits;
  r.affinities.precision = order * r.affinities.precision;
  return r;
}

// ---------------------------------------------------------------------------
// Spectral embedding
// ---------------------------------------------------------------------------

/// Union of directed k-nearest-neighbour edges, unit weights. Ties are broken
/// by index.
template <typename Scalar>
MatrixX<Scalar> knn_graph(const MatrixX<Scalar>& x, Eigen::Index k_neighbors) {
  const Eigen::Index n = x.rows();
  if (k_neighbors < 1 || k_neighbors >= n)
    throw InvalidArgument("knn graph: k_neighbors must lie in [1, N)");
  const MatrixX<Scalar> d2 = detail::squared_distances(x);
  MatrixX<Scalar> w = MatrixX<Scalar>::Zero(n, n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::swap(idx[static_cast<std::size_t>(i)], idx.back());
    idx.pop_back();
    std::partial_sort(idx.begin(), idx.begin() + k_neighbors, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return d2(i, a) < d2(i, b) || (d2(i, a) == d2(i, b) && a < b);
                      });
    for (Eigen::Index m = 0; m < k_neighbors; ++m) {
      const Eigen::Index j = idx[static_cast<std::size_t>(m)];
      w(i, j) = w(j, i) = Scalar(1);
    }
    idx.resize(static_cast<std::size_t>(n));
  }
  return w;
}

template <typename Scalar>
Eigen::Index connected_components(const MatrixX<Scalar>& adjacency) {
  const Eigen::Index n = adjacency.rows();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  Eigen::Index count = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++count;
    stack.push_back(s);
    seen[static_cast<std::size_t>(s)] = true;
    while (!stack.empty()) {
      const Eigen::Index u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v)
        if (adjacency(u, v) != Scalar(0) && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          stack.push_back(v);
        }
    }
  }
  return count;
}

/// Coordinates from the eigenvectors of the symmetric normalised Laplacian
/// after the trivial one, mapped back by D^-1/2.
template <typename Scalar>
Embedding2D<Scalar> spectral_embedding(const MatrixX<Scalar>& x, Eigen::Index k_neighbors,
                                       Eigen::Index dims = 2) {
  const Eigen::Index n = x.rows();
  if (dims < 1 || dims >= n) throw InvalidArgument("spectral_embedding: dims must lie in [1, N)");
  Embedding2D<Scalar> e;
  e.method = "spectral";
  e.parameters = {{"k_neighbors", static_cast<double>(k_neighbors)}, {"dims", static_cast<double>(dims)}};
  e.source_dim = x.cols();
  const MatrixX<Scalar> w = knn_graph(x, k_neighbors);
  if ((x.rowwise() - x.row(0)).cwiseAbs().maxCoeff() == Scalar(0)) {
    e.points = MatrixX<Scalar>::Zero(n, dims);
    e.warnings.push_back("all points coincide; embedding is degenerate");
    return e;
  }
  const Eigen::Index components = connected_components(w);
  if (components > dims + 1)
    e.warnings.push_back("neighbourhood graph has " + std::to_string(components) +
                         " components, more than dims + 1");

  const VectorX<Scalar> degree = w.rowwise().sum();
  const VectorX<Scalar> inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  MatrixX<Scalar> lap = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
  lap.diagonal().array() += Scalar(1);
  // Push the trivial eigenvector D^1/2 1 above the spectrum (which lies in [0, 2]).
  const VectorX<Scalar> trivial = degree.cwiseSqrt().normalized();
  lap += Scalar(3) * trivial * trivial.transpose();

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(lap);
  if (solver.info() != Eigen::Success) throw NumericalError("spectral_embedding: eigensolver failed");
  MatrixX<Scalar> coords = inv_sqrt.asDiagonal() * solver.eigenvectors().leftCols(dims);
  detail::canonicalize_signs(coords);
  e.points = std::move(coords);
  return e;
}

}  // namespace vrae::projection
