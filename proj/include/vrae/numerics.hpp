#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrae/errors.hpp"

namespace vrae {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// ln(1 + e^x) without overflow for large x or underflow-to-zero for very
/// negative x.
template <std::floating_point Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  if (x > Scalar(30)) return x + log1p(exp(-x));
  return log1p(exp(x));
}

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto softplus(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return softplus(v); });
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Platform-stable random stream.
///
/// std::mt19937_64 is bit-specified by the standard; the distribution layer
/// is implemented here (53-bit uniforms, Box-Muller normals) because the
/// standard library distributions are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    // Rejection sampling keeps the result unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Derives an independent child seed; used for restarts and sub-streams.
  std::uint64_t fork_seed() {
    // splitmix64 finaliser over the next draw
    std::uint64_t z = engine_() + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename Scalar = double>
MatrixX<Scalar> sample_standard_gaussian(SeededRng& rng, Eigen::Index rows,
                                         Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw InvalidArgument("sample_standard_gaussian: negative shape");
  MatrixX<Scalar> m(rows, cols);
  // Row-major fill order so the stream layout matches the serialised layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(rng.gaussian());
  return m;
}

template <typename Scalar = double>
MatrixX<Scalar> sample_uniform(SeededRng& rng, Eigen::Index rows, Eigen::Index cols,
                               Scalar lo, Scalar hi) {
  MatrixX<Scalar> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = lo + (hi - lo) * static_cast<Scalar>(rng.uniform());
  return m;
}

// ---------------------------------------------------------------------------
// Gradient utilities
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar global_norm(std::span<const MatrixX<Scalar>> grads) {
  Scalar sq(0);
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales every gradient by max_norm / ||all grads|| when that norm exceeds
/// max_norm. Returns the pre-clip norm.
template <typename Scalar>
Scalar clip_global_norm(std::span<MatrixX<Scalar>> grads, Scalar max_norm) {
  if (!(max_norm > Scalar(0))) throw InvalidArgument("clip_global_norm: max_norm must be positive");
  const Scalar norm = global_norm<Scalar>(grads);
  if (norm > max_norm) {
    const Scalar scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

template <typename Scalar>
struct AdamState {
  std::vector<MatrixX<Scalar>> first_moment;
  std::vector<MatrixX<Scalar>> second_moment;
  std::int64_t step = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  /// Zero accumulators shaped like `params`.
  static AdamState zeros_like(std::span<const MatrixX<Scalar>> params) {
    AdamState s;
    s.first_moment.reserve(params.size());
    s.second_moment.reserve(params.size());
    for (const auto& p : params) {
      s.first_moment.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
      s.second_moment.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
    }
    return s;
  }
};

/// One bias-corrected Adam update in place.
template <typename Scalar>
void adam_step(std::span<MatrixX<Scalar>> params, std::span<const MatrixX<Scalar>> grads,
               AdamState<Scalar>& state, Scalar learning_rate) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size())
    throw InvalidArgument("adam_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols() ||
        state.first_moment[i].rows() != p.rows() || state.first_moment[i].cols() != p.cols() ||
        state.second_moment[i].rows() != p.rows() || state.second_moment[i].cols() != p.cols())
      throw InvalidArgument("adam_step: shape mismatch at parameter " + std::to_string(i));
  }
  ++state.step;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar bc1 = Scalar(1) - std::pow(state.beta1, t);
  const Scalar bc2 = Scalar(1) - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (Scalar(1) - state.beta1) * grads[i];
    v = state.beta2 * v + (Scalar(1) - state.beta2) * grads[i].cwiseAbs2();
    params[i].array() -=
        learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  }
}

/// Central finite differences of a scalar objective with respect to every
/// entry of every parameter matrix. `params` is perturbed in place and
/// restored before returning.
template <typename Scalar>
std::vector<MatrixX<Scalar>> finite_difference_gradient(
    const std::function<Scalar(std::span<const MatrixX<Scalar>>)>& objective,
    std::span<MatrixX<Scalar>> params, Scalar step) {
  if (!(step > Scalar(0))) throw InvalidArgument("finite_difference_gradient: step must be positive");
  std::vector<MatrixX<Scalar>> grads;
  grads.reserve(params.size());
  auto eval = [&] {
    const Scalar v = objective(std::span<const MatrixX<Scalar>>(params.data(), params.size()));
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError("finite_difference_gradient: objective is not finite");
    return v;
  };
  for (auto& p : params) {
    MatrixX<Scalar> g(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const Scalar saved = p(r, c);
        p(r, c) = saved + step;
        const Scalar plus = eval();
        p(r, c) = saved - step;
        const Scalar minus = eval();
        p(r, c) = saved;
        g(r, c) = (plus - minus) / (Scalar(2) * step);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace vrae
