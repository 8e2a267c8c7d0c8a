#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrae/dataset.hpp"
#include "vrae/numerics.hpp"

namespace vrae::model {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class AnnealMode { kConstant, kCyclical };

std::string_view to_string(AnnealMode mode);
AnnealMode parse_anneal_mode(std::string_view text);

/// KL weight schedule. Cyclical mode splits training into `cycles` equal
/// periods; within each, beta rises linearly from 0 to beta_max over the
/// first `ramp_fraction` of the period and then holds.
struct AnnealSchedule {
  AnnealMode mode = AnnealMode::kConstant;
  int cycles = 4;
  double ramp_fraction = 0.5;
  double beta_max = 1.0;

  void validate() const;
  bool operator==(const AnnealSchedule&) const = default;
};

double beta_at(const AnnealSchedule& schedule, std::int64_t global_step, std::int64_t total_steps);

struct VraeConfig {
  Eigen::Index input_dim = 6;
  Eigen::Index hidden_units = 90;
  Eigen::Index latent_dim = 20;
  double learning_rate = 5e-4;
  double dropout_rate = 0.2;
  double clip_norm = 5.0;
  Eigen::Index batch_size = 64;
  int epochs = 200;
  AnnealSchedule anneal;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const VraeConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Index of each trainable tensor inside VraeWeights::tensors.
/// LSTM gate blocks are stacked [input; forget; candidate; output].
enum Param : std::size_t {
  kEncInput,      // 4H x d     encoder input weights
  kEncRecurrent,  // 4H x H     encoder recurrent weights
  kEncBias,       // 4H x 1
  kMuWeight,      // Z x H      posterior mean head
  kMuBias,        // Z x 1
  kSigmaWeight,   // Z x H      posterior scale head (softplus)
  kSigmaBias,     // Z x 1
  kInitHWeight,   // H x Z      z -> decoder initial hidden state
  kInitHBias,     // H x 1
  kInitCWeight,   // H x Z      z -> decoder initial cell state
  kInitCBias,     // H x 1
  kDecRecurrent,  // 4H x H     decoder recurrent weights (inputs are zero)
  kDecBias,       // 4H x 1
  kOutWeight,     // d x H      per-step reconstruction head
  kOutBias,       // d x 1
  kParamCount
};

const std::array<std::string_view, kParamCount>& param_names();

struct VraeWeights {
  std::vector<Matrix> tensors;

  Matrix& operator[](Param p) { return tensors[p]; }
  const Matrix& operator[](Param p) const { return tensors[p]; }

  /// Expected shape of each tensor for `config`.
  static std::array<std::pair<Eigen::Index, Eigen::Index>, kParamCount> shapes(
      const VraeConfig& config);
  static VraeWeights zeros(const VraeConfig& config);
  /// Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget-gate bias 1.
  static VraeWeights initialize(const VraeConfig& config, SeededRng& rng);

  /// Throws DataError if any tensor has the wrong shape or a non-finite entry.
  void check(const VraeConfig& config) const;

  Eigen::Index hidden() const { return tensors[kEncRecurrent].cols(); }
  Eigen::Index latent() const { return tensors[kMuWeight].rows(); }
  Eigen::Index input_dim() const { return tensors[kEncInput].cols(); }
};

// ---------------------------------------------------------------------------
// Single-sequence operations
// ---------------------------------------------------------------------------

/// Final hidden state of the encoder LSTM run from zero state over `window`
/// (L x d).
Vector encoder_forward(const VraeWeights& weights, const Matrix& window);

struct Posterior {
  Vector mu;
  Vector sigma;
};

/// mu affine in h; sigma = softplus(affine) + kSigmaFloor.
Posterior posterior_params(const VraeWeights& weights, const Vector& hidden);

inline constexpr double kSigmaFloor = 1e-6;

/// z = mu + sigma * epsilon; all four are columns (one per sequence).
struct LatentSample {
  Matrix mu;
  Matrix sigma;
  Matrix epsilon;
  Matrix z;
};

LatentSample reparameterize(const Matrix& mu, const Matrix& sigma, SeededRng& rng);
/// Same, with a caller-provided epsilon.
LatentSample reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& epsilon);

/// L x d reconstruction from a latent vector.
Matrix decoder_forward(const VraeWeights& weights, const Vector& z, Eigen::Index length);

/// KL(N(mu, diag sigma^2) || N(0, I)), summed over dimensions.
double kl_divergence(const Vector& mu, const Vector& sigma);

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// recon = mean squared error over all entries; total = recon + beta * kl.
LossTerms loss(const Matrix& x, const Matrix& reconstruction, const Vector& mu,
               const Vector& sigma, double beta);

// ---------------------------------------------------------------------------
// Batched training pass
// ---------------------------------------------------------------------------

/// Per-step activations of one LSTM run over a batch (columns = sequences).
struct LstmTrace {
  std::vector<Matrix> input_gate, forget_gate, candidate, output_gate;
  std::vector<Matrix> cell_tanh;
  std::vector<Matrix> cell;    // cell[0] is the initial state
  std::vector<Matrix> hidden;  // hidden[0] is the initial state
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // per step, d x B
  LstmTrace encoder;
  Matrix dropout_mask;  // H x B, already scaled by 1/(1-p); empty when disabled
  Matrix encoded;       // h_T after dropout
  Matrix sigma_preactivation;
  LatentSample latent;
  LstmTrace decoder;
  std::vector<Matrix> outputs;  // per step, d x B
  double beta = 0.0;
  LossTerms loss;  // batch mean of the per-sequence losses
};

/// Forward pass over a batch of L x d windows with fixed noise. `epsilon` is
/// Z x B. `dropout_mask` is H x B (inverted-dropout scaling included) or
/// empty for no dropout.
ForwardCache forward(const VraeWeights& weights, std::span<const Matrix> batch,
                     const Matrix& epsilon, const Matrix& dropout_mask, double beta);

/// Gradients of cache.loss.total with respect to every tensor, in Param order.
std::vector<Matrix> backward(const VraeWeights& weights, const ForwardCache& cache);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise 1/(1-rate).
Matrix dropout_mask(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double rate);

// ---------------------------------------------------------------------------
// Training and inference
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double beta = 0.0;
  LossTerms train;
  LossTerms validation;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  VraeConfig config;
  VraeWeights weights;
  AdamState<double> optimizer;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

/// Deterministic loss on a dataset: epsilon = 0, no dropout.
LossTerms evaluate(const VraeWeights& weights, const data::WindowedDataset& dataset, double beta,
                   Eigen::Index batch_size = 64);

/// Full training loop: seeded shuffling, minibatches, annealed KL weight,
/// global-norm clipping and Adam. Throws NumericalError on a non-finite loss.
Checkpoint train(const VraeConfig& config, const data::WindowedDataset& train_set,
                 const data::WindowedDataset& validation_set);

/// Fresh checkpoint holding the seeded initial weights.
Checkpoint initial_checkpoint(const VraeConfig& config);

struct EncodedDataset {
  Matrix latents;  // N x Z posterior means
  std::vector<data::ClassLabel> labels;
};

EncodedDataset encode_dataset(const Checkpoint& checkpoint, const data::WindowedDataset& dataset);

struct LatentLineReport {
  std::vector<data::ClassLabel> classes;
  Matrix class_means;                    // classes x Z
  Vector separation;                     // per dimension
  std::vector<Eigen::Index> ranking;     // dimensions, most separated first
  std::vector<std::size_t> samples_used; // per class
  std::vector<std::string> warnings;
};

/// Per-dimension class means over the first `samples_per_class` vectors of
/// each class, and |mean_a - mean_b| / pooled std (maximised over class pairs).
LatentLineReport latent_line_report(const Matrix& latents,
                                    const std::vector<data::ClassLabel>& labels,
                                    std::size_t samples_per_class);

}  // namespace vrae::model
