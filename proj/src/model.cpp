#include "vrae/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vrae::model {

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(AnnealMode mode) {
  return mode == AnnealMode::kCyclical ? "cyclical" : "constant";
}

AnnealMode parse_anneal_mode(std::string_view text) {
  if (text == "constant") return AnnealMode::kConstant;
  if (text == "cyclical") return AnnealMode::kCyclical;
  throw InvalidArgument("unknown anneal mode '" + std::string(text) +
                        "' (expected constant or cyclical)");
}

void AnnealSchedule::validate() const {
  if (!(beta_max >= 0.0)) throw InvalidArgument("anneal: beta_max must be non-negative");
  if (mode == AnnealMode::kCyclical) {
    if (cycles < 1) throw InvalidArgument("anneal: cycles must be at least 1");
    if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0))
      throw InvalidArgument("anneal: ramp fraction must lie in (0, 1]");
  }
}

double beta_at(const AnnealSchedule& schedule, std::int64_t global_step, std::int64_t total_steps) {
  if (global_step < 0 || global_step >= total_steps)
    throw InvalidArgument("beta_at: step " + std::to_string(global_step) + " outside [0, " +
                          std::to_string(total_steps) + ")");
  if (schedule.mode == AnnealMode::kConstant) return schedule.beta_max;
  const double period = static_cast<double>(total_steps) / schedule.cycles;
  const double position = std::fmod(static_cast<double>(global_step), period) / period;
  return schedule.beta_max * std::min(1.0, position / schedule.ramp_fraction);
}

void VraeConfig::validate() const {
  if (input_dim < 1 || hidden_units < 1 || latent_dim < 1)
    throw InvalidArgument("vrae config: dimensions must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("vrae config: learning rate must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidArgument("vrae config: dropout rate must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw InvalidArgument("vrae config: clip norm must be positive");
  if (batch_size < 1) throw InvalidArgument("vrae config: batch size must be at least 1");
  if (epochs < 0) throw InvalidArgument("vrae config: epochs must be non-negative");
  anneal.validate();
}

// ---------------------------------------------------------------------------
// Parameters

const std::array<std::string_view, kParamCount>& param_names() {
  static const std::array<std::string_view, kParamCount> names = {
      "encoder.input_weight",  "encoder.recurrent_weight", "encoder.bias",
      "posterior.mu_weight",   "posterior.mu_bias",        "posterior.sigma_weight",
      "posterior.sigma_bias",  "latent.hidden_weight",     "latent.hidden_bias",
      "latent.cell_weight",    "latent.cell_bias",         "decoder.recurrent_weight",
      "decoder.bias",          "output.weight",            "output.bias"};
  return names;
}

std::array<std::pair<Eigen::Index, Eigen::Index>, kParamCount> VraeWeights::shapes(
    const VraeConfig& config) {
  const Eigen::Index d = config.input_dim, h = config.hidden_units, z = config.latent_dim;
  return {{{4 * h, d},
           {4 * h, h},
           {4 * h, 1},
           {z, h},
           {z, 1},
           {z, h},
           {z, 1},
           {h, z},
           {h, 1},
           {h, z},
           {h, 1},
           {4 * h, h},
           {4 * h, 1},
           {d, h},
           {d, 1}}};
}

VraeWeights VraeWeights::zeros(const VraeConfig& config) {
  VraeWeights w;
  for (const auto& [r, c] : shapes(config)) w.tensors.push_back(Matrix::Zero(r, c));
  return w;
}

VraeWeights VraeWeights::initialize(const VraeConfig& config, SeededRng& rng) {
  config.validate();
  VraeWeights w = zeros(config);
  for (std::size_t p = 0; p < kParamCount; ++p) {
    auto& m = w.tensors[p];
    if (m.cols() == 1) continue;  // biases
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    m = sample_uniform(rng, m.rows(), m.cols(), -bound, bound);
  }
  const Eigen::Index h = config.hidden_units;
  w[kEncBias].middleRows(h, h).setOnes();
  w[kDecBias].middleRows(h, h).setOnes();
  return w;
}

void VraeWeights::check(const VraeConfig& config) const {
  if (tensors.size() != kParamCount)
    throw DataError("weights: expected " + std::to_string(kParamCount) + " tensors, found " +
                    std::to_string(tensors.size()));
  const auto expected = shapes(config);
  for (std::size_t p = 0; p < kParamCount; ++p) {
    const auto& m = tensors[p];
    if (m.rows() != expected[p].first || m.cols() != expected[p].second)
      throw DataError("weights: tensor " + std::string(param_names()[p]) + " has shape " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                      std::to_string(expected[p].first) + "x" + std::to_string(expected[p].second));
    if (!m.allFinite())
      throw DataError("weights: tensor " + std::string(param_names()[p]) + " is not finite");
  }
}

// ---------------------------------------------------------------------------
// LSTM kernels (batched, one column per sequence)

namespace {

Matrix tanh_of(const Matrix& m) { return m.array().tanh().matrix(); }

/// Runs `steps` LSTM steps from (h0, c0). `w_in`/`inputs` may be null for an
/// input-free recurrence.
LstmTrace run_lstm(const Matrix* w_in, const Matrix& w_rec, const Matrix& bias,
                   const std::vector<Matrix>* inputs, Eigen::Index steps, Matrix h0, Matrix c0) {
  const Eigen::Index h = w_rec.cols();
  const Eigen::Index batch = h0.cols();
  LstmTrace tr;
  const auto n = static_cast<std::size_t>(steps);
  tr.input_gate.reserve(n);
  tr.forget_gate.reserve(n);
  tr.candidate.reserve(n);
  tr.output_gate.reserve(n);
  tr.cell_tanh.reserve(n);
  tr.cell.reserve(n + 1);
  tr.hidden.reserve(n + 1);
  tr.hidden.push_back(std::move(h0));
  tr.cell.push_back(std::move(c0));

  Matrix pre(4 * h, batch);
  for (std::size_t t = 0; t < n; ++t) {
    pre.noalias() = w_rec * tr.hidden.back();
    if (w_in != nullptr) pre.noalias() += *w_in * (*inputs)[t];
    pre.colwise() += bias.col(0);

    tr.input_gate.push_back(sigmoid(pre.topRows(h)));
    tr.forget_gate.push_back(sigmoid(pre.middleRows(h, h)));
    tr.candidate.push_back(pre.middleRows(2 * h, h).array().tanh().matrix());
    tr.output_gate.push_back(sigmoid(pre.bottomRows(h)));

    Matrix c = (tr.forget_gate.back().array() * tr.cell.back().array() +
                tr.input_gate.back().array() * tr.candidate.back().array())
                   .matrix();
    tr.cell_tanh.push_back(tanh_of(c));
    tr.hidden.push_back((tr.output_gate.back().array() * tr.cell_tanh.back().array()).matrix());
    tr.cell.push_back(std::move(c));
  }
  return tr;
}

/// Backpropagation through time. `dh_external[t]` is the loss gradient on the
/// hidden output of step t (empty when none). Accumulates weight gradients and
/// returns the gradients on the initial (hidden, cell) state.
std::pair<Matrix, Matrix> lstm_backward(const LstmTrace& tr, const Matrix& w_rec,
                                        const std::vector<Matrix>* inputs,
                                        const std::vector<Matrix>& dh_external, Matrix* d_in,
                                        Matrix& d_rec, Matrix& d_bias) {
  const Eigen::Index h = w_rec.cols();
  const Eigen::Index batch = tr.hidden.front().cols();
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  Matrix dpre(4 * h, batch);

  for (std::size_t t = tr.input_gate.size(); t-- > 0;) {
    const auto i = tr.input_gate[t].array();
    const auto f = tr.forget_gate[t].array();
    const auto g = tr.candidate[t].array();
    const auto o = tr.output_gate[t].array();
    const auto ct = tr.cell_tanh[t].array();
    const auto c_prev = tr.cell[t].array();

    Matrix dh = dh_next;
    if (dh_external[t].size() != 0) dh += dh_external[t];
    const auto dha = dh.array();
    const Matrix dc = dc_next + (dha * o * (1.0 - ct.square())).matrix();
    const auto dca = dc.array();

    dpre.topRows(h) = (dca * g * i * (1.0 - i)).matrix();
    dpre.middleRows(h, h) = (dca * c_prev * f * (1.0 - f)).matrix();
    dpre.middleRows(2 * h, h) = (dca * i * (1.0 - g.square())).matrix();
    dpre.bottomRows(h) = (dha * ct * o * (1.0 - o)).matrix();

    d_rec.noalias() += dpre * tr.hidden[t].transpose();
    if (d_in != nullptr) d_in->noalias() += dpre * (*inputs)[t].transpose();
    d_bias += dpre.rowwise().sum();

    dh_next.noalias() = w_rec.transpose() * dpre;
    dc_next = (dca * f).matrix();
  }
  return {std::move(dh_next), std::move(dc_next)};
}

Matrix affine(const Matrix& w, const Matrix& b, const Matrix& x) {
  Matrix out = w * x;
  out.colwise() += b.col(0);
  return out;
}

void check_window(const VraeWeights& weights, const Matrix& window) {
  if (window.cols() != weights.input_dim())
    throw InvalidArgument("window has " + std::to_string(window.cols()) +
                          " features, model expects " + std::to_string(weights.input_dim()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-sequence operations

Vector encoder_forward(const VraeWeights& weights, const Matrix& window) {
  check_window(weights, window);
  const Eigen::Index h = weights.hidden();
  std::vector<Matrix> inputs;
  inputs.reserve(static_cast<std::size_t>(window.rows()));
  for (Eigen::Index t = 0; t < window.rows(); ++t) inputs.emplace_back(window.row(t).transpose());
  const auto tr = run_lstm(&weights[kEncInput], weights[kEncRecurrent], weights[kEncBias], &inputs,
                           window.rows(), Matrix::Zero(h, 1), Matrix::Zero(h, 1));
  return tr.hidden.back().col(0);
}

Posterior posterior_params(const VraeWeights& weights, const Vector& hidden) {
  if (hidden.size() != weights.hidden())
    throw InvalidArgument("posterior_params: hidden state has length " +
                          std::to_string(hidden.size()) + ", expected " +
                          std::to_string(weights.hidden()));
  Posterior p;
  p.mu = weights[kMuWeight] * hidden + weights[kMuBias].col(0);
  const Vector pre = weights[kSigmaWeight] * hidden + weights[kSigmaBias].col(0);
  p.sigma = softplus(pre).array() + kSigmaFloor;
  return p;
}

LatentSample reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& epsilon) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols() || mu.rows() != epsilon.rows() ||
      mu.cols() != epsilon.cols())
    throw InvalidArgument("reparameterize: mu, sigma and epsilon shapes differ");
  if (sigma.size() > 0 && !(sigma.minCoeff() > 0.0))
    throw InvalidArgument("reparameterize: sigma must be strictly positive");
  LatentSample s{mu, sigma, epsilon, Matrix()};
  s.z = mu + (sigma.array() * epsilon.array()).matrix();
  return s;
}

LatentSample reparameterize(const Matrix& mu, const Matrix& sigma, SeededRng& rng) {
  return reparameterize(mu, sigma, sample_standard_gaussian(rng, mu.rows(), mu.cols()));
}

Matrix decoder_forward(const VraeWeights& weights, const Vector& z, Eigen::Index length) {
  if (z.size() != weights.latent())
    throw InvalidArgument("decoder_forward: latent has length " + std::to_string(z.size()) +
                          ", expected " + std::to_string(weights.latent()));
  if (length < 0) throw InvalidArgument("decoder_forward: negative length");
  const Matrix zm = z;
  const auto tr =
      run_lstm(nullptr, weights[kDecRecurrent], weights[kDecBias], nullptr, length,
               affine(weights[kInitHWeight], weights[kInitHBias], zm),
               affine(weights[kInitCWeight], weights[kInitCBias], zm));
  Matrix out(length, weights.input_dim());
  for (Eigen::Index t = 0; t < length; ++t)
    out.row(t) = affine(weights[kOutWeight], weights[kOutBias],
                        tr.hidden[static_cast<std::size_t>(t) + 1])
                     .transpose();
  return out;
}

double kl_divergence(const Vector& mu, const Vector& sigma) {
  if (mu.size() != sigma.size()) throw InvalidArgument("kl_divergence: mu/sigma length mismatch");
  if (sigma.size() > 0 && !(sigma.minCoeff() > 0.0))
    throw InvalidArgument("kl_divergence: sigma must be strictly positive");
  const auto s2 = sigma.array().square();
  return 0.5 * (mu.array().square() + s2 - s2.log() - 1.0).sum();
}

LossTerms loss(const Matrix& x, const Matrix& reconstruction, const Vector& mu,
               const Vector& sigma, double beta) {
  if (x.rows() != reconstruction.rows() || x.cols() != reconstruction.cols())
    throw InvalidArgument("loss: input and reconstruction shapes differ");
  if (!(beta >= 0.0)) throw InvalidArgument("loss: beta must be non-negative");
  LossTerms out;
  out.recon = x.size() == 0 ? 0.0 : (x - reconstruction).squaredNorm() / static_cast<double>(x.size());
  out.kl = kl_divergence(mu, sigma);
  out.total = out.recon + beta * out.kl;
  return out;
}

// ---------------------------------------------------------------------------
// Batched pass

Matrix dropout_mask(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  return m;
}

ForwardCache forward(const VraeWeights& weights, std::span<const Matrix> batch,
                     const Matrix& epsilon, const Matrix& dropout_mask, double beta) {
  if (batch.empty()) throw InvalidArgument("forward: empty batch");
  if (!(beta >= 0.0)) throw InvalidArgument("forward: beta must be non-negative");
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index len = batch.front().rows();
  const Eigen::Index d = weights.input_dim();
  const Eigen::Index h = weights.hidden();
  if (len < 1) throw InvalidArgument("forward: windows must have at least one step");
  for (const auto& w : batch) {
    check_window(weights, w);
    if (w.rows() != len) throw InvalidArgument("forward: windows in a batch differ in length");
  }
  if (epsilon.rows() != weights.latent() || epsilon.cols() != b)
    throw InvalidArgument("forward: epsilon must be latent_dim x batch");
  if (dropout_mask.size() != 0 && (dropout_mask.rows() != h || dropout_mask.cols() != b))
    throw InvalidArgument("forward: dropout mask must be hidden x batch");

  ForwardCache cache;
  cache.beta = beta;
  cache.inputs.assign(static_cast<std::size_t>(len), Matrix(d, b));
  for (Eigen::Index j = 0; j < b; ++j) {
    const Matrix& w = batch[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < len; ++t)
      cache.inputs[static_cast<std::size_t>(t)].col(j) = w.row(t).transpose();
  }

  cache.encoder = run_lstm(&weights[kEncInput], weights[kEncRecurrent], weights[kEncBias],
                           &cache.inputs, len, Matrix::Zero(h, b), Matrix::Zero(h, b));
  cache.dropout_mask = dropout_mask;
  cache.encoded = cache.encoder.hidden.back();
  if (dropout_mask.size() != 0) cache.encoded.array() *= dropout_mask.array();

  const Matrix mu = affine(weights[kMuWeight], weights[kMuBias], cache.encoded);
  cache.sigma_preactivation = affine(weights[kSigmaWeight], weights[kSigmaBias], cache.encoded);
  const Matrix sigma = (softplus(cache.sigma_preactivation).array() + kSigmaFloor).matrix();
  cache.latent = reparameterize(mu, sigma, epsilon);

  cache.decoder = run_lstm(nullptr, weights[kDecRecurrent], weights[kDecBias], nullptr, len,
                           affine(weights[kInitHWeight], weights[kInitHBias], cache.latent.z),
                           affine(weights[kInitCWeight], weights[kInitCBias], cache.latent.z));

  cache.outputs.reserve(static_cast<std::size_t>(len));
  double sq = 0.0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(len); ++t) {
    cache.outputs.push_back(affine(weights[kOutWeight], weights[kOutBias], cache.decoder.hidden[t + 1]));
    sq += (cache.outputs.back() - cache.inputs[t]).squaredNorm();
  }
  double kl = 0.0;
  for (Eigen::Index j = 0; j < b; ++j)
    kl += kl_divergence(cache.latent.mu.col(j), cache.latent.sigma.col(j));

  cache.loss.recon = sq / static_cast<double>(b * len * d);
  cache.loss.kl = kl / static_cast<double>(b);
  cache.loss.total = cache.loss.recon + beta * cache.loss.kl;
  return cache;
}

std::vector<Matrix> backward(const VraeWeights& weights, const ForwardCache& cache) {
  if (cache.inputs.empty() || cache.outputs.size() != cache.inputs.size() ||
      cache.encoder.hidden.size() != cache.inputs.size() + 1 ||
      cache.decoder.hidden.size() != cache.inputs.size() + 1)
    throw InvalidArgument("backward: forward cache is missing or incomplete");

  std::vector<Matrix> grads;
  grads.reserve(kParamCount);
  for (const auto& t : weights.tensors) grads.push_back(Matrix::Zero(t.rows(), t.cols()));

  const auto len = cache.inputs.size();
  const Eigen::Index b = cache.inputs.front().cols();
  const Eigen::Index d = cache.inputs.front().rows();
  const double recon_scale = 2.0 / static_cast<double>(b * static_cast<Eigen::Index>(len) * d);
  const double kl_scale = cache.beta / static_cast<double>(b);

  // Reconstruction head.
  std::vector<Matrix> dh_dec(len);
  for (std::size_t t = 0; t < len; ++t) {
    const Matrix dy = recon_scale * (cache.outputs[t] - cache.inputs[t]);
    grads[kOutWeight].noalias() += dy * cache.decoder.hidden[t + 1].transpose();
    grads[kOutBias] += dy.rowwise().sum();
    dh_dec[t].noalias() = weights[kOutWeight].transpose() * dy;
  }

  // Decoder recurrence back to its z-conditioned initial state.
  const auto [dh0, dc0] = lstm_backward(cache.decoder, weights[kDecRecurrent], nullptr, dh_dec,
                                        nullptr, grads[kDecRecurrent], grads[kDecBias]);
  const Matrix& z = cache.latent.z;
  grads[kInitHWeight].noalias() += dh0 * z.transpose();
  grads[kInitHBias] += dh0.rowwise().sum();
  grads[kInitCWeight].noalias() += dc0 * z.transpose();
  grads[kInitCBias] += dc0.rowwise().sum();
  Matrix dz = weights[kInitHWeight].transpose() * dh0;
  dz.noalias() += weights[kInitCWeight].transpose() * dc0;

  // Reparameterisation and KL into the posterior heads.
  const auto& lat = cache.latent;
  const Matrix dmu = dz + kl_scale * lat.mu;
  const Matrix dsigma = (dz.array() * lat.epsilon.array() +
                         kl_scale * (lat.sigma.array() - lat.sigma.array().inverse()))
                            .matrix();
  const Matrix dsigma_pre = (dsigma.array() * sigmoid(cache.sigma_preactivation).array()).matrix();

  grads[kMuWeight].noalias() += dmu * cache.encoded.transpose();
  grads[kMuBias] += dmu.rowwise().sum();
  grads[kSigmaWeight].noalias() += dsigma_pre * cache.encoded.transpose();
  grads[kSigmaBias] += dsigma_pre.rowwise().sum();

  Matrix dh_top = weights[kMuWeight].transpose() * dmu;
  dh_top.noalias() += weights[kSigmaWeight].transpose() * dsigma_pre;
  if (cache.dropout_mask.size() != 0) dh_top.array() *= cache.dropout_mask.array();

  std::vector<Matrix> dh_enc(len);
  dh_enc.back() = std::move(dh_top);
  lstm_backward(cache.encoder, weights[kEncRecurrent], &cache.inputs, dh_enc,
                &grads[kEncInput], grads[kEncRecurrent], grads[kEncBias]);
  return grads;
}

// ---------------------------------------------------------------------------
// Latent analysis

LatentLineReport latent_line_report(const Matrix& latents,
                                    const std::vector<data::ClassLabel>& labels,
                                    std::size_t samples_per_class) {
  if (static_cast<std::size_t>(latents.rows()) != labels.size())
    throw InvalidArgument("latent_line_report: latents and labels differ in length");
  if (samples_per_class < 1) throw InvalidArgument("latent_line_report: need at least one sample per class");
  LatentLineReport rep;
  std::vector<data::ClassLabel> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2)
    throw InvalidArgument("latent_line_report: need at least two classes to compare");
  rep.classes = classes;

  const Eigen::Index z = latents.cols();
  const auto k = static_cast<Eigen::Index>(classes.size());
  rep.class_means = Matrix::Zero(k, z);
  Matrix class_vars = Matrix::Zero(k, z);
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size() && rows.size() < samples_per_class; ++i)
      if (labels[i] == classes[static_cast<std::size_t>(c)]) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.size() < samples_per_class)
      rep.warnings.push_back("class " + data::class_name(classes[static_cast<std::size_t>(c)]) +
                             " has only " + std::to_string(rows.size()) + " samples; " +
                             std::to_string(samples_per_class) + " requested");
    rep.samples_used.push_back(rows.size());
    Matrix sel(static_cast<Eigen::Index>(rows.size()), z);
    for (std::size_t r = 0; r < rows.size(); ++r) sel.row(static_cast<Eigen::Index>(r)) = latents.row(rows[r]);
    rep.class_means.row(c) = sel.colwise().mean();
    if (sel.rows() > 1)
      class_vars.row(c) =
          (sel.rowwise() - rep.class_means.row(c)).colwise().squaredNorm() / double(sel.rows() - 1);
  }

  rep.separation = Vector::Zero(z);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a + 1; b < k; ++b) {
      const double na = static_cast<double>(rep.samples_used[static_cast<std::size_t>(a)]);
      const double nb = static_cast<double>(rep.samples_used[static_cast<std::size_t>(b)]);
      const double dof = std::max(1.0, na + nb - 2.0);
      for (Eigen::Index j = 0; j < z; ++j) {
        const double pooled =
            std::sqrt(((na - 1.0) * class_vars(a, j) + (nb - 1.0) * class_vars(b, j)) / dof);
        const double gap = std::abs(rep.class_means(a, j) - rep.class_means(b, j));
        const double score = gap == 0.0 ? 0.0 : gap / std::max(pooled, 1e-12);
        rep.separation(j) = std::max(rep.separation(j), score);
      }
    }
  }
  rep.ranking.resize(static_cast<std::size_t>(z));
  std::iota(rep.ranking.begin(), rep.ranking.end(), Eigen::Index{0});
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return rep.separation(x) > rep.separation(y); });
  return rep;
}

}  // namespace vrae::model
