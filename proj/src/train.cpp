#include <cmath>
#include <numeric>

#include "vrae/model.hpp"

namespace vrae::model {

namespace {

void check_dataset(const VraeConfig& config, const data::WindowedDataset& ds, const char* what) {
  for (const auto& w : ds.windows) {
    if (w.cols() != config.input_dim)
      throw InvalidArgument(std::string(what) + ": windows have " + std::to_string(w.cols()) +
                            " features, model expects " + std::to_string(config.input_dim));
    if (w.rows() < 1) throw InvalidArgument(std::string(what) + ": empty window");
  }
}

std::vector<Matrix> gather(const data::WindowedDataset& ds, std::span<const std::size_t> idx) {
  std::vector<Matrix> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.windows[i]);
  return out;
}

// Initial weights and the training stream both derive from the config seed.
struct SeedStreams {
  VraeWeights weights;
  std::uint64_t training_seed;
};

SeedStreams seed_streams(const VraeConfig& config) {
  SeededRng init_rng(config.seed);
  VraeWeights w = VraeWeights::initialize(config, init_rng);
  return {std::move(w), init_rng.fork_seed()};
}

}  // namespace

LossTerms evaluate(const VraeWeights& weights, const data::WindowedDataset& dataset, double beta,
                   Eigen::Index batch_size) {
  LossTerms acc;
  if (dataset.size() == 0) return acc;
  if (batch_size < 1) throw InvalidArgument("evaluate: batch size must be at least 1");
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    const auto batch = gather(dataset, std::span(order).subspan(start, stop - start));
    const auto b = static_cast<Eigen::Index>(batch.size());
    const auto cache = forward(weights, batch, Matrix::Zero(weights.latent(), b), Matrix(), beta);
    const double share = static_cast<double>(b) / static_cast<double>(n);
    acc.total += share * cache.loss.total;
    acc.recon += share * cache.loss.recon;
    acc.kl += share * cache.loss.kl;
  }
  return acc;
}

Checkpoint initial_checkpoint(const VraeConfig& config) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  ck.weights = seed_streams(config).weights;
  ck.optimizer = AdamState<double>::zeros_like(ck.weights.tensors);
  return ck;
}

Checkpoint train(const VraeConfig& config, const data::WindowedDataset& train_set,
                 const data::WindowedDataset& validation_set) {
  config.validate();
  if (train_set.size() == 0) throw InvalidArgument("train: empty training set");
  check_dataset(config, train_set, "train");
  check_dataset(config, validation_set, "validation");

  auto [weights, training_seed] = seed_streams(config);
  Checkpoint ck;
  ck.config = config;
  ck.optimizer = AdamState<double>::zeros_like(weights.tensors);
  SeededRng rng(training_seed);

  const std::size_t n = train_set.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::int64_t batches_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total_steps = batches_per_epoch * config.epochs;
  std::int64_t global_step = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::int64_t k = 0; k < batches_per_epoch; ++k, ++global_step) {
      const std::size_t start = static_cast<std::size_t>(k) * batch;
      const std::size_t stop = std::min(n, start + batch);
      const auto windows = gather(train_set, std::span(order).subspan(start, stop - start));
      const auto b = static_cast<Eigen::Index>(windows.size());

      const double beta = beta_at(config.anneal, global_step, total_steps);
      const Matrix eps = sample_standard_gaussian(rng, config.latent_dim, b);
      const Matrix mask = config.dropout_rate > 0.0
                              ? dropout_mask(rng, config.hidden_units, b, config.dropout_rate)
                              : Matrix();
      const auto cache = forward(weights, windows, eps, mask, beta);
      if (!std::isfinite(cache.loss.total))
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(k + 1));

      auto grads = backward(weights, cache);
      clip_global_norm<double>(grads, config.clip_norm);
      adam_step<double>(weights.tensors, grads, ck.optimizer, config.learning_rate);

      const double share = static_cast<double>(b) / static_cast<double>(n);
      rec.train.total += share * cache.loss.total;
      rec.train.recon += share * cache.loss.recon;
      rec.train.kl += share * cache.loss.kl;
      rec.beta = beta;
    }
    rec.validation = evaluate(weights, validation_set, rec.beta, config.batch_size);
    if (!std::isfinite(rec.validation.total))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    ck.history.push_back(rec);
  }
  ck.weights = std::move(weights);
  ck.epoch = config.epochs;
  return ck;
}

EncodedDataset encode_dataset(const Checkpoint& checkpoint, const data::WindowedDataset& dataset) {
  checkpoint.weights.check(checkpoint.config);
  check_dataset(checkpoint.config, dataset, "encode");
  EncodedDataset out;
  out.latents.resize(static_cast<Eigen::Index>(dataset.size()), checkpoint.config.latent_dim);
  out.labels = dataset.labels;
  // One window at a time so each row depends on its own window only.
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Vector h = encoder_forward(checkpoint.weights, dataset.windows[i]);
    out.latents.row(static_cast<Eigen::Index>(i)) =
        posterior_params(checkpoint.weights, h).mu.transpose();
  }
  return out;
}

}  // namespace vrae::model
