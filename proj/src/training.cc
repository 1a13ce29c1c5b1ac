#include "p2c/training.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "p2c/checkpoint.h"
#include "p2c/errors.h"

namespace p2c {

TrainConfig TrainConfig::desk_scale() {
  TrainConfig t;
  t.batch_size = 1;
  t.grad_clip = 0.5;
  return t;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (halve_after_epoch > epochs) {
    throw ConfigError("halve_after_epoch must not exceed epochs");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  if (!(grad_clip > 0)) throw ConfigError("grad_clip must be positive");
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  if (epoch < 1 || epoch > config.epochs) {
    throw DomainError("epoch " + std::to_string(epoch) + " outside [1, " +
                      std::to_string(config.epochs) + "]");
  }
  if (epoch <= config.halve_after_epoch) return config.lr0;
  return std::ldexp(config.lr0,
                    -static_cast<int>(epoch - config.halve_after_epoch));
}

double sgd_step(ParameterSet& params, double lr, double grad_clip) {
  if (lr < 0) throw DomainError("learning rate must be non-negative");
  double sq = 0.0;
  for (const auto& [name, t] : params.entries()) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in parameter " + name);
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > grad_clip ? grad_clip / norm : 1.0;
  for (auto& [name, t] : params.entries()) {
    if (!t.has_grad()) continue;
    auto values = t.mutable_values();
    const auto grad = t.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= lr * scale * grad[i];
    }
  }
  return norm;
}

std::string format_epoch(const EpochRecord& record) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu\t%.10g\t%.10g", record.epoch, record.lr,
                record.loss);
  return buf;
}

std::vector<EpochRecord> train(P2CModel& model,
                               std::span<const Example> corpus,
                               const TrainConfig& config,
                               const TrainOptions& options) {
  config.validate();
  if (corpus.empty()) throw DomainError("cannot train on an empty corpus");
  model.set_dropout(config.dropout);

  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<EpochRecord> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    const auto batches =
        batchify(corpus, model.vocabs(), config.batch_size, config.seed + epoch);
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (const Batch& batch : batches) {
      model.params().zero_grad();
      Graph graph;
      const Tensor loss =
          model.forward_loss(graph, batch, RunMode::kTrain, &dropout_rng);
      if (!std::isfinite(loss.item())) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch));
      }
      graph.backward(loss);
      sgd_step(model.params(), lr, config.grad_clip);

      std::size_t batch_tokens = 0;
      for (std::size_t n : batch.target_lengths) batch_tokens += n + 1;
      weighted += loss.item() * static_cast<double>(batch_tokens);
      tokens += batch_tokens;
    }
    model.params().zero_grad();
    const EpochRecord record{epoch, lr, weighted / static_cast<double>(tokens)};
    history.push_back(record);

    if (options.output_dir) {
      std::filesystem::create_directories(*options.output_dir);
      save_checkpoint_file(model, *options.output_dir / "model.ckpt");
      std::ofstream log(*options.output_dir / "metrics.tsv",
                        epoch == 1 ? std::ios::trunc : std::ios::app);
      log << format_epoch(record) << '\n';
    }
    if (options.on_epoch) options.on_epoch(record);
  }
  return history;
}

}  // namespace p2c
