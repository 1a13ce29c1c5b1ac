#ifndef P2C_TRAINING_H_
#define P2C_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2c/corpus.h"
#include "p2c/model.h"

namespace p2c {

// Plain SGD with a constant rate that halves every epoch after
// `halve_after_epoch`. Defaults follow the published recipe.
struct TrainConfig {
  std::size_t epochs = 13;
  double lr0 = 1.0;
  std::size_t halve_after_epoch = 9;
  std::size_t batch_size = 64;
  double dropout = 0.3;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;

  // Single-example batches with a tight clip: a corpus of a few hundred
  // sentences needs far more than the handful of updates per epoch that
  // batches of 64 would give.
  static TrainConfig desk_scale();

  void validate() const;
};

// Learning rate for a 1-based epoch.
double lr_at(std::size_t epoch, const TrainConfig& config);

// Clips the global gradient norm to `grad_clip`, then p -= lr * g.
// Returns the norm before clipping.
double sgd_step(ParameterSet& params, double lr, double grad_clip);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;  // mean per-token NLL over the epoch
};

// `epoch<TAB>lr<TAB>loss`
std::string format_epoch(const EpochRecord& record);

struct TrainOptions {
  // When set, `model.ckpt` and `metrics.tsv` are rewritten after every
  // epoch. A failing epoch leaves the previous checkpoint in place.
  std::optional<std::filesystem::path> output_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

std::vector<EpochRecord> train(P2CModel& model,
                               std::span<const Example> corpus,
                               const TrainConfig& config,
                               const TrainOptions& options = {});

}  // namespace p2c

#endif  // P2C_TRAINING_H_
