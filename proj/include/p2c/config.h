#ifndef P2C_CONFIG_H_
#define P2C_CONFIG_H_

#include <cstddef>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "p2c/model.h"
#include "p2c/training.h"

namespace p2c {

// Everything `train` needs beyond the corpus.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t min_count = 1;
  std::optional<std::filesystem::path> pinyin_embeddings;
  std::optional<std::filesystem::path> target_embeddings;
};

// A JSON object with optional members
//   "scale": "desk" | "full"          (base presets, default desk)
//   "model": {"pinyin_embed", "target_embed", "gru_hidden", "lstm_layers",
//             "lstm_cells", "ga_hops", "front_init"}
//   "train": {"epochs", "lr0", "halve_after_epoch", "batch_size",
//             "dropout", "seed", "grad_clip"}
//   "min_count", "pinyin_embeddings", "target_embeddings"
// Unknown keys are rejected. Relative embedding paths resolve against
// `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, Variant variant,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path, Variant variant);

}  // namespace p2c

#endif  // P2C_CONFIG_H_
