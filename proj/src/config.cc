#include "p2c/config.h"

#include <fstream>
#include <initializer_list>
#include <string>

#include "p2c/errors.h"

namespace p2c {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known |= key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, Variant variant,
                           const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"scale", "model", "train", "min_count", "pinyin_embeddings",
              "target_embeddings"});
  RunConfig run;
  std::string scale = "desk";
  read(j, "scale", scale);
  if (scale == "desk") {
    run.model = ModelConfig::desk_scale(variant);
    run.train = TrainConfig::desk_scale();
  } else if (scale == "full") {
    run.model = ModelConfig::full_scale(variant);
  } else {
    throw ConfigError("scale must be desk or full, got '" + scale + "'");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model",
               {"pinyin_embed", "target_embed", "gru_hidden", "lstm_layers",
                "lstm_cells", "ga_hops", "front_init"});
    read(m, "pinyin_embed", run.model.pinyin_embed);
    read(m, "target_embed", run.model.target_embed);
    read(m, "gru_hidden", run.model.gru_hidden);
    read(m, "lstm_layers", run.model.lstm_layers);
    read(m, "lstm_cells", run.model.lstm_cells);
    read(m, "ga_hops", run.model.ga_hops);
    read(m, "front_init", run.model.front_init);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"epochs", "lr0", "halve_after_epoch", "batch_size", "dropout",
                "seed", "grad_clip"});
    read(t, "epochs", run.train.epochs);
    read(t, "lr0", run.train.lr0);
    read(t, "halve_after_epoch", run.train.halve_after_epoch);
    read(t, "batch_size", run.train.batch_size);
    read(t, "dropout", run.train.dropout);
    read(t, "seed", run.train.seed);
    read(t, "grad_clip", run.train.grad_clip);
  }
  read(j, "min_count", run.min_count);
  if (run.min_count < 1) throw ConfigError("min_count must be >= 1");
  auto resolve = [&](const char* key) -> std::optional<std::filesystem::path> {
    std::string p;
    read(j, key, p);
    if (p.empty()) return std::nullopt;
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  run.pinyin_embeddings = resolve("pinyin_embeddings");
  run.target_embeddings = resolve("target_embeddings");
  run.model.dropout = run.train.dropout;
  run.model.validate();
  run.train.validate();
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path, Variant variant) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, variant, path.parent_path());
}

}  // namespace p2c
