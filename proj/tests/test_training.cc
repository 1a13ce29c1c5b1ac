#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "p2c/checkpoint.h"
#include "p2c/config.h"
#include "p2c/errors.h"
#include "p2c/synthetic.h"
#include "p2c/training.h"

using namespace p2c;
namespace fs = std::filesystem;

namespace {

ParameterSet single(double value, double grad) {
  ParameterSet p;
  Tensor& w = p.add("w", {1});
  w.mutable_values()[0] = value;
  w.mutable_grad()[0] = grad;
  return p;
}

ModelConfig small_model(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.pinyin_embed = 8;
  c.target_embed = 8;
  c.gru_hidden = 6;
  c.lstm_layers = 1;
  c.lstm_cells = 12;
  c.ga_hops = 1;
  return c;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.halve_after_epoch = epochs;
  t.batch_size = 8;
  t.dropout = 0.0;
  t.seed = 5;
  return t;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const TrainConfig d;
  CHECK(d.epochs == 13);
  CHECK(d.lr0 == 1.0);
  CHECK(d.halve_after_epoch == 9);
  CHECK(d.batch_size == 64);
  CHECK(d.dropout == 0.3);
  for (std::size_t e = 1; e <= 9; ++e) CHECK(lr_at(e, d) == 1.0);
  CHECK(lr_at(10, d) == 0.5);
  CHECK(lr_at(11, d) == 0.25);
  CHECK(lr_at(12, d) == 0.125);
  CHECK(lr_at(13, d) == 0.0625);
  CHECK_THROWS_AS(lr_at(0, d), DomainError);
  CHECK_THROWS_AS(lr_at(14, d), DomainError);

  TrainConfig c;
  c.epochs = 30;
  c.lr0 = 0.7;
  c.halve_after_epoch = 0;
  for (std::size_t e = 2; e <= c.epochs; ++e) CHECK(lr_at(e, c) <= lr_at(e - 1, c));
  CHECK(lr_at(1, c) == 0.35);
}

TEST_CASE("training configuration invariants") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr0 = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.halve_after_epoch = 14;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.grad_clip = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sgd step examples") {
  SUBCASE("plain update") {
    ParameterSet p = single(1.0, 0.5);
    CHECK(sgd_step(p, 1.0, 5.0) == 0.5);
    CHECK(p.get("w").at(0) == 0.5);
  }
  SUBCASE("global norm clipping halves a norm-10 gradient") {
    ParameterSet p;
    p.add("a", {1});
    p.add("b", {1});
    p.get("a").mutable_grad()[0] = 6;
    p.get("b").mutable_grad()[0] = 8;
    CHECK(sgd_step(p, 1.0, 5.0) == 10.0);
    CHECK(p.get("a").at(0) == -3.0);
    CHECK(p.get("b").at(0) == -4.0);
  }
  SUBCASE("zero rate leaves parameters unchanged") {
    ParameterSet p = single(1.25, 3.0);
    sgd_step(p, 0.0, 5.0);
    CHECK(p.get("w").at(0) == 1.25);
  }
  SUBCASE("non-finite gradients name the parameter") {
    ParameterSet p = single(1.0, std::numeric_limits<double>::quiet_NaN());
    try {
      sgd_step(p, 1.0, 5.0);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("w") != std::string::npos);
    }
    CHECK(p.get("w").at(0) == 1.0);
  }
}

TEST_CASE("epoch lines") {
  CHECK(format_epoch({3, 0.5, 1.25}) == "3\t0.5\t1.25");
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto corpus = overfit_corpus(40, 2);
  const auto vocabs = build_vocab(corpus, 1);
  P2CModel a = P2CModel::build(small_model(Variant::kGated), vocabs, 3);
  P2CModel b = P2CModel::build(small_model(Variant::kGated), vocabs, 3);
  const auto ha = train(a, corpus, quick(4));
  const auto hb = train(b, corpus, quick(4));
  REQUIRE(ha.size() == 4);
  CHECK(ha.back().loss < ha.front().loss);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].loss == hb[i].loss);
    CHECK(ha[i].epoch == i + 1);
  }
  CHECK(a.params().checksum() == b.params().checksum());

  TrainConfig dropout = quick(2);
  dropout.dropout = 0.3;
  P2CModel c = P2CModel::build(small_model(Variant::kBasic), vocabs, 3);
  P2CModel d = P2CModel::build(small_model(Variant::kBasic), vocabs, 3);
  const auto hc = train(c, corpus, dropout);
  const auto hd = train(d, corpus, dropout);
  CHECK(hc.back().loss == hd.back().loss);
}

TEST_CASE("training rejects bad input") {
  const auto corpus = overfit_corpus(10, 1);
  P2CModel m = P2CModel::build(small_model(Variant::kBasic), build_vocab(corpus, 1), 1);
  TrainConfig zero = quick(1);
  zero.epochs = 0;
  zero.halve_after_epoch = 0;
  CHECK_THROWS_AS(train(m, corpus, zero), ConfigError);
  CHECK_THROWS_AS(train(m, std::vector<Example>{}, quick(1)), DomainError);
}

TEST_CASE("checkpoints and the metrics log are written every epoch") {
  const auto corpus = overfit_corpus(20, 3);
  P2CModel m = P2CModel::build(small_model(Variant::kSimpleConcat), build_vocab(corpus, 1), 2);
  const fs::path dir = scratch("p2c_train_test");
  TrainOptions options;
  options.output_dir = dir;
  std::vector<std::uint64_t> sums;
  options.on_epoch = [&](const EpochRecord&) {
    sums.push_back(load_checkpoint_file(dir / "model.ckpt").params().checksum());
  };
  const auto history = train(m, corpus, quick(3), options);
  CHECK(sums.size() == 3);
  CHECK(sums.back() == m.params().checksum());
  CHECK(sums[0] != sums[1]);

  std::ifstream log(dir / "metrics.tsv");
  std::string line;
  std::size_t n = 0;
  while (std::getline(log, line)) {
    CHECK(line == format_epoch(history[n]));
    ++n;
  }
  CHECK(n == 3);
  fs::remove_all(dir);
}

TEST_CASE("a failing epoch keeps the last good checkpoint") {
  const auto corpus = overfit_corpus(20, 4);
  P2CModel m = P2CModel::build(small_model(Variant::kGated), build_vocab(corpus, 1), 2);
  const fs::path dir = scratch("p2c_train_fail");
  TrainOptions options;
  options.output_dir = dir;
  std::uint64_t good = 0;
  options.on_epoch = [&](const EpochRecord& r) {
    if (r.epoch != 1) return;
    good = m.params().checksum();
    m.params().get("out.b").mutable_values()[0] = std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(train(m, corpus, quick(3), options), TrainingError);
  CHECK(load_checkpoint_file(dir / "model.ckpt").params().checksum() == good);
  fs::remove_all(dir);
}

TEST_CASE("run configuration files") {
  using nlohmann::json;
  SUBCASE("defaults are desk scale") {
    const RunConfig r = parse_run_config(json::object(), Variant::kGated);
    CHECK(r.model == ModelConfig::desk_scale(Variant::kGated));
    CHECK(r.train.epochs == 13);
    CHECK(r.train.lr0 == 1.0);
    CHECK(r.train.batch_size == 1);
    CHECK(r.train.grad_clip == 0.5);
  }
  SUBCASE("full scale") {
    const RunConfig r = parse_run_config(json{{"scale", "full"}}, Variant::kGated);
    CHECK(r.model.lstm_layers == 3);
    CHECK(r.model.lstm_cells == 500);
    CHECK(r.model.gru_hidden == 100);
    CHECK(r.model.ga_hops == 3);
    CHECK(r.model.front_init == 0.08);
    CHECK(r.train.batch_size == 64);
    CHECK(r.train.grad_clip == 5.0);
  }
  SUBCASE("overrides and dropout sharing") {
    const json j = {{"model", {{"lstm_cells", 7}}},
                    {"train", {{"epochs", 2}, {"halve_after_epoch", 1}, {"dropout", 0.1}}},
                    {"min_count", 2},
                    {"target_embeddings", "vec.txt"}};
    const RunConfig r = parse_run_config(j, Variant::kBasic, "/data");
    CHECK(r.model.variant == Variant::kBasic);
    CHECK(r.model.lstm_cells == 7);
    CHECK(r.model.dropout == 0.1);
    CHECK(r.train.epochs == 2);
    CHECK(r.min_count == 2);
    CHECK(r.target_embeddings == fs::path("/data/vec.txt"));
    CHECK_FALSE(r.pinyin_embeddings);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(parse_run_config(json{{"bogus", 1}}, Variant::kGated), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"model", {{"lstm_cell", 1}}}}, Variant::kGated),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"train", {{"epochs", 0}}}}, Variant::kGated),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"scale", "huge"}}, Variant::kGated), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"train", {{"lr0", "fast"}}}}, Variant::kGated),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/run.json", Variant::kGated), ConfigError);
  }
}
