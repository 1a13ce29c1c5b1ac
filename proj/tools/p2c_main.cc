// Command-line front end: corpus building, training, conversion,
// evaluation and serving.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "p2c/checkpoint.h"
#include "p2c/config.h"
#include "p2c/corpus.h"
#include "p2c/decode.h"
#include "p2c/errors.h"
#include "p2c/metrics.h"
#include "p2c/model.h"
#include "p2c/pinyin.h"
#include "p2c/service.h"
#include "p2c/synthetic.h"
#include "p2c/training.h"

namespace fs = std::filesystem;
using namespace p2c;

namespace {

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      const long long k = std::stoll(item);
      if (k < 1) throw DomainError("");
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw ConfigError("bad --topk entry '" + item + "'");
    }
  }
  if (ks.empty()) throw ConfigError("--topk is empty");
  return ks;
}

void write_examples(const fs::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_corpus(out, examples);
}

int run_corpus_build(const fs::path& dict_path, const fs::path& lexicon_path,
                     const std::string& mode, const std::string& granularity,
                     int window, const fs::path& in_dir, const fs::path& out) {
  const CharPinyinDict dict = CharPinyinDict::load(dict_path);
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  CorpusOptions options;
  options.mode = parse_pinyin_mode(mode);
  if (granularity == "char") {
    options.granularity = Granularity::kCharacter;
  } else if (granularity == "word") {
    options.granularity = Granularity::kWord;
  } else {
    throw ConfigError("granularity must be char or word");
  }
  options.context_window = window;
  const auto examples =
      build_parallel(read_documents(in_dir), dict, lexicon, options);
  write_examples(out, examples);
  std::printf("%zu examples, relativity %.4f\n", examples.size(),
              relativity(examples));
  return 0;
}

int run_synth(const std::string& kind, std::uint64_t seed, const fs::path& out) {
  fs::create_directories(out);
  if (kind == "overfit") {
    write_examples(out / "train.tsv", overfit_corpus(200, seed));
  } else if (kind == "homophone") {
    const auto bench = homophone_benchmark(500, 100, seed);
    write_examples(out / "train.tsv", bench.train);
    write_examples(out / "test.tsv", bench.test);
  } else {
    throw ConfigError("unknown synthetic corpus '" + kind + "'");
  }
  return 0;
}

int run_train(const std::string& variant_text, const fs::path& corpus_path,
              const std::optional<fs::path>& config_path,
              const fs::path& lexicon_path, const fs::path& out) {
  const Variant variant = parse_variant(variant_text);
  const RunConfig run = config_path ? load_run_config(*config_path, variant)
                                    : parse_run_config(nlohmann::json::object(), variant);
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const auto corpus = read_corpus_file(corpus_path, &lexicon);
  P2CModel model = P2CModel::build(run.model, build_vocab(corpus, run.min_count),
                                   run.train.seed);
  auto load = [&](const std::optional<fs::path>& path, EmbeddingTable table) {
    if (!path) return;
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open embeddings " + path->string());
    std::fprintf(stderr, "loaded %zu vectors from %s\n",
                 load_embeddings(model, table, in), path->string().c_str());
  };
  load(run.pinyin_embeddings, EmbeddingTable::kPinyin);
  load(run.target_embeddings, EmbeddingTable::kTarget);

  TrainOptions options;
  options.output_dir = out;
  options.on_epoch = [](const EpochRecord& r) {
    std::printf("%s\n", format_epoch(r).c_str());
    std::fflush(stdout);
  };
  train(model, corpus, run.train, options);
  return 0;
}

int run_convert(const fs::path& model_path, const fs::path& lexicon_path,
                const std::string& pinyin, const std::string& context,
                std::size_t beam, std::size_t k) {
  const P2CModel model = load_checkpoint_file(model_path);
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const PinyinSequence typed = segment_typed(pinyin, lexicon);
  const CandidateList list = beam_search(
      model, typed, commit_tokens(context), BeamOptions{std::max(beam, k), k, 0});
  if (list.truncated) {
    std::fprintf(stderr, "no candidate finished within the length limit\n");
  }
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    std::printf("%zu\t%.6f\t%s\n", i + 1, list.items[i].log_prob,
                candidate_text(model, list.items[i]).c_str());
  }
  return 0;
}

int run_eval(const fs::path& model_path, const fs::path& lexicon_path,
             const fs::path& test_path, const std::string& mode,
             const std::string& topk, std::size_t beam) {
  const P2CModel model = load_checkpoint_file(model_path);
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const auto test = read_corpus_file(test_path, &lexicon);
  const auto ks = parse_ks(topk);
  std::size_t window = kCandidateWindow;
  for (std::size_t k : ks) window = std::max(window, k);
  const EvalResult result =
      evaluate(model_converter(model, std::max(beam, window), window), test,
               parse_pinyin_mode(mode), lexicon, ks);
  std::printf("%zu sentences, %s input\n", result.n_sentences, mode.c_str());
  std::fputs(format_report(result, variant_name(model.config().variant)).c_str(),
             stdout);
  return 0;
}

std::unique_ptr<SessionManager> open_sessions(const fs::path& model_path,
                                              const fs::path& lexicon_path,
                                              long ttl) {
  auto model = std::make_shared<const P2CModel>(load_checkpoint_file(model_path));
  ServiceOptions options;
  options.ttl = std::chrono::seconds(ttl);
  return std::make_unique<SessionManager>(model, Lexicon::load(lexicon_path),
                                          options);
}

int run_serve(const fs::path& model_path, const fs::path& lexicon_path,
              int port, long ttl, std::optional<int> http_port,
              const std::optional<fs::path>& ui) {
  auto sessions = open_sessions(model_path, lexicon_path, ttl);
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  LineServer tcp(*sessions, static_cast<std::uint16_t>(port));
  tcp.start();
  std::printf("tcp %u\n", tcp.port());
  std::unique_ptr<HttpServer> http;
  if (http_port || ui) {
    http = std::make_unique<HttpServer>(*sessions, ui);
    std::printf("http %u\n",
                http->start(static_cast<std::uint16_t>(http_port.value_or(0))));
  }
  std::fflush(stdout);
  int received = 0;
  sigwait(&signals, &received);
  if (http) http->stop();
  tcp.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware pinyin-to-character conversion"};
  app.require_subcommand(1);
  std::string lexicon_path = std::string(P2C_DATA_DIR) + "/lexicon.tsv";
  app.add_option("--lexicon", lexicon_path, "Syllable lexicon")->capture_default_str();

  auto* corpus = app.add_subcommand("corpus", "Corpus tools");
  corpus->require_subcommand(1);
  auto* build = corpus->add_subcommand("build", "Build a parallel corpus from raw documents");
  std::string dict_path, mode = "complete", granularity = "char", in_dir, out;
  int window = 1;
  build->add_option("--dict", dict_path, "char<TAB>syllable<TAB>weight file")->required();
  build->add_option("--mode", mode, "complete | abbrev")->capture_default_str();
  build->add_option("--granularity", granularity, "char | word")->capture_default_str();
  build->add_option("--context", window, "Previous utterances used as context (0 or 1)")
      ->capture_default_str();
  build->add_option("--in", in_dir, "Directory of documents")->required();
  build->add_option("--out", out, "Corpus file")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  std::string kind = "homophone";
  std::uint64_t seed = 1;
  synth->add_option("--kind", kind, "overfit | homophone")->capture_default_str();
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string variant = "gated", corpus_path;
  std::optional<std::string> config_path;
  train_cmd->add_option("--variant", variant, "gated | simple | basic")->capture_default_str();
  train_cmd->add_option("--corpus", corpus_path)->required();
  train_cmd->add_option("--config", config_path, "JSON run configuration");
  train_cmd->add_option("--out", out, "Output directory")->required();

  std::string model_path;
  std::size_t beam = 8, k = 10;
  auto* convert = app.add_subcommand("convert", "Convert pinyin to candidates");
  std::string pinyin, context;
  convert->add_option("--model", model_path)->required();
  convert->add_option("--pinyin", pinyin)->required();
  convert->add_option("--context", context, "Previously committed text");
  convert->add_option("--beam", beam)->capture_default_str();
  convert->add_option("--topk", k)->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Top-K accuracy and KySS on a test corpus");
  std::string test_path, topk = "1,5,10";
  std::size_t eval_beam = 10;
  eval->add_option("--model", model_path)->required();
  eval->add_option("--test", test_path)->required();
  eval->add_option("--mode", mode, "complete | abbrev")->capture_default_str();
  eval->add_option("--topk", topk)->capture_default_str();
  eval->add_option("--beam", eval_beam)->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Serve sessions over TCP and HTTP");
  int port = 7000;
  long ttl = 1800;
  std::optional<int> http_port;
  std::optional<std::string> ui;
  serve->add_option("--model", model_path)->required();
  serve->add_option("--port", port, "Line-delimited JSON port")->capture_default_str();
  serve->add_option("--session-ttl", ttl, "Idle seconds before a session expires")
      ->capture_default_str();
  serve->add_option("--http-port", http_port, "Port for POST /api and --ui");
  serve->add_option("--ui", ui, "Directory of static UI assets");

  auto* repl_cmd = app.add_subcommand("repl", "Interactive terminal session");
  repl_cmd->add_option("--model", model_path)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (corpus->parsed()) {
      return run_corpus_build(dict_path, lexicon_path, mode, granularity, window,
                              in_dir, out);
    }
    if (synth->parsed()) return run_synth(kind, seed, out);
    if (train_cmd->parsed()) {
      std::optional<fs::path> config;
      if (config_path) config = *config_path;
      return run_train(variant, corpus_path, config, lexicon_path, out);
    }
    if (convert->parsed()) {
      return run_convert(model_path, lexicon_path, pinyin, context, beam, k);
    }
    if (eval->parsed()) {
      return run_eval(model_path, lexicon_path, test_path, mode, topk, eval_beam);
    }
    if (serve->parsed()) {
      std::optional<fs::path> ui_dir;
      if (ui) ui_dir = *ui;
      return run_serve(model_path, lexicon_path, port, ttl, http_port, ui_dir);
    }
    if (repl_cmd->parsed()) {
      auto sessions = open_sessions(model_path, lexicon_path, 1800);
      repl(*sessions, std::cin, std::cout);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", e.code().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
