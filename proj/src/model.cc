#include "p2c/model.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <sstream>

#include "p2c/errors.h"

namespace p2c {
namespace {

constexpr double kInitRange = 0.08;

bool is_front_end(const std::string& name) {
  return name.starts_with("embed.") || name.starts_with("gru.") ||
         name.starts_with("ga.proj.");
}

// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string layer_prefix(const char* base, std::size_t layer) {
  return std::string(base) + ".l" + std::to_string(layer);
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "basic") return Variant::kBasic;
  if (name == "simple" || name == "simple_concat") return Variant::kSimpleConcat;
  if (name == "gated") return Variant::kGated;
  throw ConfigError("unknown variant '" + name +
                    "' (expected basic|simple|gated)");
}

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::kBasic:
      return "basic";
    case Variant::kSimpleConcat:
      return "simple";
    case Variant::kGated:
      return "gated";
  }
  return "unknown";
}

ModelConfig ModelConfig::desk_scale(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.front_init = 0.5;
  return c;
}

ModelConfig ModelConfig::full_scale(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.pinyin_embed = 500;
  c.target_embed = 500;
  c.gru_hidden = 100;
  c.lstm_layers = 3;
  c.lstm_cells = 500;
  c.ga_hops = 3;
  c.dropout = 0.3;
  return c;
}

void ModelConfig::validate() const {
  if (pinyin_embed == 0 || target_embed == 0 || gru_hidden == 0 ||
      lstm_layers == 0 || lstm_cells == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  if (!(front_init > 0.0 && std::isfinite(front_init))) {
    throw ConfigError("front_init must be positive");
  }
  if (variant == Variant::kGated && ga_hops < 1) {
    throw ConfigError("gated variant needs ga_hops >= 1");
  }
}

ParameterSet::ParameterSet(const ParameterSet& other) { *this = other; }

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this == &other) return *this;
  entries_.clear();
  entries_.reserve(other.entries_.size());
  for (const auto& [name, t] : other.entries_) entries_.emplace_back(name, t.clone());
  return *this;
}

Tensor& ParameterSet::add(const std::string& name, Shape shape) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  entries_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  return entries_.back().second;
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw DomainError("no parameter named " + name);
}

Tensor& ParameterSet::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (const auto& [name, t] : entries_) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int s = 0; s < 64; s += 8) mix((bits >> s) & 0xff);
    }
  }
  return h;
}

P2CModel::P2CModel(const ModelConfig& config, Vocabularies vocabs)
    : config_(config), vocabs_(std::move(vocabs)) {
  config_.validate();
  if (config_.variant == Variant::kSimpleConcat) {
    std::vector<std::string> tokens = vocabs_.pinyin.tokens();
    for (std::size_t i = kReservedCount; i < vocabs_.target.size(); ++i) {
      const std::string& t = vocabs_.target.tokens()[i];
      if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) {
        tokens.push_back(t);
      }
    }
    joint_vocab_ = Vocab::from_tokens(tokens);
    target_to_joint_.resize(vocabs_.target.size());
    for (std::size_t i = 0; i < vocabs_.target.size(); ++i) {
      target_to_joint_[i] = joint_vocab_.id(vocabs_.target.tokens()[i]);
    }
  }
  allocate();
}

void P2CModel::allocate() {
  const ModelConfig& c = config_;
  const std::size_t h = c.lstm_cells;
  const std::size_t g = c.gru_hidden;
  auto add_gru = [&](const std::string& prefix, std::size_t input) {
    params_.add(prefix + ".w", {3 * g, input});
    params_.add(prefix + ".u_gates", {2 * g, g});
    params_.add(prefix + ".u_cand", {g, g});
    params_.add(prefix + ".b", {3 * g});
  };
  auto add_lstm = [&](const std::string& prefix, std::size_t input) {
    params_.add(prefix + ".w", {4 * h, input});
    params_.add(prefix + ".u", {4 * h, h});
    params_.add(prefix + ".b", {4 * h});
  };

  switch (c.variant) {
    case Variant::kBasic:
      params_.add("embed.pinyin", {vocabs_.pinyin.size(), c.pinyin_embed});
      break;
    case Variant::kSimpleConcat:
      params_.add("embed.joint", {joint_vocab_.size(), c.pinyin_embed});
      break;
    case Variant::kGated:
      params_.add("embed.pinyin", {vocabs_.pinyin.size(), c.pinyin_embed});
      add_gru("gru.pinyin.fwd", c.pinyin_embed);
      add_gru("gru.pinyin.bwd", c.pinyin_embed);
      add_gru("gru.context.fwd", c.target_embed);
      add_gru("gru.context.bwd", c.target_embed);
      params_.add("ga.proj.w", {c.pinyin_embed, 2 * g});
      params_.add("ga.proj.b", {c.pinyin_embed});
      break;
  }
  params_.add("embed.target", {vocabs_.target.size(), c.target_embed});
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    const std::size_t input = l == 0 ? c.pinyin_embed : 2 * h;
    add_lstm(layer_prefix("enc", l) + ".fwd", input);
    add_lstm(layer_prefix("enc", l) + ".bwd", input);
  }
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    params_.add(layer_prefix("bridge", l) + ".h.w", {h, 2 * h});
    params_.add(layer_prefix("bridge", l) + ".h.b", {h});
    params_.add(layer_prefix("bridge", l) + ".c.w", {h, 2 * h});
    params_.add(layer_prefix("bridge", l) + ".c.b", {h});
  }
  for (std::size_t l = 0; l < c.lstm_layers; ++l) {
    add_lstm(layer_prefix("dec", l), l == 0 ? c.target_embed : h);
  }
  params_.add("attn.w", {h, 2 * h});
  params_.add("attn.combine.w", {c.target_embed, 3 * h});
  params_.add("attn.combine.b", {c.target_embed});
  params_.add("out.b", {vocabs_.target.size()});
}

P2CModel P2CModel::skeleton(const ModelConfig& config, Vocabularies vocabs) {
  return P2CModel(config, std::move(vocabs));
}

P2CModel P2CModel::build(const ModelConfig& config, Vocabularies vocabs,
                         std::uint64_t seed) {
  P2CModel model(config, std::move(vocabs));
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : model.params_.entries()) {
    const double range = is_front_end(name) ? config.front_init : kInitRange;
    for (double& v : t.mutable_values()) {
      v = (2.0 * unit_uniform(rng) - 1.0) * range;
    }
  }
  return model;
}

void P2CModel::set_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  config_.dropout = rate;
}

GruParams P2CModel::gru(const std::string& prefix) const {
  return {params_.get(prefix + ".w"), params_.get(prefix + ".u_gates"),
          params_.get(prefix + ".u_cand"), params_.get(prefix + ".b")};
}

LstmParams P2CModel::lstm(const std::string& prefix) const {
  return {params_.get(prefix + ".w"), params_.get(prefix + ".u"),
          params_.get(prefix + ".b")};
}

std::vector<Tensor> P2CModel::embed(Graph& g, const Tensor& table,
                                    std::span<const int> ids) const {
  std::vector<Tensor> rows;
  rows.reserve(ids.size());
  for (int id : ids) {
    if (id < 0) throw DomainError("negative token id");
    rows.push_back(g.row(table, static_cast<std::size_t>(id)));
  }
  return rows;
}

std::vector<Tensor> P2CModel::encode_bigru(Graph& g, std::span<const int> ids,
                                           bool context_side) const {
  if (config_.variant != Variant::kGated) {
    throw UnsupportedError("BiGRU encoders exist only in the gated variant");
  }
  if (ids.empty()) throw DomainError("encode_bigru: empty sequence");
  const char* side = context_side ? "gru.context" : "gru.pinyin";
  const Tensor& table =
      params_.get(context_side ? "embed.target" : "embed.pinyin");
  const auto inputs = embed(g, table, ids);
  return run_bigru(g, gru(std::string(side) + ".fwd"),
                   gru(std::string(side) + ".bwd"), inputs);
}

EncodedSource P2CModel::encode(Graph& g, const SourceIds& source, RunMode mode,
                               std::mt19937_64* rng) const {
  if (source.pinyin.empty()) throw DomainError("encode: empty pinyin");
  const bool dropout = mode == RunMode::kTrain && config_.dropout > 0.0;
  if (dropout && rng == nullptr) {
    throw DomainError("training-mode dropout needs a random generator");
  }
  EncodedSource enc;
  std::vector<Tensor> inputs;
  switch (config_.variant) {
    case Variant::kBasic:
      inputs = embed(g, params_.get("embed.pinyin"), source.pinyin);
      break;
    case Variant::kSimpleConcat: {
      std::vector<int> ids;
      ids.reserve(source.context.size() + 1 + source.pinyin.size());
      for (int c : source.context) {
        if (c < 0 || static_cast<std::size_t>(c) >= target_to_joint_.size()) {
          throw DomainError("context id " + std::to_string(c) +
                            " out of range");
        }
        ids.push_back(target_to_joint_[static_cast<std::size_t>(c)]);
      }
      ids.push_back(kBcId);
      ids.insert(ids.end(), source.pinyin.begin(), source.pinyin.end());
      inputs = embed(g, params_.get("embed.joint"), ids);
      break;
    }
    case Variant::kGated: {
      const auto pinyin_rows = encode_bigru(g, source.pinyin, false);
      std::vector<Tensor> context_rows;
      if (!source.context.empty()) {
        context_rows = encode_bigru(g, source.context, true);
      }
      auto gated =
          gated_attention(g, pinyin_rows, context_rows, config_.ga_hops);
      enc.gate_weights = std::move(gated.weights);
      const Tensor& w = params_.get("ga.proj.w");
      const Tensor& b = params_.get("ga.proj.b");
      inputs.reserve(gated.rows.size());
      for (const Tensor& x : gated.rows) inputs.push_back(g.add(g.matvec(w, x), b));
      break;
    }
  }

  for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
    if (l > 0 && dropout) {
      for (Tensor& x : inputs) x = g.dropout(x, config_.dropout, *rng);
    }
    const std::string prefix = layer_prefix("enc", l);
    auto layer = run_bilstm(g, lstm(prefix + ".fwd"), lstm(prefix + ".bwd"), inputs);
    enc.forward_final.push_back(layer.forward_final);
    enc.backward_final.push_back(layer.backward_final);
    inputs = std::move(layer.outputs);
  }
  enc.states = std::move(inputs);
  enc.memory = g.stack_rows(enc.states);
  return enc;
}

DecoderState P2CModel::initial_state(Graph& g, const EncodedSource& enc) const {
  DecoderState state;
  for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
    const std::string prefix = layer_prefix("bridge", l);
    const std::array<Tensor, 2> hs = {enc.forward_final[l].h,
                                      enc.backward_final[l].h};
    const std::array<Tensor, 2> cs = {enc.forward_final[l].c,
                                      enc.backward_final[l].c};
    LstmState s;
    s.h = g.tanh(g.add(g.matvec(params_.get(prefix + ".h.w"), g.concat(hs)),
                       params_.get(prefix + ".h.b")));
    s.c = g.add(g.matvec(params_.get(prefix + ".c.w"), g.concat(cs)),
                params_.get(prefix + ".c.b"));
    state.layers.push_back(s);
  }
  return state;
}

P2CModel::StepOutput P2CModel::step(Graph& g, const DecoderState& state,
                                    int prev_token, const EncodedSource& enc,
                                    RunMode mode, std::mt19937_64* rng) const {
  if (prev_token < 0 ||
      static_cast<std::size_t>(prev_token) >= vocabs_.target.size()) {
    throw DomainError("target id " + std::to_string(prev_token) +
                      " out of range");
  }
  const bool dropout = mode == RunMode::kTrain && config_.dropout > 0.0;
  StepOutput out;
  Tensor x = g.row(params_.get("embed.target"),
                   static_cast<std::size_t>(prev_token));
  for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
    if (l > 0 && dropout) x = g.dropout(x, config_.dropout, *rng);
    LstmState s = lstm_step(g, lstm(layer_prefix("dec", l)), x, state.layers[l]);
    out.state.layers.push_back(s);
    x = s.h;
  }
  const Tensor& top = x;
  const Tensor query = g.matvec_transposed(params_.get("attn.w"), top);
  const Tensor context = g.attend(enc.memory, query, &out.attention);
  const std::array<Tensor, 2> parts = {context, top};
  const Tensor attentional =
      g.tanh(g.add(g.matvec(params_.get("attn.combine.w"), g.concat(parts)),
                   params_.get("attn.combine.b")));
  out.logits = g.add(g.matvec(params_.get("embed.target"), attentional),
                     params_.get("out.b"));
  return out;
}

DecodeStep P2CModel::decode_step(Graph& g, const DecoderState& state,
                                 int prev_token,
                                 const EncodedSource& enc) const {
  StepOutput s = step(g, state, prev_token, enc, RunMode::kEval, nullptr);
  return {std::move(s.state), g.log_softmax(s.logits), std::move(s.attention)};
}

Tensor P2CModel::sentence_loss(Graph& g, const SourceIds& source,
                               std::span<const int> target, RunMode mode,
                               std::mt19937_64* rng) const {
  if (target.empty()) throw DomainError("forward_loss: empty target");
  const EncodedSource enc = encode(g, source, mode, rng);
  DecoderState state = initial_state(g, enc);
  std::vector<Tensor> losses;
  losses.reserve(target.size() + 1);
  int prev = kBosId;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    const int gold = t < target.size() ? target[t] : kEosId;
    StepOutput s = step(g, state, prev, enc, mode, rng);
    if (gold < 0 || static_cast<std::size_t>(gold) >= vocabs_.target.size()) {
      throw DomainError("target id " + std::to_string(gold) + " out of range");
    }
    losses.push_back(g.cross_entropy(s.logits, static_cast<std::size_t>(gold)));
    state = std::move(s.state);
    prev = gold;
  }
  return g.add_n(losses);
}

Tensor P2CModel::forward_loss(Graph& g, const Batch& batch, RunMode mode,
                              std::mt19937_64* rng) const {
  if (batch.size() == 0) throw DomainError("forward_loss: empty batch");
  std::vector<Tensor> sentence_losses;
  std::size_t tokens = 0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const SourceIds source{batch.pinyin.row(r, batch.pinyin_lengths[r]),
                           batch.context.row(r, batch.context_lengths[r])};
    const auto target = batch.target.row(r, batch.target_lengths[r]);
    sentence_losses.push_back(sentence_loss(g, source, target, mode, rng));
    tokens += target.size() + 1;
  }
  return g.scale(g.add_n(sentence_losses), 1.0 / static_cast<double>(tokens));
}

std::size_t load_embeddings(P2CModel& model, EmbeddingTable table,
                            std::istream& in) {
  const bool pinyin = table == EmbeddingTable::kPinyin;
  const Vocab& vocab =
      pinyin ? (model.config().variant == Variant::kSimpleConcat
                    ? model.joint_vocab()
                    : model.vocabs().pinyin)
             : model.vocabs().target;
  const std::string name =
      pinyin ? (model.config().variant == Variant::kSimpleConcat ? "embed.joint"
                                                                 : "embed.pinyin")
             : "embed.target";
  Tensor& weights = model.params().get(name);
  const std::size_t dim = weights.dim(1);
  auto values = weights.mutable_values();

  std::size_t replaced = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vec;
    double v = 0;
    while (ls >> v) vec.push_back(v);
    if (vec.size() != dim) {
      throw FormatError("embedding line " + std::to_string(line_no) +
                        ": expected " + std::to_string(dim) + " values, got " +
                        std::to_string(vec.size()));
    }
    if (!vocab.contains(token)) continue;
    const auto row = static_cast<std::size_t>(vocab.id(token));
    std::copy(vec.begin(), vec.end(), values.begin() + row * dim);
    ++replaced;
  }
  return replaced;
}

}  // namespace p2c
