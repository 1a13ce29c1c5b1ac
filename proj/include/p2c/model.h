#ifndef P2C_MODEL_H_
#define P2C_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "p2c/corpus.h"
#include "p2c/graph.h"
#include "p2c/layers.h"
#include "p2c/tensor.h"

namespace p2c {

enum class Variant {
  kBasic,         // pinyin only
  kSimpleConcat,  // context <bc> pinyin through one encoder
  kGated,         // BiGRU encoders joined by gated attention
};

Variant parse_variant(const std::string& name);
const char* variant_name(Variant variant);

struct ModelConfig {
  Variant variant = Variant::kGated;
  std::size_t pinyin_embed = 32;
  std::size_t target_embed = 32;
  std::size_t gru_hidden = 32;
  std::size_t lstm_layers = 1;
  std::size_t lstm_cells = 64;
  std::size_t ga_hops = 2;
  double dropout = 0.3;
  // Init range of the embedding tables and of the gated front end (BiGRUs
  // and attention projection). Everything else starts in [-0.08, 0.08].
  // Gated attention multiplies small activations together, so a front end
  // initialized at 0.08 passes almost no pinyin signal to the encoder.
  double front_init = 0.08;

  // Small enough to train on a laptop CPU in minutes.
  static ModelConfig desk_scale(Variant variant);
  // 3 x 500 LSTM, 100-unit BiGRU, 3 hops, dropout 0.3.
  static ModelConfig full_scale(Variant variant);

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class RunMode { kTrain, kEval };

// Named parameters in creation order. Copies are deep.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Tensor& add(const std::string& name, Shape shape);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t scalar_count() const;
  void zero_grad();
  // Order-sensitive FNV-1a over names and value bits.
  std::uint64_t checksum() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Token ids of one source side.
struct SourceIds {
  std::span<const int> pinyin;
  std::span<const int> context;  // target-vocabulary ids
};

struct EncodedSource {
  std::vector<Tensor> states;  // one per source position
  Tensor memory;               // states stacked as rows
  std::vector<LstmState> forward_final;   // per encoder layer
  std::vector<LstmState> backward_final;  // per encoder layer
  AttentionHops gate_weights;  // gated variant only

  std::size_t length() const { return states.size(); }
};

struct DecoderState {
  std::vector<LstmState> layers;
};

struct DecodeStep {
  DecoderState state;
  Tensor log_probs;                // over the target vocabulary
  std::vector<double> attention;  // over source positions
};

class P2CModel {
 public:
  // Parameters drawn uniformly from [-0.08, 0.08] in creation order.
  static P2CModel build(const ModelConfig& config, Vocabularies vocabs,
                        std::uint64_t seed);
  // Empty parameters with the right shapes, for checkpoint loading.
  static P2CModel skeleton(const ModelConfig& config, Vocabularies vocabs);

  const ModelConfig& config() const { return config_; }
  // Dropout rate used in training mode.
  void set_dropout(double rate);
  const Vocabularies& vocabs() const { return vocabs_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Source vocabulary of the simple_concat variant: pinyin tokens followed
  // by every non-reserved target token.
  const Vocab& joint_vocab() const { return joint_vocab_; }

  // Row i = [forward_i ; backward_i] of the pinyin or context BiGRU.
  std::vector<Tensor> encode_bigru(Graph& g, std::span<const int> ids,
                                   bool context_side) const;

  // Full source encoding; `rng` is used for dropout in training mode.
  EncodedSource encode(Graph& g, const SourceIds& source, RunMode mode,
                       std::mt19937_64* rng = nullptr) const;

  DecoderState initial_state(Graph& g, const EncodedSource& enc) const;

  DecodeStep decode_step(Graph& g, const DecoderState& state, int prev_token,
                         const EncodedSource& enc) const;

  // Mean negative log-likelihood per target token (EOS included) with
  // teacher forcing.
  Tensor forward_loss(Graph& g, const Batch& batch, RunMode mode,
                      std::mt19937_64* rng = nullptr) const;

  // Sum of token NLLs for one example.
  Tensor sentence_loss(Graph& g, const SourceIds& source,
                       std::span<const int> target, RunMode mode,
                       std::mt19937_64* rng = nullptr) const;

 private:
  struct StepOutput {
    DecoderState state;
    Tensor logits;
    std::vector<double> attention;
  };

  P2CModel(const ModelConfig& config, Vocabularies vocabs);

  void allocate();
  GruParams gru(const std::string& prefix) const;
  LstmParams lstm(const std::string& prefix) const;
  std::vector<Tensor> embed(Graph& g, const Tensor& table,
                            std::span<const int> ids) const;
  StepOutput step(Graph& g, const DecoderState& state, int prev_token,
                  const EncodedSource& enc, RunMode mode,
                  std::mt19937_64* rng) const;

  ModelConfig config_;
  Vocabularies vocabs_;
  Vocab joint_vocab_;
  std::vector<int> target_to_joint_;
  ParameterSet params_;
};

// Replaces rows of an embedding table with vectors from a text file of
// `token<SPACE>v1 v2 ...` lines. Tokens absent from the file keep their
// random initialization. Returns the number of rows replaced.
enum class EmbeddingTable { kPinyin, kTarget };
std::size_t load_embeddings(P2CModel& model, EmbeddingTable table,
                            std::istream& in);

}  // namespace p2c

#endif  // P2C_MODEL_H_
