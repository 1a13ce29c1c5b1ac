#ifndef P2C_CORPUS_H_
#define P2C_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "p2c/pinyin.h"

namespace p2c {

using TokenSeq = std::vector<std::string>;

enum class PinyinMode { kComplete, kAbbreviated };
enum class Granularity { kCharacter, kWord };

PinyinMode parse_pinyin_mode(const std::string& name);

// One conversion turn: the previous utterance, the pinyin typed now, and
// the characters the user meant.
struct Example {
  TokenSeq context;
  PinyinSequence pinyin;
  TokenSeq target;
};

struct CorpusOptions {
  PinyinMode mode = PinyinMode::kComplete;
  Granularity granularity = Granularity::kCharacter;
  // Number of previous utterances used as context: 0 or 1.
  int context_window = 1;
};

// Target tokens of one utterance. Character granularity drops whitespace;
// word granularity splits on it.
TokenSeq tokenize_utterance(const std::string& utterance,
                            Granularity granularity);

// Emits one Example per utterance, pairing each with its predecessor in the
// same document.
std::vector<Example> build_parallel(
    const std::vector<std::vector<std::string>>& documents,
    const CharPinyinDict& dict, const Lexicon& lexicon,
    const CorpusOptions& options);

// Share of examples whose target shares at least one token with the
// context.
double relativity(std::span<const Example> examples);

// Corpus file: `context<TAB>pinyin<TAB>target` per line, every field
// space-separated. Context and target fields without spaces are read as
// one token per character.
void write_corpus(std::ostream& out, std::span<const Example> examples);
std::vector<Example> read_corpus(std::istream& in,
                                 const Lexicon* lexicon = nullptr);
std::vector<Example> read_corpus_file(const std::filesystem::path& path,
                                      const Lexicon* lexicon = nullptr);

// Reads every regular file under `dir` in name order. Within a file,
// non-empty lines are utterances and blank lines separate documents.
std::vector<std::vector<std::string>> read_documents(
    const std::filesystem::path& dir);

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kBcId = 4;
inline constexpr int kReservedCount = 5;

// Token <-> id bijection with the reserved ids above.
class Vocab {
 public:
  Vocab();

  // Frequency-descending then lexicographic; tokens below `min_count` are
  // left out and encode to UNK.
  static Vocab build(const std::map<std::string, std::size_t>& counts,
                     std::size_t min_count);
  // Tokens in id order, reserved ones included.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  static const std::vector<std::string>& reserved_tokens();

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const;
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const TokenSeq& tokens) const;
  TokenSeq decode(std::span<const int> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Vocabularies {
  Vocab pinyin;
  // Covers target and context tokens.
  Vocab target;
};

Vocabularies build_vocab(std::span<const Example> examples,
                         std::size_t min_count);

// Row-major id matrix padded with kPadId.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;

  int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  std::span<const int> row(std::size_t r, std::size_t length) const {
    return std::span<const int>(ids).subspan(r * cols, length);
  }
};

struct Batch {
  IdMatrix context;
  IdMatrix pinyin;
  IdMatrix target;
  std::vector<std::size_t> context_lengths;
  std::vector<std::size_t> pinyin_lengths;
  std::vector<std::size_t> target_lengths;

  std::size_t size() const { return pinyin_lengths.size(); }
};

// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

std::vector<Batch> batchify(std::span<const Example> examples,
                            const Vocabularies& vocabs,
                            std::size_t batch_size, std::uint64_t seed);

}  // namespace p2c

#endif  // P2C_CORPUS_H_
