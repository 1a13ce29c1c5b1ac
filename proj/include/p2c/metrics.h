#ifndef P2C_METRICS_H_
#define P2C_METRICS_H_

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "p2c/corpus.h"
#include "p2c/decode.h"
#include "p2c/model.h"
#include "p2c/pinyin.h"

namespace p2c {

// Percentage of sentences whose gold sequence is among the first k
// candidates. A sentence with no candidates is a miss.
double miu_accuracy(std::span<const std::vector<TokenSeq>> predictions,
                    std::span<const TokenSeq> golds, std::size_t k);
double miu_accuracy(std::span<const CandidateList> predictions,
                    std::span<const std::vector<int>> golds, std::size_t k);

struct SentenceKeystrokes {
  std::size_t letters = 0;
  std::size_t navigation = 0;
  std::size_t selections = 0;
  std::size_t ideal = 0;  // complete-pinyin letters + 1
  std::size_t rounds = 0;

  std::size_t actual() const { return letters + navigation + selections; }
};

struct KeystrokeLog {
  std::vector<SentenceKeystrokes> sentences;

  std::size_t total_ideal() const;
  std::size_t total_actual() const;
};

// Ranked candidate token sequences for typed pinyin under a context.
using Converter = std::function<std::vector<TokenSeq>(
    const PinyinSequence& typed, const TokenSeq& context)>;

inline constexpr std::size_t kCandidateWindow = 10;

// Keystrokes of a typist entering one sentence. The pinyin letters are typed
// once. The typist scans the first ten candidates: rank r costs r - 1
// navigation keys plus one selection. When the whole gold sequence is not
// listed, the candidate sharing the longest gold prefix is selected, that
// prefix is committed, and the remaining pinyin is converted again under the
// same context. A round without progress ends the sentence with one
// selection per remaining token.
//
// `pinyin` must be in complete form. Prefix splitting needs one pinyin
// token per target token; otherwise a miss goes straight to the per-token
// fallback.
SentenceKeystrokes simulate_sentence(const Converter& convert,
                                     const Example& example, PinyinMode mode,
                                     const Lexicon& lexicon);

KeystrokeLog simulate_session(const Converter& convert,
                              std::span<const Example> test, PinyinMode mode,
                              const Lexicon& lexicon);

// Sum of ideal over sum of actual keystrokes.
double kyss(const KeystrokeLog& log);

// Beam-search converter over a trained model.
Converter model_converter(const P2CModel& model, std::size_t beam,
                          std::size_t k = kCandidateWindow);

// The pinyin the typist enters for `example` in `mode`.
PinyinSequence typed_pinyin(const Example& example, PinyinMode mode,
                            const Lexicon& lexicon);

struct EvalResult {
  std::map<std::size_t, double> top_k_accuracy;
  double kyss = 0;
  std::size_t n_sentences = 0;
  KeystrokeLog keystrokes;
};

EvalResult evaluate(const Converter& convert, std::span<const Example> test,
                    PinyinMode mode, const Lexicon& lexicon,
                    const std::vector<std::size_t>& ks);

// One header line and one row: `label  Top-1  Top-5  Top-10  KySS`.
std::string format_report(const EvalResult& result, const std::string& label);

}  // namespace p2c

#endif  // P2C_METRICS_H_
