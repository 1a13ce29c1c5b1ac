#include "p2c/metrics.h"

#include <algorithm>
#include <cstdio>
#include <map>
#include <utility>

#include "p2c/errors.h"

namespace p2c {
namespace {

template <typename List, typename Gold, typename Equal>
double accuracy(std::span<const List> predictions, std::span<const Gold> golds,
                std::size_t k, Equal equal) {
  if (predictions.size() != golds.size()) {
    throw DomainError("miu_accuracy: " + std::to_string(predictions.size()) +
                      " predictions for " + std::to_string(golds.size()) +
                      " golds");
  }
  if (k < 1) throw DomainError("miu_accuracy needs k >= 1");
  if (golds.empty()) throw DomainError("miu_accuracy on an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (equal(predictions[i], golds[i], k)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(golds.size());
}

std::size_t common_prefix(const TokenSeq& a, std::span<const std::string> b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

}  // namespace

double miu_accuracy(std::span<const std::vector<TokenSeq>> predictions,
                    std::span<const TokenSeq> golds, std::size_t k) {
  return accuracy(predictions, golds, k,
                  [](const std::vector<TokenSeq>& list, const TokenSeq& gold,
                     std::size_t top) {
                    const auto end = list.begin() +
                                     static_cast<std::ptrdiff_t>(
                                         std::min(top, list.size()));
                    return std::find(list.begin(), end, gold) != end;
                  });
}

double miu_accuracy(std::span<const CandidateList> predictions,
                    std::span<const std::vector<int>> golds, std::size_t k) {
  return accuracy(predictions, golds, k,
                  [](const CandidateList& list, const std::vector<int>& gold,
                     std::size_t top) {
                    const std::size_t n = std::min(top, list.items.size());
                    for (std::size_t i = 0; i < n; ++i) {
                      if (list.items[i].finished && list.items[i].ids == gold) {
                        return true;
                      }
                    }
                    return false;
                  });
}

std::size_t KeystrokeLog::total_ideal() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.ideal;
  return n;
}

std::size_t KeystrokeLog::total_actual() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.actual();
  return n;
}

PinyinSequence typed_pinyin(const Example& example, PinyinMode mode,
                            const Lexicon& lexicon) {
  if (example.pinyin.form != PinyinForm::kComplete) {
    throw DomainError("keystroke simulation needs complete pinyin, got " +
                      std::string(pinyin_form_name(example.pinyin.form)) +
                      " '" + example.pinyin.joined() + "'");
  }
  if (mode == PinyinMode::kComplete) return example.pinyin;
  return abbreviate(example.pinyin, lexicon);
}

SentenceKeystrokes simulate_sentence(const Converter& convert,
                                     const Example& example, PinyinMode mode,
                                     const Lexicon& lexicon) {
  if (example.target.empty()) {
    throw DomainError("keystroke simulation on an empty target");
  }
  const PinyinSequence typed = typed_pinyin(example, mode, lexicon);
  SentenceKeystrokes keys;
  keys.ideal = example.pinyin.letter_count() + 1;
  keys.letters = typed.letter_count();

  const bool aligned = typed.tokens.size() == example.target.size();
  std::size_t done = 0;
  while (true) {
    ++keys.rounds;
    PinyinSequence rest{
        {typed.tokens.begin() + static_cast<std::ptrdiff_t>(done),
         typed.tokens.end()},
        typed.form};
    const std::span<const std::string> gold =
        std::span<const std::string>(example.target).subspan(done);
    const auto candidates = convert(rest, example.context);
    const std::size_t window = std::min(kCandidateWindow, candidates.size());

    std::size_t best_rank = 0;
    std::size_t best_prefix = 0;
    bool exact = false;
    for (std::size_t r = 0; r < window; ++r) {
      const TokenSeq& c = candidates[r];
      if (std::equal(c.begin(), c.end(), gold.begin(), gold.end())) {
        best_rank = r;
        exact = true;
        break;
      }
      const std::size_t p = common_prefix(c, gold);
      if (p > best_prefix) {
        best_prefix = p;
        best_rank = r;
      }
    }
    if (exact) {
      keys.navigation += best_rank;
      keys.selections += 1;
      break;
    }
    if (!aligned || best_prefix == 0) {
      keys.selections += gold.size();
      break;
    }
    keys.navigation += best_rank;
    keys.selections += 1;
    done += best_prefix;
    if (done == example.target.size()) break;
  }
  return keys;
}

KeystrokeLog simulate_session(const Converter& convert,
                              std::span<const Example> test, PinyinMode mode,
                              const Lexicon& lexicon) {
  KeystrokeLog log;
  log.sentences.reserve(test.size());
  for (const Example& e : test) {
    log.sentences.push_back(simulate_sentence(convert, e, mode, lexicon));
  }
  return log;
}

double kyss(const KeystrokeLog& log) {
  if (log.sentences.empty()) throw DomainError("kyss of an empty log");
  const std::size_t actual = log.total_actual();
  if (actual == 0) throw DomainError("kyss with zero actual keystrokes");
  return static_cast<double>(log.total_ideal()) / static_cast<double>(actual);
}

Converter model_converter(const P2CModel& model, std::size_t beam,
                          std::size_t k) {
  const BeamOptions options{std::max(beam, k), k, 0};
  return [&model, options](const PinyinSequence& typed,
                           const TokenSeq& context) {
    const CandidateList list = beam_search(model, typed, context, options);
    std::vector<TokenSeq> out;
    for (const Candidate& c : list.items) {
      if (c.finished) out.push_back(candidate_tokens(model, c));
    }
    return out;
  };
}

EvalResult evaluate(const Converter& convert, std::span<const Example> test,
                    PinyinMode mode, const Lexicon& lexicon,
                    const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw DomainError("evaluate needs at least one k");
  // The first keystroke round converts exactly what the accuracy pass
  // converted, so each sentence is decoded once for both.
  std::map<std::pair<TokenSeq, TokenSeq>, std::vector<TokenSeq>> cache;
  const Converter cached = [&](const PinyinSequence& typed,
                               const TokenSeq& context) {
    auto key = std::make_pair(typed.tokens, context);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(std::move(key), convert(typed, context)).first;
    }
    return it->second;
  };

  std::vector<std::vector<TokenSeq>> predictions;
  std::vector<TokenSeq> golds;
  for (const Example& e : test) {
    predictions.push_back(cached(typed_pinyin(e, mode, lexicon), e.context));
    golds.push_back(e.target);
  }
  EvalResult result;
  result.n_sentences = test.size();
  for (std::size_t k : ks) {
    result.top_k_accuracy[k] = miu_accuracy(
        std::span<const std::vector<TokenSeq>>(predictions),
        std::span<const TokenSeq>(golds), k);
  }
  result.keystrokes = simulate_session(cached, test, mode, lexicon);
  result.kyss = kyss(result.keystrokes);
  return result;
}

std::string format_report(const EvalResult& result, const std::string& label) {
  std::string header = "model";
  std::string row = label;
  const std::size_t width = std::max<std::size_t>(label.size(), 5) + 2;
  header.resize(width, ' ');
  row.resize(width, ' ');
  char buf[32];
  for (const auto& [k, acc] : result.top_k_accuracy) {
    std::snprintf(buf, sizeof(buf), "%-8s", ("Top-" + std::to_string(k)).c_str());
    header += buf;
    std::snprintf(buf, sizeof(buf), "%-8.2f", acc);
    row += buf;
  }
  header += "KySS";
  std::snprintf(buf, sizeof(buf), "%.4f", result.kyss);
  row += buf;
  return header + "\n" + row + "\n";
}

}  // namespace p2c
