#include "p2c/synthetic.h"

#include <random>
#include <string>
#include <utility>

#include "p2c/errors.h"

namespace p2c {
namespace {

struct Entry {
  const char* text;
  const char* syllable;
};

constexpr Entry kOverfitChars[] = {
    {"今", "jin"},   {"天", "tian"},  {"气", "qi"},    {"很", "hen"},
    {"好", "hao"},   {"我", "wo"},    {"们", "men"},   {"去", "qu"},
    {"学", "xue"},   {"校", "xiao"},  {"看", "kan"},   {"书", "shu"},
    {"吃", "chi"},   {"饭", "fan"},   {"喝", "he"},    {"水", "shui"},
    {"大", "da"},    {"家", "jia"},   {"人", "ren"},   {"中", "zhong"},
    {"国", "guo"},   {"上", "shang"}, {"下", "xia"},   {"山", "shan"},
    {"日", "ri"},    {"月", "yue"},   {"明", "ming"},  {"白", "bai"},
    {"花", "hua"},   {"草", "cao"},
};

struct Homophone {
  const char* syllable;
  const char* a;
  const char* b;
};

constexpr Homophone kHomophones[] = {
    {"shi", "是", "事"}, {"yi", "一", "衣"}, {"li", "里", "力"},
    {"zhi", "知", "纸"}, {"ji", "机", "鸡"}, {"xi", "西", "洗"},
};
constexpr const char* kKeysA[] = {"春", "夏", "秋", "冬", "东", "南", "北", "风"};
constexpr const char* kKeysB[] = {"红", "黄", "蓝", "绿", "黑", "金", "银", "铜"};
constexpr const char* kFillers[] = {"的", "了", "在", "有", "这", "那"};

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

}  // namespace

std::vector<Example> overfit_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t kChars = std::size(kOverfitChars);
  std::vector<Example> out;
  out.reserve(n);
  TokenSeq previous;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 5 == 0) previous.clear();
    Example e;
    e.context = previous;
    const std::size_t length = 2 + pick(rng, 3);
    for (std::size_t j = 0; j < length; ++j) {
      const Entry& c = kOverfitChars[pick(rng, kChars)];
      e.target.push_back(c.text);
      e.pinyin.tokens.push_back(c.syllable);
    }
    previous = e.target;
    out.push_back(std::move(e));
  }
  return out;
}

HomophoneBenchmark homophone_benchmark(std::size_t n_train, std::size_t n_test,
                                       std::uint64_t seed) {
  constexpr std::size_t kSyllables = std::size(kHomophones);
  constexpr std::size_t kKeys = std::size(kKeysA);

  // Pairings: a key (class A keys first, then B) with a pinyin sequence of
  // one or two homophone syllables.
  std::vector<std::vector<std::size_t>> sequences;
  for (std::size_t s = 0; s < kSyllables; ++s) sequences.push_back({s});
  for (std::size_t s = 0; s < kSyllables; ++s)
    for (std::size_t t = 0; t < kSyllables; ++t) sequences.push_back({s, t});
  std::vector<std::pair<std::size_t, std::size_t>> pairings;
  for (std::size_t key = 0; key < 2 * kKeys; ++key)
    for (std::size_t q = 0; q < sequences.size(); ++q) pairings.emplace_back(key, q);

  if (n_test >= pairings.size() || n_train > pairings.size() - n_test) {
    throw DomainError("homophone benchmark supports at most " +
                      std::to_string(pairings.size()) + " examples");
  }
  std::mt19937_64 rng(seed);
  const auto order = shuffled_order(pairings.size(), seed);

  auto make = [&](std::pair<std::size_t, std::size_t> pairing) {
    const auto [key, q] = pairing;
    const bool class_a = key < kKeys;
    Example e;
    const std::size_t fillers = pick(rng, 3);
    const std::size_t slot = pick(rng, fillers + 1);
    for (std::size_t i = 0; i <= fillers; ++i) {
      if (i == slot) {
        e.context.push_back(class_a ? kKeysA[key] : kKeysB[key - kKeys]);
      } else {
        e.context.push_back(kFillers[pick(rng, std::size(kFillers))]);
      }
    }
    for (std::size_t s : sequences[q]) {
      e.pinyin.tokens.push_back(kHomophones[s].syllable);
      e.target.push_back(class_a ? kHomophones[s].a : kHomophones[s].b);
    }
    return e;
  };

  HomophoneBenchmark out;
  for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(make(pairings[order[i]]));
  for (std::size_t i = 0; i < n_train; ++i) {
    out.train.push_back(make(pairings[order[n_test + i]]));
  }
  return out;
}

}  // namespace p2c
