#ifndef P2C_SYNTHETIC_H_
#define P2C_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "p2c/corpus.h"

namespace p2c {

// Documents of five utterances over 30 characters with one reading each.
// Each utterance (2 to 4 characters) takes its predecessor as context; the
// first of a document has none.
std::vector<Example> overfit_corpus(std::size_t n, std::uint64_t seed);

// Six syllables each written by two characters, one per class. The context
// holds exactly one key token of class A or B among neutral fillers, and the
// key's class alone selects the characters of the target. No (key, pinyin)
// pairing of the test split occurs in the training split.
struct HomophoneBenchmark {
  std::vector<Example> train;
  std::vector<Example> test;
};

HomophoneBenchmark homophone_benchmark(std::size_t n_train, std::size_t n_test,
                                       std::uint64_t seed);

}  // namespace p2c

#endif  // P2C_SYNTHETIC_H_
