#ifndef P2C_DECODE_H_
#define P2C_DECODE_H_

#include <cstddef>
#include <string>
#include <vector>

#include "p2c/corpus.h"
#include "p2c/model.h"
#include "p2c/pinyin.h"

namespace p2c {

struct Candidate {
  std::vector<int> ids;  // target ids, EOS excluded
  double log_prob = 0;   // sum of per-step log-probabilities, EOS included
  bool finished = true;  // ended on EOS
};

// Ranking: higher log-prob first; on ties the earlier EOS (shorter finished
// sequence) wins, then the lexicographically smaller id sequence.
bool ranks_before(const Candidate& a, const Candidate& b);

struct CandidateList {
  std::vector<Candidate> items;
  std::size_t beam_width = 0;
  std::size_t k = 0;
  // No hypothesis finished within max_len; `items` holds the best
  // unfinished one.
  bool truncated = false;
};

struct BeamOptions {
  std::size_t beam = 8;
  std::size_t k = 10;
  // Decode steps, EOS included. 0 selects default_max_len().
  std::size_t max_len = 0;
};

// 2 x source length + 5.
std::size_t default_max_len(std::size_t source_length);

// PAD, UNK, BOS and the separator are never proposed.
bool is_emittable(int target_id);

CandidateList beam_search(const P2CModel& model, const SourceIds& source,
                          const BeamOptions& options);

// Maps tokens through the model vocabularies (unknown tokens become UNK).
CandidateList beam_search(const P2CModel& model, const PinyinSequence& pinyin,
                          const TokenSeq& context, const BeamOptions& options);

// Arg-max decoding until EOS or `max_len` steps.
Candidate greedy(const P2CModel& model, const SourceIds& source,
                 std::size_t max_len);

TokenSeq candidate_tokens(const P2CModel& model, const Candidate& candidate);
// Tokens concatenated without separators.
std::string candidate_text(const P2CModel& model, const Candidate& candidate);

}  // namespace p2c

#endif  // P2C_DECODE_H_
