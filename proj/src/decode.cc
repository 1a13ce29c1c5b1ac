#include "p2c/decode.h"

#include <algorithm>
#include <limits>

#include "p2c/errors.h"

namespace p2c {
namespace {

struct Hypothesis {
  std::vector<int> ids;
  double score = 0;
  DecoderState state;
};

struct Expansion {
  std::size_t parent;
  int token;
  double score;
};

}  // namespace

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.finished != b.finished) return a.finished;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

std::size_t default_max_len(std::size_t source_length) {
  return 2 * source_length + 5;
}

bool is_emittable(int target_id) {
  return target_id != kPadId && target_id != kUnkId && target_id != kBosId &&
         target_id != kBcId;
}

CandidateList beam_search(const P2CModel& model, const SourceIds& source,
                          const BeamOptions& options) {
  if (options.k < 1 || options.beam < options.k) {
    throw DomainError("beam search needs beam >= k >= 1");
  }
  const std::size_t max_len = options.max_len == 0
                                  ? default_max_len(source.pinyin.size())
                                  : options.max_len;
  Graph g(GradMode::kNoGrad);
  const EncodedSource enc = model.encode(g, source, RunMode::kEval);
  const std::size_t vocab = model.vocabs().target.size();

  std::vector<Hypothesis> live;
  live.push_back({{}, 0.0, model.initial_state(g, enc)});
  std::vector<Candidate> finished;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<DecoderState> next_states(live.size());
    std::vector<Expansion> expansions;
    expansions.reserve(live.size() * vocab);
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].ids.empty() ? kBosId : live[h].ids.back();
      DecodeStep out = model.decode_step(g, live[h].state, prev, enc);
      const auto log_probs = out.log_probs.values();
      for (std::size_t v = 0; v < vocab; ++v) {
        if (!is_emittable(static_cast<int>(v))) continue;
        expansions.push_back({h, static_cast<int>(v), live[h].score + log_probs[v]});
      }
      next_states[h] = std::move(out.state);
    }

    auto as_candidate = [&](const Expansion& e) {
      Candidate c;
      c.ids = live[e.parent].ids;
      c.finished = e.token == kEosId;
      if (!c.finished) c.ids.push_back(e.token);
      c.log_prob = e.score;
      return c;
    };
    std::vector<Candidate> ranked;
    ranked.reserve(expansions.size());
    for (const auto& e : expansions) ranked.push_back(as_candidate(e));
    std::vector<std::size_t> order(ranked.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t keep = std::min(options.beam, order.size());
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return ranks_before(ranked[a], ranked[b]);
                      });

    std::vector<Hypothesis> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      const Expansion& e = expansions[order[i]];
      Candidate& c = ranked[order[i]];
      if (c.finished) {
        finished.push_back(std::move(c));
      } else {
        next_live.push_back({std::move(c.ids), c.log_prob, next_states[e.parent]});
      }
    }
    live = std::move(next_live);

    // Scores only decrease, so no live hypothesis can overtake the k-th
    // finished one once it is at or below it.
    if (finished.size() >= options.k && !live.empty()) {
      std::sort(finished.begin(), finished.end(), ranks_before);
      const double kth = finished[options.k - 1].log_prob;
      const double best_live =
          std::max_element(live.begin(), live.end(),
                           [](const Hypothesis& a, const Hypothesis& b) {
                             return a.score < b.score;
                           })->score;
      if (best_live <= kth) break;
    }
  }

  CandidateList result;
  result.beam_width = options.beam;
  result.k = options.k;
  if (finished.empty()) {
    result.truncated = true;
    if (!live.empty()) {
      std::vector<Candidate> pending;
      for (auto& h : live) pending.push_back({h.ids, h.score, false});
      result.items.push_back(
          *std::min_element(pending.begin(), pending.end(), ranks_before));
    }
    return result;
  }
  std::sort(finished.begin(), finished.end(), ranks_before);
  if (finished.size() > options.k) finished.resize(options.k);
  result.items = std::move(finished);
  return result;
}

CandidateList beam_search(const P2CModel& model, const PinyinSequence& pinyin,
                          const TokenSeq& context, const BeamOptions& options) {
  const auto pinyin_ids = model.vocabs().pinyin.encode(pinyin.tokens);
  const auto context_ids = model.vocabs().target.encode(context);
  return beam_search(model, SourceIds{pinyin_ids, context_ids}, options);
}

Candidate greedy(const P2CModel& model, const SourceIds& source,
                 std::size_t max_len) {
  if (max_len < 1) throw DomainError("greedy needs max_len >= 1");
  Graph g(GradMode::kNoGrad);
  const EncodedSource enc = model.encode(g, source, RunMode::kEval);
  DecoderState state = model.initial_state(g, enc);
  Candidate out;
  out.finished = false;
  int prev = kBosId;
  for (std::size_t step = 0; step < max_len; ++step) {
    DecodeStep s = model.decode_step(g, state, prev, enc);
    const auto log_probs = s.log_probs.values();
    int best = -1;
    for (std::size_t v = 0; v < log_probs.size(); ++v) {
      if (!is_emittable(static_cast<int>(v))) continue;
      if (best < 0 || log_probs[v] > log_probs[static_cast<std::size_t>(best)]) {
        best = static_cast<int>(v);
      }
    }
    out.log_prob += log_probs[static_cast<std::size_t>(best)];
    if (best == kEosId) {
      out.finished = true;
      break;
    }
    out.ids.push_back(best);
    state = std::move(s.state);
    prev = best;
  }
  return out;
}

TokenSeq candidate_tokens(const P2CModel& model, const Candidate& candidate) {
  return model.vocabs().target.decode(candidate.ids);
}

std::string candidate_text(const P2CModel& model, const Candidate& candidate) {
  std::string text;
  for (const auto& t : candidate_tokens(model, candidate)) text += t;
  return text;
}

}  // namespace p2c
