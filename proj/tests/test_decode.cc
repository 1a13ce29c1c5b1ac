#include <cmath>
#include <random>

#include "decode_oracle.h"
#include "doctest.h"
#include "p2c/decode.h"
#include "p2c/errors.h"
#include "p2c/tolerances.h"

using namespace p2c;
using namespace p2c::testing;

namespace {

struct Input {
  std::vector<int> pinyin;
  std::vector<int> context;
  SourceIds source() const { return {pinyin, context}; }
};

Input random_input(std::mt19937_64& rng, std::size_t target_tokens) {
  Input in;
  const std::size_t n = 1 + rng() % 3;
  for (std::size_t i = 0; i < n; ++i) in.pinyin.push_back(kReservedCount + static_cast<int>(rng() % 3));
  const std::size_t m = rng() % 3;
  for (std::size_t i = 0; i < m; ++i)
    in.context.push_back(kReservedCount + static_cast<int>(rng() % target_tokens));
  return in;
}

const Variant kVariants[] = {Variant::kBasic, Variant::kSimpleConcat, Variant::kGated};

void check_same(const std::vector<Candidate>& got, const std::vector<Candidate>& expect) {
  REQUIRE(got.size() == expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].ids == expect[i].ids);
    CHECK(got[i].log_prob == doctest::Approx(expect[i].log_prob).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("ranking ties") {
  const Candidate a{{5}, -1.0, true}, b{{5, 6}, -1.0, true}, c{{6}, -1.0, true};
  const Candidate open{{5}, -1.0, false}, better{{9, 9}, -0.5, true};
  CHECK(ranks_before(better, a));
  CHECK(ranks_before(a, b));
  CHECK(ranks_before(a, c));
  CHECK(ranks_before(a, open));
  CHECK_FALSE(ranks_before(a, a));
}

TEST_CASE("beam of one equals greedy") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const Variant v = kVariants[trial % 3];
    const P2CModel m = random_tiny_model(v, 4, 100 + static_cast<std::uint64_t>(trial));
    const Input in = random_input(rng, 4);
    for (std::size_t max_len : {1u, 3u, 0u}) {
      const CandidateList beam = beam_search(m, in.source(), {1, 1, max_len});
      const Candidate best = greedy(
          m, in.source(), max_len == 0 ? default_max_len(in.pinyin.size()) : max_len);
      REQUIRE(beam.items.size() == 1);
      CHECK(beam.items[0].ids == best.ids);
      CHECK(beam.items[0].finished == best.finished);
      CHECK(beam.truncated == !best.finished);
      CHECK(beam.items[0].log_prob == doctest::Approx(best.log_prob).epsilon(1e-12));
    }
  }
}

TEST_CASE("a wide beam equals exhaustive enumeration") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t tokens = 1 + static_cast<std::size_t>(trial) % 5;
    const P2CModel m = random_tiny_model(kVariants[trial % 3], tokens, 300 + static_cast<std::uint64_t>(trial));
    const Input in = random_input(rng, tokens);
    for (std::size_t max_len = 1; max_len <= 4; ++max_len) {
      auto all = enumerate_finished(m, in.source(), max_len);
      const std::size_t k = std::min<std::size_t>(5, all.size());
      std::size_t wide = 1;
      for (std::size_t i = 1; i < max_len; ++i) wide *= tokens;
      wide = std::max(wide * (tokens + 1), k);
      const CandidateList got = beam_search(m, in.source(), {wide, k, max_len});
      all.resize(k);
      check_same(got.items, all);
    }
  }
}

TEST_CASE("two-step toy model with beam two") {
  // One output token: the only finished sequences within two steps are
  // EOS and token EOS, and a beam of two holds both at every step.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const P2CModel m = random_tiny_model(Variant::kGated, 1, seed, 3.0);
    const std::vector<int> py = {5, 6}, ctx = {5};
    const auto all = enumerate_finished(m, {py, ctx}, 2);
    REQUIRE(all.size() == 2);
    check_same(beam_search(m, {py, ctx}, {2, 2, 2}).items, all);
  }
}

TEST_CASE("scores replay step by step") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const P2CModel m = random_tiny_model(kVariants[trial % 3], 4, 500 + static_cast<std::uint64_t>(trial));
    const Input in = random_input(rng, 4);
    const CandidateList list = beam_search(m, in.source(), {6, 4, 0});
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      const Candidate& c = list.items[i];
      CHECK(std::abs(c.log_prob - replay_score(m, in.source(), c.ids, c.finished)) <
            Tolerances::kScoreReplay);
      CHECK(c.log_prob <= 0);
      if (i > 0) CHECK_FALSE(ranks_before(c, list.items[i - 1]));
    }
    CHECK(list.items.size() <= 4);
  }
}

TEST_CASE("top-1 score does not fall as the beam widens") {
  std::mt19937_64 rng(24);
  std::size_t violations = 0, checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const P2CModel m = random_tiny_model(kVariants[trial % 3], 4, 700 + static_cast<std::uint64_t>(trial));
    const Input in = random_input(rng, 4);
    double previous = -INFINITY;
    for (std::size_t b = 1; b <= 6; ++b) {
      const CandidateList list = beam_search(m, in.source(), {b, 1, 0});
      if (list.truncated) continue;
      const double top = list.items[0].log_prob;
      ++checked;
      if (top < previous) ++violations;
      previous = std::max(previous, top);
    }
  }
  CHECK(checked > 100);
  CHECK(violations == 0);
}

TEST_CASE("fewer finished hypotheses than K") {
  const P2CModel m = random_tiny_model(Variant::kBasic, 2, 9);
  const std::vector<int> py = {5};
  // Two steps with two tokens admit exactly three finished sequences.
  const CandidateList list = beam_search(m, {py, {}}, {10, 10, 2});
  CHECK(list.items.size() == 3);
  CHECK_FALSE(list.truncated);
  for (std::size_t i = 1; i < list.items.size(); ++i)
    CHECK(list.items[i - 1].log_prob >= list.items[i].log_prob);
  CHECK(list.k == 10);
  CHECK(list.beam_width == 10);
}

TEST_CASE("nothing finished within the length limit") {
  P2CModel m = random_tiny_model(Variant::kGated, 3, 10);
  m.params().get("out.b").mutable_values()[kEosId] = -1e3;
  const std::vector<int> py = {5, 6};
  const CandidateList list = beam_search(m, {py, {}}, {2, 1, 3});
  CHECK(list.truncated);
  REQUIRE(list.items.size() == 1);
  CHECK_FALSE(list.items[0].finished);
  CHECK(list.items[0].ids.size() == 3);
  const Candidate g = greedy(m, {py, {}}, 3);
  CHECK_FALSE(g.finished);
  CHECK(g.ids.size() == 3);
}

TEST_CASE("reserved tokens are never proposed") {
  const P2CModel m = random_tiny_model(Variant::kSimpleConcat, 3, 11);
  const std::vector<int> py = {5, 7};
  const CandidateList list = beam_search(m, {py, {}}, {20, 20, 4});
  for (const Candidate& c : list.items)
    for (int id : c.ids) {
      CHECK(id >= kReservedCount);
    }
}

TEST_CASE("argument checks") {
  const P2CModel m = random_tiny_model(Variant::kBasic, 2, 12);
  const std::vector<int> py = {5};
  CHECK_THROWS_AS(beam_search(m, {py, {}}, {2, 3, 0}), DomainError);
  CHECK_THROWS_AS(beam_search(m, {py, {}}, {1, 0, 0}), DomainError);
  CHECK_THROWS_AS(greedy(m, {py, {}}, 0), DomainError);
  CHECK(default_max_len(4) == 13);
}

TEST_CASE("token-level entry point and text") {
  const P2CModel m = random_tiny_model(Variant::kGated, 3, 13);
  const PinyinSequence p{{"ba", "bu", "never-seen"}, PinyinForm::kComplete};
  const CandidateList a = beam_search(m, p, {"t1", "t0"}, {4, 2, 0});
  const std::vector<int> ids = {5, 7, kUnkId}, ctx = {6, 5};
  const CandidateList b = beam_search(m, {ids, ctx}, {4, 2, 0});
  REQUIRE(a.items.size() == b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) CHECK(a.items[i].ids == b.items[i].ids);

  const Candidate c{{5, 7, 6}, -1, true};
  CHECK(candidate_tokens(m, c) == TokenSeq{"t0", "t2", "t1"});
  CHECK(candidate_text(m, c) == "t0t2t1");
}

TEST_CASE("decoding is deterministic") {
  const P2CModel m = random_tiny_model(Variant::kGated, 4, 14);
  const std::vector<int> py = {5, 6, 7}, ctx = {8};
  const auto a = beam_search(m, {py, ctx}, {5, 5, 0});
  const auto b = beam_search(m, {py, ctx}, {5, 5, 0});
  REQUIRE(a.items.size() == b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    CHECK(a.items[i].ids == b.items[i].ids);
    CHECK(a.items[i].log_prob == b.items[i].log_prob);
  }
}
