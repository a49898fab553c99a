#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "pragnav/error.hpp"
#include "pragnav/metrics.hpp"
#include "pragnav/rng.hpp"
#include "support.hpp"

using namespace pragnav;
using namespace testing_support;

namespace {

// go, to: function words; then: separator; left: direction; oven: landmark.
Vocabulary tiny_vocab() {
  return Vocabulary({{"go", TokenClass::kFunction},
                     {"to", TokenClass::kFunction},
                     {"then", TokenClass::kSeparator},
                     {"left", TokenClass::kDirection},
                     {"oven", TokenClass::kLandmark}});
}

// Two function words, two direction words, one landmark.
Vocabulary small_vocab() {
  return Vocabulary({{"go", TokenClass::kFunction},
                     {"then", TokenClass::kSeparator},
                     {"left", TokenClass::kDirection},
                     {"right", TokenClass::kDirection},
                     {"oven", TokenClass::kLandmark}});
}

Instruction toks(std::vector<TokenId> t) { return Instruction{std::move(t)}; }

const Bench& bench() {
  static const Bench b = make_bench(7, 2, 30, 42);
  return b;
}

const SpeakerModel& trained() {
  static const SpeakerModel m = [] {
    const auto ex = speaker_examples(bench().vocab(), bench().train);
    return train_speaker(bench().vocab(), ex, {});
  }();
  return m;
}

// Own total order: higher score first, then token order with END after every token.
bool oracle_before(double sa, const std::vector<TokenId>& a, double sb, const std::vector<TokenId>& b) {
  if (sa != sb) return sa > sb;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return a.size() > b.size();
}

SpeakerModel random_small_model(std::uint64_t seed, std::size_t max_length, const Vocabulary& vocab) {
  Rng rng(seed);
  std::vector<SpeakerExample> corpus;
  for (int i = 0; i < 6; ++i) {
    SpeakerExample ex;
    const std::size_t steps = 1 + uniform_index(rng, 2);
    for (std::size_t s = 0; s < steps; ++s) {
      ex.steps.push_back(StepFeature{static_cast<int>(uniform_index(rng, 8)), {4}});
    }
    const std::size_t len = 1 + uniform_index(rng, max_length);
    for (std::size_t k = 0; k < len; ++k) ex.instruction.tokens.push_back(static_cast<TokenId>(uniform_index(rng, 5)));
    corpus.push_back(std::move(ex));
  }
  SpeakerConfig cfg;
  cfg.smoothing = 0.05 + uniform01(rng);
  cfg.max_length = max_length;
  return train_speaker(vocab, corpus, cfg);
}

}  // namespace

TEST_CASE("memorizing speaker") {
  const auto vocab = tiny_vocab();
  const std::vector<StepFeature> e{{2, {4}}};
  const auto u = toks({0, 3, 1, 4});  // go left to oven
  SpeakerConfig cfg;
  cfg.smoothing = 0.0;
  const std::vector<SpeakerExample> corpus{{e, u}};
  const auto m = train_speaker(vocab, corpus, cfg);
  CHECK(m.score(e, u) == 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) CHECK(m.sample(e, s) == u);
  CHECK(m.infer(e, DecodeStrategy::greedy()) == u);
  CHECK(m.infer(e, DecodeStrategy::beam(4)) == u);
  CHECK(m.score(e, toks({0, 3})) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("train_speaker: determinism and errors") {
  const auto ex = speaker_examples(bench().vocab(), bench().train);
  CHECK(train_speaker(bench().vocab(), ex, {}) == train_speaker(bench().vocab(), ex, {}));
  CHECK_THROWS_AS(train_speaker(bench().vocab(), std::span<const SpeakerExample>{}, {}), Error);
  SpeakerConfig bad;
  bad.smoothing = -1.0;
  CHECK_THROWS_AS(SpeakerModel(bench().vocab(), bad), Error);
  bad = {};
  bad.drop_clause_prob = 1.5;
  CHECK_THROWS_AS(SpeakerModel(bench().vocab(), bad), Error);
}

TEST_CASE("train_speaker: held-out likelihood beats the untrained model") {
  const auto& vocab = bench().vocab();
  const SpeakerModel uniform(vocab, {});
  double trained_ll = 0.0, uniform_ll = 0.0;
  std::size_t pairs = 0;
  for (const auto& t : bench().val_unseen) {
    const auto steps = step_features(vocab, t.task.intended);
    for (const auto& u : t.references) {
      trained_ll += trained().score(steps, u);
      uniform_ll += uniform.score(steps, u);
      ++pairs;
    }
  }
  REQUIRE(pairs >= 100);
  CHECK(speaker_examples(vocab, bench().train).size() >= 500);
  CHECK(trained_ll > uniform_ll);
}

TEST_CASE("speaker_score: chain rule and bounds") {
  const auto& vocab = bench().vocab();
  const auto& m = trained();
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto& t = bench().val_seen[uniform_index(rng, bench().val_seen.size())];
    const auto steps = step_features(vocab, t.task.intended);
    const auto u = m.sample(steps, i);
    const double s = m.score(steps, u);
    CHECK(s <= 0.0);
    double manual = 0.0;
    auto st = m.initial_state();
    std::vector<double> p;
    for (TokenId tok : u.tokens) {
      m.next_token_probs(steps, st, p);
      manual += std::log(p[tok]);
      st = m.advance(st, tok);
    }
    m.next_token_probs(steps, st, p);
    manual += std::log(p[m.end_index()]);
    CHECK(s == doctest::Approx(manual).epsilon(1e-12));
  }
  CHECK_THROWS_AS(m.score(step_features(vocab, bench().train[0].task.intended), toks({9999})), Error);
}

TEST_CASE("next-token distributions normalize, with and without knobs") {
  const auto& vocab = bench().vocab();
  Rng rng(8);
  for (auto knobs : {std::pair{0.0, 0.0}, std::pair{0.4, 0.0}, std::pair{0.0, 0.5}, std::pair{0.7, 0.3}}) {
    const auto m = trained().with_knobs(knobs.first, knobs.second);
    for (int i = 0; i < 40; ++i) {
      const auto& t = bench().train[uniform_index(rng, bench().train.size())];
      const auto steps = step_features(vocab, t.task.intended);
      auto st = m.initial_state();
      std::vector<double> p;
      for (TokenId tok : t.references[0].tokens) {
        m.next_token_probs(steps, st, p);
        double total = 0.0;
        for (double x : p) total += x;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        st = m.advance(st, tok);
      }
    }
  }
}

TEST_CASE("exhaustive enumeration: total probability of bounded instructions") {
  const auto vocab = tiny_vocab();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto base = random_small_model(seed, 3, vocab);
    for (auto knobs : {std::pair{0.0, 0.0}, std::pair{0.5, 0.5}}) {
      const auto m = base.with_knobs(knobs.first, knobs.second);
      for (const std::vector<StepFeature>& e :
           {std::vector<StepFeature>{{1, {4}}}, std::vector<StepFeature>{{0, {4}}, {6, {}}}}) {
        double total = 0.0;
        for (const auto& seq : enumerate_sequences(5, 3)) total += std::exp(m.score(e, Instruction{seq}));
        CHECK(total <= 1.0 + 1e-12);
        // END is forced at max_length, so these sequences carry all the mass.
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("speaker_sample: frequencies match exact probabilities") {
  const auto vocab = tiny_vocab();
  const std::vector<StepFeature> e{{0, {4}}};
  SpeakerConfig cfg;
  cfg.smoothing = 0.0;
  cfg.max_length = 4;
  const std::vector<SpeakerExample> corpus{{e, toks({0})}, {e, toks({0})}, {e, toks({0, 3})}, {e, toks({1})}};
  const auto m = train_speaker(vocab, corpus, cfg);
  // First symbol: go 3/4, to 1/4; after "go": END 2/3, DIR 1/3.
  const std::map<Instruction, double> exact{{toks({0}), 0.5}, {toks({0, 3}), 0.25}, {toks({1}), 0.25}};
  std::size_t support = 0;
  for (const auto& seq : enumerate_sequences(5, 4)) support += std::exp(m.score(e, Instruction{seq})) > 0.0;
  CHECK(support == 3);
  for (const auto& [u, p] : exact) CHECK(std::exp(m.score(e, u)) == doctest::Approx(p).epsilon(1e-12));

  std::map<Instruction, int> counts;
  const int n = 100000;
  for (int s = 0; s < n; ++s) ++counts[m.sample(e, static_cast<std::uint64_t>(s))];
  CHECK(counts.size() == 3);
  for (const auto& [u, p] : exact) CHECK(std::abs(counts[u] / double(n) - p) <= 0.01);
  CHECK(m.sample(e, 77) == m.sample(e, 77));
}

TEST_CASE("speaker_infer: beam(1) equals greedy and beam is monotone in width") {
  const auto& vocab = bench().vocab();
  const auto m = trained().with_knobs(0.2, 0.2);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& t = bench().val_unseen[i % bench().val_unseen.size()];
    const auto steps = step_features(vocab, t.task.intended);
    const auto g = m.infer(steps, DecodeStrategy::greedy());
    CHECK(m.infer(steps, DecodeStrategy::beam(1)) == g);
    const double gs = m.score(steps, g);
    CHECK(m.score(steps, m.infer(steps, DecodeStrategy::beam(8))) >= gs);
    if (i < 15) {
      double prev = gs;
      for (std::size_t w = 2; w <= 6; ++w) {
        const double s = m.score(steps, m.infer(steps, DecodeStrategy::beam(w)));
        CHECK(s >= prev);
        prev = s;
      }
    }
  }
  CHECK_THROWS_AS(m.infer(step_features(vocab, bench().train[0].task.intended), DecodeStrategy::beam(0)), Error);
}

TEST_CASE("speaker_infer: unbounded beam matches the exhaustive argmax") {
  for (const auto& vocab : {tiny_vocab(), small_vocab()}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto m = random_small_model(seed + 100, 4, vocab);
      const std::vector<StepFeature> e{{static_cast<int>(seed % 8), {4}}, {2, {4}}};
      double best_s = -std::numeric_limits<double>::infinity();
      std::vector<TokenId> best;
      bool have = false;
      for (const auto& seq : enumerate_sequences(5, 4)) {
        const double s = m.score(e, Instruction{seq});
        if (!have || oracle_before(s, seq, best_s, best)) {
          have = true;
          best_s = s;
          best = seq;
        }
      }
      const auto got = m.infer(e, DecodeStrategy::beam(100000));
      CHECK(got.tokens == best);
      CHECK(m.score(e, got) == best_s);
    }
  }
}

TEST_CASE("ranks_before puts END after every token") {
  CHECK(ranks_before(-1.0, toks({1}), -2.0, toks({0})));
  CHECK(ranks_before(-1.0, toks({0}), -1.0, toks({1})));
  CHECK(ranks_before(-1.0, toks({0, 1}), -1.0, toks({0})));
  CHECK_FALSE(ranks_before(-1.0, toks({0}), -1.0, toks({0})));
}

TEST_CASE("max_length forces END") {
  const auto vocab = tiny_vocab();
  SpeakerConfig cfg;
  cfg.max_length = 2;
  const SpeakerModel m(vocab, cfg);
  const std::vector<StepFeature> e{{0, {}}};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto u = m.sample(e, s);
    CHECK(u.size() >= 1);
    CHECK(u.size() <= 2);
  }
  CHECK(m.score(e, toks({0, 0, 0})) == -std::numeric_limits<double>::infinity());
  CHECK(m.score(e, toks({})) == -std::numeric_limits<double>::infinity());
  std::vector<double> p;
  auto st = m.advance(m.advance(m.initial_state(), 0), 0);
  m.next_token_probs(e, st, p);
  CHECK(p[m.end_index()] == 1.0);
  m.next_token_probs(e, m.initial_state(), p);
  CHECK(p[m.end_index()] == 0.0);
}

TEST_CASE("drop knob moves separator mass to END") {
  const auto& vocab = bench().vocab();
  const auto& t = bench().train[0];
  const auto steps = step_features(vocab, t.task.intended);
  REQUIRE(steps.size() >= 2);
  const TokenId sep = vocab.members(TokenClass::kSeparator)[0];
  const double d = 0.35;
  const auto m0 = trained();
  const auto md = trained().with_knobs(d, 0.0);
  auto st = m0.initial_state();
  std::vector<double> p0, pd;
  for (TokenId tok : t.references[0].tokens) {
    m0.next_token_probs(steps, st, p0);
    md.next_token_probs(steps, st, pd);
    const bool last = st.cursor + 1 >= steps.size();
    if (!last && st.length > 0) {
      CHECK(pd[sep] == doctest::Approx((1 - d) * p0[sep]).epsilon(1e-12));
      CHECK(pd[m0.end_index()] == doctest::Approx(p0[m0.end_index()] + d * p0[sep]).epsilon(1e-12));
    } else {
      CHECK(pd[sep] == doctest::Approx(p0[sep]).epsilon(1e-12));
    }
    st = m0.advance(st, tok);
  }
}

TEST_CASE("confusion knob mixes each filler with its predecessor in class") {
  const auto& vocab = bench().vocab();
  const double v = 0.4;
  const auto m0 = trained();
  const auto mv = trained().with_knobs(0.0, v);
  const auto& t = bench().train[3];
  const auto steps = step_features(vocab, t.task.intended);
  auto st = m0.initial_state();
  std::vector<double> p0, pv;
  for (TokenId tok : t.references[0].tokens) {
    m0.next_token_probs(steps, st, p0);
    mv.next_token_probs(steps, st, pv);
    for (auto cls : {TokenClass::kDirection, TokenClass::kLandmark}) {
      const auto& members = vocab.members(cls);
      for (std::size_t i = 0; i < members.size(); ++i) {
        const TokenId prev = members[(i + members.size() - 1) % members.size()];
        CHECK(pv[members[i]] == doctest::Approx((1 - v) * p0[members[i]] + v * p0[prev]).epsilon(1e-12));
      }
    }
    st = m0.advance(st, tok);
  }
}

TEST_CASE("clause dropping lowers ground-truth success of greedy output") {
  const auto& vocab = bench().vocab();
  const GroundTruthListener gt(vocab, {});
  const MetricConfig metric;
  auto rate = [&](const SpeakerModel& m) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto* split : {&bench().val_unseen, &bench().val_seen, &bench().train}) {
      for (const auto& t : *split) {
        if (n == 200) break;
        const auto u = m.infer(step_features(vocab, t.task.intended), DecodeStrategy::greedy());
        total += success(*t.world, gt.follow(*t.world, u, t.task.intended.start, n), t.task.intended, metric);
        ++n;
      }
    }
    REQUIRE(n == 200);
    return total / static_cast<double>(n);
  };
  CHECK(rate(trained().with_knobs(0.5, 0.0)) < rate(trained()));
}
