#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pragnav/error.hpp"
#include "pragnav/language.hpp"
#include "pragnav/metrics.hpp"
#include "pragnav/rng.hpp"
#include "support.hpp"

using namespace pragnav;
using namespace testing_support;

namespace {

// Direction word -> relative sectors, written out by hand.
const std::map<std::string, std::set<int>> kDirections = {
    {"ahead", {7, 0, 1}},  {"left", {1, 2, 3}},       {"back", {3, 4, 5}},      {"right", {5, 6, 7}},
    {"straight", {0}},     {"bearleft", {1}},         {"squareleft", {2}},      {"sharpleft", {3}},
    {"uturn", {4}},        {"sharpright", {5}},       {"squareright", {6}},     {"bearright", {7}},
};

struct OracleClause {
  std::string direction;  // empty when absent
  std::string landmark;
};

std::vector<OracleClause> oracle_parse(const std::string& text, const std::set<std::string>& landmarks) {
  std::vector<OracleClause> out;
  OracleClause cur;
  auto flush = [&] {
    if (!cur.direction.empty() || !cur.landmark.empty()) out.push_back(cur);
    cur = {};
  };
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    if (w == "then") {
      flush();
    } else if (kDirections.count(w)) {
      if (cur.direction.empty()) cur.direction = w;
    } else if (landmarks.count(w)) {
      if (cur.landmark.empty()) cur.landmark = w;
    }
  }
  flush();
  return out;
}

int oracle_sector(const World& w, NodeId a, NodeId b) {
  const auto& p = w.nodes()[a];
  const auto& q = w.nodes()[b];
  const double deg = std::atan2(q.y - p.y, q.x - p.x) * 180.0 / 3.14159265358979323846;
  const double norm = deg < 0 ? deg + 360.0 : deg;
  return static_cast<int>(norm / 45.0) % 8;
}

std::vector<NodeId> oracle_candidates(const World& w, NodeId at, int heading, const OracleClause& c) {
  std::vector<NodeId> nbrs;
  for (auto [a, b] : w.edges()) {
    if (a == at) nbrs.push_back(b);
    if (b == at) nbrs.push_back(a);
  }
  auto dir_ok = [&](NodeId v) {
    return c.direction.empty() || kDirections.at(c.direction).count(((oracle_sector(w, at, v) - heading) % 8 + 8) % 8);
  };
  auto lm_ok = [&](NodeId v) {
    const auto& l = w.nodes()[v].landmarks;
    return c.landmark.empty() || std::find(l.begin(), l.end(), c.landmark) != l.end();
  };
  std::vector<NodeId> out;
  for (NodeId v : nbrs) if (dir_ok(v) && lm_ok(v)) out.push_back(v);
  if (out.empty() && !c.landmark.empty()) for (NodeId v : nbrs) if (lm_ok(v)) out.push_back(v);
  if (out.empty() && !c.direction.empty()) for (NodeId v : nbrs) if (dir_ok(v)) out.push_back(v);
  if (out.empty()) out = nbrs;
  return out;
}

/// Exact distribution over final nodes of the noisy clause automaton, by
/// forward propagation over (node, heading) states.
std::map<NodeId, double> oracle_final_distribution(const World& w, const std::vector<OracleClause>& clauses,
                                                   NodeId start, double eps) {
  std::map<std::pair<NodeId, int>, double> states{{{start, 0}, 1.0}};
  for (const auto& c : clauses) {
    std::map<std::pair<NodeId, int>, double> next;
    for (const auto& [st, p] : states) {
      const auto [at, heading] = st;
      const auto cands = oracle_candidates(w, at, heading, c);
      std::vector<NodeId> nbrs;
      for (auto [a, b] : w.edges()) {
        if (a == at) nbrs.push_back(b);
        if (b == at) nbrs.push_back(a);
      }
      for (NodeId v : nbrs) {
        const bool hit = std::find(cands.begin(), cands.end(), v) != cands.end();
        const double q = (1 - eps) * (hit ? 1.0 / cands.size() : 0.0) + eps / nbrs.size();
        next[{v, oracle_sector(w, at, v)}] += p * q;
      }
    }
    states = std::move(next);
  }
  std::map<NodeId, double> out;
  for (const auto& [st, p] : states) out[st.first] += p;
  return out;
}

std::set<std::string> catalog_set(std::uint32_t n) {
  const auto c = landmark_catalog(n);
  return {c.begin(), c.end()};
}

}  // namespace

TEST_CASE("Vocabulary and encoding") {
  const Grammar g;
  const auto& v = g.vocabulary();
  CHECK(v.find("stop").has_value());
  CHECK(v.token_class(*v.find("then")) == TokenClass::kSeparator);
  CHECK(v.token_class(*v.find("left")) == TokenClass::kDirection);
  CHECK(v.token_class(*v.find("oven")) == TokenClass::kLandmark);
  const auto u = encode(v, "go left to the oven then walk to the sofa");
  CHECK(to_text(v, u) == "go left to the oven then walk to the sofa");
  CHECK_THROWS_AS(encode(v, "go zigzag"), Error);
  CHECK(to_text(v, encode_lenient(v, "go zigzag to the oven")) == "go to the oven");
  CHECK(encode(v, "go left") < encode(v, "go right"));
}

TEST_CASE("parse_clauses keeps the first direction and landmark per clause") {
  const Grammar g;
  const auto& v = g.vocabulary();
  const auto clauses = parse_clauses(v, encode(v, "go left right to the oven sofa then then walk to the door"));
  REQUIRE(clauses.size() == 2);
  CHECK(clauses[0].direction == v.find("left"));
  CHECK(clauses[0].landmark == v.find("oven"));
  CHECK_FALSE(clauses[1].direction.has_value());
  CHECK(clauses[1].landmark == v.find("door"));
  CHECK(parse_clauses(v, encode(v, "stop")).empty());
}

TEST_CASE("direction masks") {
  for (const auto& [word, sectors] : kDirections) {
    std::uint8_t m = 0;
    for (int s : sectors) m = static_cast<std::uint8_t>(m | (1u << s));
    CHECK(direction_mask(word) == m);
  }
  CHECK(direction_mask("oven") == 0);
}

TEST_CASE("reference_speak: single edge names the only landmark") {
  const Grammar g;
  const auto w = line_world(2);
  const std::vector<NodeId> path{0, 1};
  const Task t{"t", "w", make_trajectory(w, path, true)};
  const auto u = reference_speak(g, w, t, 0);
  const auto clauses = parse_clauses(g.vocabulary(), u);
  REQUIRE(clauses.size() == 1);
  CHECK(clauses[0].landmark == g.vocabulary().find(w.node(1).landmarks[0]));
  CHECK(reference_speak(g, w, t, 0) == u);
}

TEST_CASE("reference_speak: paraphrases vary with the seed") {
  const Grammar g;
  const auto w = World::generate({40, 12, 2});
  const auto t = sample_task(w, {5, 7}, 1);
  std::set<Instruction> seen;
  for (std::uint64_t s = 0; s < 30; ++s) seen.insert(reference_speak(g, w, t, s));
  CHECK(seen.size() > 1);
}

TEST_CASE("reference_speak: too long for the grammar") {
  const Grammar g;
  const std::size_t n = g.max_moves() + 2;
  const auto w = line_world(n);
  std::vector<NodeId> path;
  for (std::size_t i = 0; i < n; ++i) path.push_back(static_cast<NodeId>(i));
  const Task t{"t", "w", make_trajectory(w, path, true)};
  CHECK_THROWS_AS(reference_speak(g, w, t, 0), Error);
}

TEST_CASE("closed loop: noiseless listener reproduces 200 intended paths") {
  const Grammar g;
  const GroundTruthListener gt(g.vocabulary(), {});
  int ok = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto w = World::generate({40, 12, 100 + i % 10});
    const auto t = sample_task(w, {4, 7}, i);
    const auto u = reference_speak(g, w, t, i);
    const auto e = reference_follow(gt, w, u, t.intended.start, i);
    ok += e.nodes() == t.intended.nodes();
    CHECK(likelihood_under_gt(gt, w, u, t.intended) == 1.0);
  }
  CHECK(ok == 200);
}

TEST_CASE("reference_follow: unparseable input stops at the start") {
  const Grammar g;
  const GroundTruthListener gt(g.vocabulary(), {});
  const auto w = fork_world();
  const auto e = reference_follow(gt, w, encode_lenient(g.vocabulary(), "xyzzy plugh"), 2, 0);
  CHECK(e.nodes() == std::vector<NodeId>{2});
  CHECK(e.terminal);
}

TEST_CASE("reference_follow: max_steps caps the walk") {
  const Grammar g;
  const auto& v = g.vocabulary();
  GroundTruthConfig cfg;
  cfg.max_steps = 1;
  const GroundTruthListener gt(v, cfg);
  CHECK(gt.max_steps(3) == 1);
  CHECK(GroundTruthListener(v, {}).max_steps(3) == 11);
  const auto w = line_world(4);
  const auto e = gt.follow(w, encode(v, "go ahead then go ahead then go ahead"), 0, 0);
  CHECK(e.nodes() == std::vector<NodeId>{0, 1});
}

TEST_CASE("reference_follow: empirical success matches the Markov-chain oracle") {
  const Grammar g;
  GroundTruthConfig cfg;
  cfg.eps_act = 0.3;
  const GroundTruthListener gt(g.vocabulary(), cfg);
  const auto w = World::generate({30, 12, 17});
  const auto t = sample_task(w, {5, 6}, 4);
  const auto u = reference_speak(g, w, t, 4);
  const auto fw = floyd_warshall(w);
  const MetricConfig metric;
  const double d_th = metric.success_threshold(w);
  const NodeId goal = t.intended.final_node();

  const auto dist = oracle_final_distribution(w, oracle_parse(to_text(g.vocabulary(), u), catalog_set(12)),
                                              t.intended.start, 0.3);
  double exact = 0.0;
  for (const auto& [node, p] : dist) {
    if (fw[node][goal] <= d_th) exact += p;
  }
  int hits = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto e = reference_follow(gt, w, u, t.intended.start, s);
    hits += success(w, e, t.intended, metric) == 1.0;
  }
  CHECK(std::abs(hits / 1000.0 - exact) <= 0.03);
}

TEST_CASE("likelihood_under_gt: trivial cases") {
  const Grammar g;
  const auto& v = g.vocabulary();
  const GroundTruthListener gt(v, {});
  const auto w = line_world(3);
  const std::vector<NodeId> good{0, 1, 2}, bad{0, 1, 0};
  const auto u = encode(v, "go ahead to the stairs then go ahead to the sofa");
  REQUIRE(w.node(1).landmarks[0] == "stairs");
  CHECK(likelihood_under_gt(gt, w, u, make_trajectory(w, good)) == 1.0);
  CHECK(likelihood_under_gt(gt, w, u, make_trajectory(w, bad)) == 0.0);
  CHECK(likelihood_under_gt(gt, w, u, make_trajectory(w, good, false)) == 0.0);
}

TEST_CASE("likelihood_under_gt: 3-node path world, one step, eps_act 0.5") {
  const Grammar g;
  const auto& v = g.vocabulary();
  GroundTruthConfig cfg;
  cfg.eps_act = 0.5;
  const GroundTruthListener gt(v, cfg);
  const auto w = line_world(3);  // oven - stairs - sofa
  const auto u = encode(v, "walk to the sofa");
  // From the middle node: intended neighbor 2 gets 0.5 + 0.5/2, the other 0.5/2.
  const std::vector<NodeId> to2{1, 2}, to0{1, 0}, stay{1};
  const double p2 = likelihood_under_gt(gt, w, u, make_trajectory(w, to2));
  const double p0 = likelihood_under_gt(gt, w, u, make_trajectory(w, to0));
  CHECK(p2 == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p0 == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(likelihood_under_gt(gt, w, u, make_trajectory(w, stay)) == 0.0);
  double total = 0.0;
  for (const auto& path : enumerate_walks(w, 1, 3)) total += likelihood_under_gt(gt, w, u, make_trajectory(w, path));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("likelihood_under_gt: normalizes on enumerable fixtures") {
  const Grammar g;
  const auto& v = g.vocabulary();
  const std::vector<std::string> texts = {
      "walk to the sofa",
      "go left to the oven then walk to the lamp",
      "go right to the door then go back to the oven then walk to the sofa",
      "stop",
      "go uturn to the piano then go ahead",
  };
  for (double eps_parse : {0.0, 0.2}) {
    for (double eps_act : {0.0, 0.1, 0.5}) {
      const GroundTruthListener gt(v, {eps_parse, eps_act, std::nullopt});
      for (auto world : {&testing_support::fork_world, +[] { return line_world(4); }}) {
        const auto w = world();
        for (const auto& text : texts) {
          const auto u = encode(v, text);
          for (NodeId start = 0; start < w.node_count(); ++start) {
            double total = 0.0;
            for (const auto& path : enumerate_walks(w, start, 3)) {
              total += likelihood_under_gt(gt, w, u, make_trajectory(w, path));
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
          }
        }
      }
    }
  }
}

TEST_CASE("likelihood_under_gt: matches the Markov-chain oracle on final nodes") {
  const Grammar g;
  const auto& v = g.vocabulary();
  GroundTruthConfig cfg;
  cfg.eps_act = 0.2;
  const GroundTruthListener gt(v, cfg);
  const auto w = fork_world();
  const std::string text = "go left to the sofa then walk to the oven";
  const auto u = encode(v, text);
  const auto oracle = oracle_final_distribution(w, oracle_parse(text, catalog_set(12)), 0, 0.2);
  std::map<NodeId, double> by_final;
  for (const auto& path : enumerate_walks(w, 0, 2)) {
    if (path.size() == 3) by_final[path.back()] += likelihood_under_gt(gt, w, u, make_trajectory(w, path));
  }
  for (const auto& [node, p] : oracle) CHECK(by_final[node] == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("reference_follow: success degrades monotonically in eps_act") {
  const Grammar g;
  const MetricConfig metric;
  std::vector<double> rates;
  for (double eps : {0.0, 0.1, 0.3, 0.5}) {
    GroundTruthConfig cfg;
    cfg.eps_act = eps;
    const GroundTruthListener gt(g.vocabulary(), cfg);
    double total = 0.0;
    int count = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const auto w = World::generate({40, 12, 500 + i % 5});
      const auto t = sample_task(w, {4, 7}, i);
      const auto u = reference_speak(g, w, t, i);
      for (std::uint64_t r = 0; r < 10; ++r) {
        total += success(w, reference_follow(gt, w, u, t.intended.start, derive_seed(i, r)), t.intended, metric);
        ++count;
      }
    }
    rates.push_back(total / count);
  }
  CHECK(rates[0] == 1.0);
  for (std::size_t i = 1; i < rates.size(); ++i) CHECK(rates[i] <= rates[i - 1]);
}

TEST_CASE("GroundTruthListener rejects bad noise") {
  const Grammar g;
  CHECK_THROWS_AS(GroundTruthListener(g.vocabulary(), {-0.1, 0.0, std::nullopt}), Error);
  CHECK_THROWS_AS(GroundTruthListener(g.vocabulary(), {0.0, 1.5, std::nullopt}), Error);
}
