#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "pragnav/error.hpp"
#include "pragnav/metrics.hpp"
#include "pragnav/rng.hpp"
#include "support.hpp"

using namespace pragnav;
using namespace testing_support;

namespace {

Trajectory traj(const World& w, std::vector<NodeId> path) { return make_trajectory(w, path, true); }

MetricConfig absolute(double d) {
  MetricConfig c;
  c.threshold = d;
  return c;
}

std::vector<NodeId> random_walk(const World& w, Rng& rng, std::size_t max_nodes) {
  const std::size_t len = 1 + uniform_index(rng, max_nodes);
  std::vector<NodeId> p{static_cast<NodeId>(uniform_index(rng, w.node_count()))};
  while (p.size() < len) {
    const auto nbs = w.neighbors(p.back());
    p.push_back(nbs[uniform_index(rng, nbs.size())].node);
  }
  return p;
}

// Replays fixed trajectories regardless of the instruction.
class Scripted final : public Follower {
 public:
  explicit Scripted(std::vector<Trajectory> out) : out_(std::move(out)) {}
  std::string name() const override { return "scripted"; }
  Trajectory follow(const World&, const Instruction&, NodeId, std::uint64_t seed) const override {
    return out_[seed % out_.size()];
  }

 private:
  std::vector<Trajectory> out_;
};

}  // namespace

TEST_CASE("dtw_cost: line fixture and identity") {
  const auto w = line_world(3);
  const std::vector<NodeId> p{0, 1, 2}, q{0, 2};
  CHECK(dtw_cost(w, p, q) == 1.0);
  CHECK(brute_force_dtw(w, p, q) == 1.0);
  CHECK(dtw_cost(w, p, p) == 0.0);
  const std::vector<NodeId> empty;
  CHECK_THROWS_AS(dtw_cost(w, p, empty), Error);
}

TEST_CASE("dtw_cost: equals brute-force alignment enumeration on 200 random pairs") {
  const auto w = World::generate({50, 12, 31});
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_walk(w, rng, 6);
    const auto q = random_walk(w, rng, 6);
    CHECK(dtw_cost(w, p, q) == brute_force_dtw(w, p, q));
    CHECK(dtw_cost(w, p, q) == doctest::Approx(dtw_cost(w, q, p)).epsilon(1e-12));
  }
}

TEST_CASE("ndtw and sdtw: line fixture") {
  const auto w = line_world(3);
  const auto cfg = absolute(3.0);
  const auto e_star = traj(w, {0, 1, 2});
  const auto e_h = traj(w, {0, 1});
  const double expected = std::exp(-1.0 / 9.0);
  CHECK(ndtw(w, e_h, e_star, cfg) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.8948).epsilon(1e-4));
  CHECK(success(w, e_h, e_star, cfg) == 1.0);
  CHECK(sdtw(w, e_h, e_star, cfg) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(ndtw(w, e_star, e_star, cfg) == 1.0);
}

TEST_CASE("ndtw decreases as the cost grows") {
  const auto w = line_world(6);
  const auto cfg = absolute(2.0);
  const auto e_star = traj(w, {0, 1, 2});
  double last = 2.0;
  for (const auto& path : std::vector<std::vector<NodeId>>{{0, 1, 2}, {0, 1}, {1}, {0}, {2, 3}, {3, 4, 5}}) {
    const double v = ndtw(w, traj(w, path), e_star, cfg);
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("success: identical and far trajectories") {
  const auto w = line_world(6);
  const auto cfg = absolute(1.5);
  CHECK(success(w, traj(w, {0, 1, 2}), traj(w, {0, 1, 2}), cfg) == 1.0);
  CHECK(success(w, traj(w, {0, 1, 2, 3, 4, 5}), traj(w, {0, 1, 2}), cfg) == 0.0);
  CHECK(success(w, traj(w, {0, 1, 2, 3}), traj(w, {0, 1, 2}), cfg) == 1.0);
  MetricConfig bad;
  bad.threshold = 0.0;
  CHECK_THROWS_AS(success(w, traj(w, {0}), traj(w, {0}), bad), Error);
}

TEST_CASE("success matches the all-pairs distance oracle") {
  const auto w = World::generate({40, 12, 5});
  const auto fw = floyd_warshall(w);
  const MetricConfig cfg;
  double mean_edge = 0.0;
  for (auto [a, b] : w.edges()) mean_edge += fw[a][b];
  const double d_th = 3.0 * mean_edge / static_cast<double>(w.edges().size());
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_walk(w, rng, 6);
    const auto q = random_walk(w, rng, 6);
    const auto eh = traj(w, p);
    const auto es = traj(w, q);
    const double oracle = fw[p.back()][q.back()] <= d_th ? 1.0 : 0.0;
    CHECK(success(w, eh, es, cfg) == oracle);
  }
}

TEST_CASE("spl: arithmetic cases") {
  const auto w = line_world(3);
  const auto cfg = absolute(1.5);
  const auto e_star = traj(w, {0, 1, 2});
  CHECK(spl(w, e_star, e_star, cfg) == 1.0);
  CHECK(spl(w, traj(w, {0, 1, 2, 1, 2}), e_star, cfg) == 0.5);
  CHECK(spl(w, traj(w, {0}), traj(w, {2}), absolute(0.5)) == 0.0);
  CHECK(spl(w, traj(w, {1}), traj(w, {1}), cfg) == 1.0);
}

TEST_CASE("spl: shortest-path variant uses the geodesic numerator") {
  const auto w = fork_world();
  auto cfg = absolute(0.5);
  const auto e_star = traj(w, {0, 2, 4, 1});
  CHECK(spl(w, e_star, e_star, cfg) == 1.0);
  cfg.spl = SplVariant::kShortestPath;
  CHECK(spl(w, e_star, e_star, cfg) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("similarity: identities on random pairs") {
  const auto w = World::generate({50, 12, 9});
  const MetricConfig cfg;
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    const auto eh = traj(w, random_walk(w, rng, 6));
    const auto es = traj(w, random_walk(w, rng, 6));
    const auto r = similarity(w, eh, es, cfg);
    CHECK(r.sdtw == r.sr * r.ndtw);
    CHECK(std::abs(sdtw(w, eh, es, cfg) - success(w, eh, es, cfg) * ndtw(w, eh, es, cfg)) <= 1e-12);
    CHECK(r.spl <= r.sr + 1e-12);
    CHECK(r.sdtw <= std::min(r.sr, r.ndtw) + 1e-12);
    for (double v : {r.sr, r.spl, r.ndtw, r.sdtw}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(r.path_len == doctest::Approx(path_length(w, eh.nodes())).epsilon(1e-15));
  }
}

TEST_CASE("agreement: normalizes by the first listener's trajectory") {
  const auto w = line_world(4);
  const auto cfg = absolute(3.0);
  const Scripted a({traj(w, {0, 1, 2})});
  const Scripted b({traj(w, {0, 1})});
  const std::vector<AgreementItem> items{{&w, {}, 0, 0}, {&w, {}, 0, 1}};
  const auto scores = agreement_scores(a, b, items, cfg);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == doctest::Approx(std::exp(-1.0 / 9.0)).epsilon(1e-15));
  // Swapped roles: normalizer is now 2 nodes.
  CHECK(agreement(b, a, items, cfg) == doctest::Approx(std::exp(-1.0 / 6.0)).epsilon(1e-15));
  const std::vector<AgreementItem> none;
  CHECK_THROWS_AS(agreement(a, b, none, cfg), Error);
}

TEST_CASE("agreement: self-agreement is 1 and a random walker scores lower") {
  const auto bench = make_bench(5, 2, 30, 23);
  ListenerConfig lc;
  lc.epochs = 3;
  const auto m = train_listener(bench.vocab(), listener_examples(bench.train), lc, 2);
  std::vector<AgreementItem> items;
  std::uint64_t seed = 0;
  for (const auto& t : bench.val_unseen) {
    for (const auto& u : t.references) items.push_back({t.world.get(), u, t.task.intended.start, seed++});
  }
  REQUIRE(items.size() >= 100);
  const MetricConfig cfg;
  CHECK(agreement(m, m, items, cfg) == 1.0);
  const UniformRandomFollower random;
  CHECK(agreement(m, random, items, cfg) < 1.0);
  CHECK(agreement(m, random, items, cfg) < agreement(m, m, items, cfg) - 0.05);
}
