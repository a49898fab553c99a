#include "pragnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pragnav/error.hpp"

namespace pragnav {

namespace {

void check_pair(const World& world, const Trajectory& e_h, const Trajectory& e_star) {
  if (e_h.steps.empty() || e_star.steps.empty()) fail(ErrorCode::kInvalidArgument, "metrics: empty trajectory");
  for (const auto* e : {&e_h, &e_star}) {
    for (const auto& s : e->steps) {
      if (!world.contains(s.node)) fail(ErrorCode::kInvalidArgument, "metrics: trajectory from another world");
    }
  }
}

}  // namespace

double MetricConfig::success_threshold(const World& world) const {
  const double d = threshold ? *threshold : threshold_factor * world.mean_edge_length();
  if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorCode::kInvalidArgument, "metrics: threshold must be positive");
  return d;
}

double success(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg) {
  check_pair(world, e_h, e_star);
  return world.geodesic_distance(e_h.final_node(), e_star.final_node()) <= cfg.success_threshold(world) ? 1.0 : 0.0;
}

double spl(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg) {
  if (success(world, e_h, e_star, cfg) == 0.0) return 0.0;
  const double actual = path_length(world, e_h.nodes());
  const double intended = cfg.spl == SplVariant::kIntendedLength
                              ? path_length(world, e_star.nodes())
                              : world.geodesic_distance(e_star.start, e_star.final_node());
  const double denom = std::max(intended, actual);
  return denom > 0.0 ? intended / denom : 1.0;
}

double dtw_cost(const World& world, std::span<const NodeId> p, std::span<const NodeId> q) {
  if (p.empty() || q.empty()) fail(ErrorCode::kInvalidArgument, "dtw_cost: empty sequence");
  const std::size_t n = p.size(), m = q.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double c = world.geodesic_distance(p[i - 1], q[j - 1]);
      cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double ndtw(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg) {
  check_pair(world, e_h, e_star);
  const auto a = e_h.nodes();
  const auto b = e_star.nodes();
  const double cost = dtw_cost(world, a, b);
  return std::exp(-cost / (static_cast<double>(b.size()) * cfg.success_threshold(world)));
}

double sdtw(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg) {
  return success(world, e_h, e_star, cfg) * ndtw(world, e_h, e_star, cfg);
}

SimilarityReport similarity(const World& world, const Trajectory& e_h, const Trajectory& e_star,
                            const MetricConfig& cfg) {
  SimilarityReport r;
  r.sr = success(world, e_h, e_star, cfg);
  r.spl = spl(world, e_h, e_star, cfg);
  r.ndtw = ndtw(world, e_h, e_star, cfg);
  r.sdtw = r.sr * r.ndtw;
  r.path_len = path_length(world, e_h.nodes());
  return r;
}

std::vector<double> agreement_scores(const Follower& a, const Follower& b, std::span<const AgreementItem> items,
                                     const MetricConfig& cfg) {
  if (items.empty()) fail(ErrorCode::kInvalidArgument, "agreement: empty instruction set");
  std::vector<double> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    if (!it.world) fail(ErrorCode::kInvalidArgument, "agreement: item without world");
    const auto ea = a.follow(*it.world, it.instruction, it.start, it.seed);
    const auto eb = b.follow(*it.world, it.instruction, it.start, it.seed);
    out.push_back(ndtw(*it.world, eb, ea, cfg));
  }
  return out;
}

double agreement(const Follower& a, const Follower& b, std::span<const AgreementItem> items, const MetricConfig& cfg) {
  const auto scores = agreement_scores(a, b, items, cfg);
  double total = 0.0;
  for (double s : scores) total += s;
  return total / static_cast<double>(scores.size());
}

}  // namespace pragnav
