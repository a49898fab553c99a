#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pragnav/language.hpp"

namespace pragnav {

enum class SplVariant : std::uint8_t {
  kIntendedLength,  // numerator is the traveled length of the intended path
  kShortestPath,    // numerator is the geodesic distance start -> goal
};

struct MetricConfig {
  double threshold_factor = 3.0;  // d_th = factor * mean edge length
  std::optional<double> threshold;  // absolute d_th, overrides the factor
  SplVariant spl = SplVariant::kIntendedLength;

  double success_threshold(const World& world) const;
};

struct SimilarityReport {
  double sr = 0.0;
  double spl = 0.0;
  double ndtw = 0.0;
  double sdtw = 0.0;
  double path_len = 0.0;
  bool operator==(const SimilarityReport&) const = default;
};

double success(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg);
double spl(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg);
/// Standard DTW over node sequences with geodesic local cost.
double dtw_cost(const World& world, std::span<const NodeId> p, std::span<const NodeId> q);
double ndtw(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg);
double sdtw(const World& world, const Trajectory& e_h, const Trajectory& e_star, const MetricConfig& cfg);
SimilarityReport similarity(const World& world, const Trajectory& e_h, const Trajectory& e_star,
                            const MetricConfig& cfg);

struct AgreementItem {
  const World* world = nullptr;
  Instruction instruction;
  NodeId start = 0;
  std::uint64_t seed = 0;
};

/// Per-item NDTW between one rollout of each listener; `a` plays the human.
std::vector<double> agreement_scores(const Follower& a, const Follower& b, std::span<const AgreementItem> items,
                                     const MetricConfig& cfg);
double agreement(const Follower& a, const Follower& b, std::span<const AgreementItem> items, const MetricConfig& cfg);

}  // namespace pragnav
