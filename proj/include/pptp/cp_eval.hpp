#pragma once

// Collaboration-performance scoring of a block-stacking task.
//
// Each placed block gets a skew S = |x_e - x_s| * layer (0 on the base
// layer), where x_s is the centre of its support. The ten-slot failure-risk
// vector holds, for every stacked step n, the discounted running sum
// F_n = S_n + gamma * F_{n-1}. Slots not yet stacked hold -1. After a
// collapse at step n, slots n..10 hold -2 and earlier slots are kept.

#include "pptp/session.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pptp {

inline constexpr std::size_t kMaxBlocks = 10;
inline constexpr double kDefaultGamma = 0.8;
inline constexpr double kUnstacked = -1.0;
inline constexpr double kCollapsed = -2.0;

struct FailureRiskVector {
  std::array<double, kMaxBlocks> f;
  double gamma = kDefaultGamma;
  int n_stacked = 0;
  bool collapsed = false;

  FailureRiskVector() { f.fill(kUnstacked); }
  bool operator==(const FailureRiskVector&) const = default;
};

double support_center(std::span<const double> support_centers);
double block_skew(const BlockPlacement& p);
double failure_risk_step(double prev, double skew, double gamma);

FailureRiskVector failure_risk_vector(std::span<const BlockPlacement> placements, std::int64_t upto_ms,
                                      double gamma = kDefaultGamma);

struct RiskStep {
  int step_index = 0;
  std::int64_t timestamp_ms = 0;
  double skew = 0.0;
  double risk = 0.0;  // discounted sum before any collapse overwrite
  bool collapsed = false;
};

// Per-step skew and discounted risk for every placement up to `upto_ms`.
std::vector<RiskStep> risk_trace(std::span<const BlockPlacement> placements, std::int64_t upto_ms,
                                 double gamma = kDefaultGamma);

}  // namespace pptp
