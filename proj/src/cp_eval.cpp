#include "pptp/cp_eval.hpp"

#include "pptp/errors.hpp"

#include <cmath>
#include <string>

namespace pptp {

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("discount factor must lie in (0,1), got " + std::to_string(gamma));
  }
}

}  // namespace

double support_center(std::span<const double> support_centers) {
  if (support_centers.size() == 1) return support_centers[0];
  if (support_centers.size() == 2) return 0.5 * (support_centers[0] + support_centers[1]);
  throw ValidationError("a block rests on one or two supports, got " +
                        std::to_string(support_centers.size()));
}

double block_skew(const BlockPlacement& p) {
  if (p.layer < 1) throw ValidationError("layer must be >= 1");
  if (p.layer == 1) return 0.0;
  if (p.support_centers.empty()) {
    throw ValidationError("step " + std::to_string(p.step_index) + ": layer " +
                          std::to_string(p.layer) + " block has no supports");
  }
  return std::abs(p.x_center - support_center(p.support_centers)) * p.layer;
}

double failure_risk_step(double prev, double skew, double gamma) {
  check_gamma(gamma);
  return skew + gamma * prev;
}

std::vector<RiskStep> risk_trace(std::span<const BlockPlacement> placements, std::int64_t upto_ms,
                                 double gamma) {
  check_gamma(gamma);
  std::vector<RiskStep> steps;
  double prev = 0.0;
  for (const auto& p : placements) {
    if (p.timestamp_ms > upto_ms) break;
    if (steps.size() == kMaxBlocks) throw ValidationError("more than 10 placements");
    RiskStep r;
    r.step_index = p.step_index;
    r.timestamp_ms = p.timestamp_ms;
    r.skew = block_skew(p);
    r.risk = failure_risk_step(prev, r.skew, gamma);
    r.collapsed = p.collapsed_after;
    prev = r.risk;
    steps.push_back(r);
    if (p.collapsed_after) break;
  }
  return steps;
}

FailureRiskVector failure_risk_vector(std::span<const BlockPlacement> placements, std::int64_t upto_ms,
                                      double gamma) {
  FailureRiskVector out;
  out.gamma = gamma;
  const auto steps = risk_trace(placements, upto_ms, gamma);
  for (std::size_t i = 0; i < steps.size(); ++i) out.f[i] = steps[i].risk;
  out.n_stacked = static_cast<int>(steps.size());
  if (!steps.empty() && steps.back().collapsed) {
    out.collapsed = true;
    for (std::size_t i = steps.size() - 1; i < kMaxBlocks; ++i) out.f[i] = kCollapsed;
  }
  return out;
}

}  // namespace pptp
