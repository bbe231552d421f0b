#pragma once

#include "pptp/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace pptp::ad {

struct GradCheckOptions {
  // Central differences of order 2 (x +- eps) or 4 (x +- eps, x +- 2 eps).
  // The fourth-order stencil allows a larger step, so rounding in the loss
  // no longer swamps coordinates whose gradient is near zero.
  int order = 4;
  double eps = 1e-3;
  // Arrays larger than this are checked on a seeded random coordinate sample.
  std::size_t max_coords_per_array = 200;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_array = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// `loss_fn` must rebuild the graph from the current values of `params` and
// return a scalar. Central differences are compared against the analytic
// gradient coordinate by coordinate; the relative error of one coordinate is
// |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           const GradCheckOptions& opts = {});

}  // namespace pptp::ad
