#include "pptp/gradcheck.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pptp::ad {

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           const GradCheckOptions& opts) {
  if (opts.order != 2 && opts.order != 4) throw ConfigError("grad_check: order must be 2 or 4");
  if (!(opts.eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  auto eval = [&]() {
    NoGradScope no_grad;
    return loss_fn().item();
  };

  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (std::size_t a = 0; a < params.size(); ++a) {
    Tensor& p = params[a];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.max_coords_per_array) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_array);
      std::sort(coords.begin(), coords.end());
    }
    const auto grad = p.grad();
    for (std::size_t c : coords) {
      auto data = p.mutable_data();
      const double saved = data[c];
      auto at = [&](double offset) {
        data[c] = saved + offset;
        const double v = eval();
        data[c] = saved;
        return v;
      };
      const double h = opts.eps;
      const double numeric = opts.order == 2
                                 ? (at(h) - at(-h)) / (2.0 * h)
                                 : (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      const double analytic = grad.empty() ? 0.0 : grad[c];
      const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_array = a;
        result.worst_coord = c;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace pptp::ad
