#pragma once

#include <functional>
#include <string>

#include "dpgn/nn.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

struct FdReport {
  double max_rel = 0.0;
  int checked = 0;
  std::string worst;
};

// Central-difference check over sampled coordinates of every parameter.
// run(true) must zero grads, run the forward, call backward, and return the
// loss; run(false) is forward-only. Coordinates where both sides are ~zero
// (|analytic - fd| <= atol) count as agreeing.
inline FdReport fd_check(const dpgn::ParamRefs& params,
                         const std::function<double(bool)>& run, int coords_per_param, double h,
                         dpgn::Rng& rng, double atol = 1e-8) {
  run(true);
  std::vector<dpgn::Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  FdReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    dpgn::Parameter& p = *params[pi];
    const std::size_t n = p.value.size();
    for (int s = 0; s < coords_per_param && s < static_cast<int>(n); ++s) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      const std::size_t j = coords_per_param >= static_cast<int>(n)
                                ? static_cast<std::size_t>(s)
                                : pick(rng);
      const double orig = p.value[j];
      p.value[j] = orig + h;
      const double lp = run(false);
      p.value[j] = orig - h;
      const double lm = run(false);
      p.value[j] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][j];
      rep.checked++;
      if (std::abs(an - fd) <= atol) continue;
      const double re = rel_err(an, fd);
      if (re > rep.max_rel) {
        rep.max_rel = re;
        rep.worst = p.name + "[" + std::to_string(j) + "] analytic=" + std::to_string(an) +
                    " fd=" + std::to_string(fd);
      }
    }
  }
  return rep;
}

inline void jitter_params(const dpgn::ParamRefs& params, double stddev, dpgn::Rng& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (auto* p : params)
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += d(rng);
}

inline double max_abs_diff(const dpgn::Tensor& a, const dpgn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
