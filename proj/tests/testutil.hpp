#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "sketchlab/autodiff.hpp"
#include "sketchlab/rng.hpp"

namespace sketchlab::testutil {

inline double rel_err(double analytic, double numeric) {
  double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckStats {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

// Central-difference gradient check.  `build_loss` must be a pure function of
// the parameter values (rebuilds the graph on every call).  For each
// parameter, up to `coords_per_param` coordinates are probed (all of them if
// the tensor is small enough, otherwise a seeded random subset).
inline GradCheckStats check_gradients(
    const std::function<Var()>& build_loss, const std::vector<Var>& params,
    int coords_per_param = 16, double eps = 1e-5, uint64_t seed = 7,
    double tol = 1e-4) {
  Var loss = build_loss();
  zero_grad(params);
  backward(loss, params);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    REQUIRE(p->grad.size() == p->value.size());
    analytic.push_back(p->grad);
  }

  GradCheckStats stats;
  Rng rng(seed);
  for (size_t k = 0; k < params.size(); ++k) {
    Var p = params[k];
    long n = p->value.size();
    std::vector<long> coords;
    if (n <= coords_per_param) {
      for (long i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < coords_per_param; ++i)
        coords.push_back(static_cast<long>(rng.uniform_int(n)));
    }
    for (long c : coords) {
      double x0 = p->value[c];
      double fp, fm;
      {
        NoGradGuard ng;
        p->value[c] = x0 + eps;
        fp = build_loss()->value[0];
        p->value[c] = x0 - eps;
        fm = build_loss()->value[0];
        p->value[c] = x0;
      }
      double numeric = (fp - fm) / (2.0 * eps);
      double e = rel_err(analytic[k][c], numeric);
      stats.max_rel_err = std::max(stats.max_rel_err, e);
      ++stats.coords_checked;
      if (e > tol) {
        CAPTURE(k);
        CAPTURE(c);
        CAPTURE(analytic[k][c]);
        CAPTURE(numeric);
      }
      CHECK(e < tol);
    }
  }
  return stats;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.size(); ++i) t[i] = scale * rng.gaussian();
  return t;
}

}  // namespace sketchlab::testutil
