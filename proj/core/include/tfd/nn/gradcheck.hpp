#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "tfd/tensor.hpp"

namespace tfd::nn {

// Compares an analytic gradient against central finite differences on a
// double-precision buffer. `loss` must recompute the scalar loss from the
// current contents of the buffer (any randomness inside must be replayed
// from a fixed seed so repeated calls agree). Returns the worst relative
// error, with the denominator floored at 1 so near-zero gradients do not
// blow the ratio up.
inline double max_rel_error_central(const std::function<double()>& loss,
                                    double* theta, const double* analytic,
                                    int64_t n, double h = 1e-4) {
  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double lp = loss();
    theta[i] = saved - h;
    const double lm = loss();
    theta[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double g = analytic[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(g)});
    worst = std::max(worst, std::abs(fd - g) / denom);
  }
  return worst;
}

// Convenience overload over a whole tensor.
inline double max_rel_error_central(const std::function<double()>& loss,
                                    Tensor<double>& theta,
                                    const Tensor<double>& analytic,
                                    double h = 1e-4) {
  return max_rel_error_central(loss, theta.data(), analytic.data(), theta.size(), h);
}

}  // namespace tfd::nn
