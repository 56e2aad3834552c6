#pragma once

// Central finite-difference gradient checking. The builder reruns the
// whole forward pass, so perturbed leaves propagate everywhere they are
// used.

#include <cmath>
#include <functional>
#include <vector>

#include "cgn/autodiff.hpp"

namespace gradcheck {

struct Result {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

/// Compares the analytic gradient of build() (a scalar graph) against
/// central differences for every element of every leaf.
inline Result check(const std::function<cgn::ad::Var()>& build,
                    const std::vector<cgn::ad::Var>& leaves, double h = 1e-5) {
  Result result;
  for (const auto& leaf : leaves) leaf->grad.zero();
  cgn::ad::backward(build());
  std::vector<cgn::Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(leaf->grad);

  for (size_t l = 0; l < leaves.size(); ++l) {
    auto& value = leaves[l]->value;
    for (std::int64_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = build()->value[0];
      value[i] = saved - h;
      const double down = build()->value[0];
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[l][i], numeric));
      ++result.checked;
    }
  }
  for (const auto& leaf : leaves) leaf->grad.zero();
  return result;
}

}  // namespace gradcheck
