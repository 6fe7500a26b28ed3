#pragma once

#include <functional>
#include <vector>

#include "rscl/autodiff.hpp"

namespace rscl {

// Compares reverse-mode gradients against central finite differences.
//
// f must rebuild its graph from the current leaf values on every call and
// return a scalar. Every coordinate of every parameter is probed with the
// given step; the reported figure is
//   max_i |analytic_i - central_i| / max(1e-8, |analytic_i| + |central_i|).
// Throws NumericError if f turns non-finite at a probe point.
double finite_diff_check(const std::function<Var()>& f, std::vector<Var> params,
                         double step = 1e-5);

}  // namespace rscl
