#include "rscl/gradcheck.hpp"

#include <cmath>

#include "rscl/errors.hpp"

namespace rscl {

namespace {
double probe(const std::function<Var()>& f) {
  NoGradGuard guard;
  const double v = f().item();
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: non-finite value at probe point");
  }
  return v;
}
}  // namespace

double finite_diff_check(const std::function<Var()>& f, std::vector<Var> params,
                         double step) {
  if (!(step > 0.0)) throw ValueError("finite_diff_check: step must be positive");
  if (params.empty()) throw ValueError("finite_diff_check: no parameters");

  zero_grads(params);
  Var out = f();
  backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor base = params[pi].value();
    for (std::size_t j = 0; j < base.size(); ++j) {
      const double orig = base[j];
      Tensor t = base;
      t[j] = orig + step;
      params[pi].set_value(t);
      const double fp = probe(f);
      t[j] = orig - step;
      params[pi].set_value(t);
      const double fm = probe(f);
      t[j] = orig;
      params[pi].set_value(t);
      const double central = (fp - fm) / (2.0 * step);
      const double a = analytic[pi][j];
      const double denom = std::max(1e-8, std::fabs(a) + std::fabs(central));
      worst = std::max(worst, std::fabs(a - central) / denom);
    }
  }
  return worst;
}

}  // namespace rscl
