#include "rscl/optim.hpp"

#include <cmath>

#include "rscl/errors.hpp"

namespace rscl {

AdamState AdamState::init(const std::vector<Var>& params, double lr, double beta1,
                          double beta2, double eps, double weight_decay) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.weight_decay = weight_decay;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.value().shape()));
    s.v.push_back(Tensor::zeros(p.value().shape()));
  }
  return s;
}

void adam_step(AdamState& state, std::vector<Var>& params, double lr_now) {
  if (params.size() != state.m.size()) {
    throw ValueError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " moment tensors for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (!std::isfinite(lr_now) || lr_now < 0.0) {
    throw ValueError("adam_step: bad learning rate");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = params[i].grad();
    require_same_shape(state.m[i], g, "adam_step");
    Tensor p = params[i].value();
    double* pm = state.m[i].data();
    double* pv = state.v[i].data();
    double* pp = p.data();
    const double* pg = g.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      pm[j] = state.beta1 * pm[j] + (1.0 - state.beta1) * pg[j];
      pv[j] = state.beta2 * pv[j] + (1.0 - state.beta2) * pg[j] * pg[j];
      const double mhat = pm[j] / bc1;
      const double vhat = pv[j] / bc2;
      double upd = mhat / (std::sqrt(vhat) + state.eps);
      if (state.weight_decay != 0.0) upd += state.weight_decay * pp[j];
      pp[j] -= lr_now * upd;
    }
    params[i].set_value(std::move(p));
  }
}

}  // namespace rscl
