#pragma once

#include <vector>

#include "rscl/autodiff.hpp"

namespace rscl {

// Adam with bias correction and optional decoupled weight decay. One state
// per parameter group; moments are aligned with the group's parameter list.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const std::vector<Var>& params, double lr,
                        double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8, double weight_decay = 0.0);
};

// One update from the accumulated leaf gradients. lr_now lets a schedule
// override the stored base rate for this step; pass state.lr for none.
void adam_step(AdamState& state, std::vector<Var>& params, double lr_now);

}  // namespace rscl
