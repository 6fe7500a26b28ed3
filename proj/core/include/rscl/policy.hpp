#pragma once

#include "rscl/checkpoint.hpp"
#include "rscl/env.hpp"

namespace rscl {

// Wraps a trained model as an environment policy: normalizes proprioception
// with the dataset stats, encodes the observation, integrates the decoder,
// and (when the model was trained on normalized chunks) maps the sampled
// actions back to raw units.
env::Policy make_model_policy(const CheckpointData& ck, int k_steps);

}  // namespace rscl
