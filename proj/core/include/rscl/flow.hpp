#pragma once

#include <functional>
#include <vector>

#include "rscl/autodiff.hpp"
#include "rscl/rng.hpp"

namespace rscl {

// Flow-matching head over H x d_a action chunks. The decoder learns the
// velocity (eps - A); sampling integrates x <- x - (1/K) * v from pure noise
// at s=0 toward the action chunk at s=1.

inline constexpr double kTimestepCap = 0.999;

// Draws s in [0, kTimestepCap] with density 1.5*sqrt(1 - s/a)/a, i.e. the
// (a - s)/a ~ Beta(1.5, 1) prior via inverse-CDF; mean a*(1 - 0.6) = 0.3996.
double sample_timestep(Rng& rng);

struct FlowSample {
  double s = 0.0;
  Tensor epsilon;  // [H, d_a]
  Tensor a_s;      // s*A + (1-s)*eps
  Tensor target;   // eps - A
};

FlowSample interpolate(const Tensor& chunk, const Tensor& epsilon, double s);

struct DecoderDims {
  int d_model = 32;
  int d_q = 3;
  int horizon = 8;
  int d_a = 3;
  int hidden = 64;
  static constexpr int kSEmbDim = 4;
  int chunk_dim() const { return horizon * d_a; }
  int input_dim() const { return d_model + d_q + chunk_dim() + kSEmbDim; }
};

// 3-layer tanh MLP on [pooled h | q | flattened A_s | sinusoidal s].
struct DecoderParams {
  Var w1, b1, w2, b2, w3, b3;
  static DecoderParams init(const DecoderDims& dims, Rng& rng);
  std::vector<Var> params() const;
};

Tensor timestep_embedding(double s);  // [1, kSEmbDim]

// h_tokens: [N, d_model] adapter output; pooled internally by token mean.
// Returns the predicted velocity [1, H*d_a]. Differentiable in the decoder
// parameters and in h.
Var decoder_forward(const DecoderParams& p, const DecoderDims& dims,
                    const Var& h_tokens, const Tensor& a_s, const Tensor& q,
                    double s);

// Mean over all batch elements and coordinates of the squared velocity error.
Var fm_loss(const DecoderParams& p, const DecoderDims& dims,
            const std::vector<Var>& h_tokens, const std::vector<FlowSample>& samples,
            const std::vector<Tensor>& q_rows);

// velocity(x, s) -> [H, d_a]; exposed so tests can drive the integrator with
// a stub decoder.
using VelocityFn = std::function<Tensor(const Tensor& x, double s)>;

Tensor euler_sample(const VelocityFn& velocity, int horizon, int d_a, int k_steps,
                    Rng& rng);

/// Production path: encodes nothing, assumes h_tokens is already computed.
Tensor sample_actions(const DecoderParams& p, const DecoderDims& dims,
                      const Var& h_tokens, const Tensor& q, int k_steps, Rng& rng);

}  // namespace rscl
