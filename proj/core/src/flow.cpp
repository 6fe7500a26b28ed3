#include "rscl/flow.hpp"

#include <cmath>
#include <numbers>

#include "rscl/encoder.hpp"
#include "rscl/errors.hpp"

namespace rscl {

double sample_timestep(Rng& rng) {
  // x ~ Beta(1.5, 1) by inverse CDF: F(x) = x^1.5, so x = u^(2/3).
  const double u = rng.uniform();
  const double x = std::pow(u, 2.0 / 3.0);
  return kTimestepCap * (1.0 - x);
}

FlowSample interpolate(const Tensor& chunk, const Tensor& epsilon, double s) {
  require_same_shape(chunk, epsilon, "interpolate");
  require_finite(chunk, "interpolate");
  require_finite(epsilon, "interpolate");
  if (!(s >= 0.0 && s <= 1.0)) {
    throw ValueError("interpolate: s = " + std::to_string(s) + " outside [0,1]");
  }
  FlowSample out;
  out.s = s;
  out.epsilon = epsilon;
  out.a_s = Tensor::zeros(chunk.shape());
  out.target = Tensor::zeros(chunk.shape());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    out.a_s[i] = s * chunk[i] + (1.0 - s) * epsilon[i];
    out.target[i] = epsilon[i] - chunk[i];
  }
  return out;
}

DecoderParams DecoderParams::init(const DecoderDims& dims, Rng& rng) {
  const std::size_t in = static_cast<std::size_t>(dims.input_dim());
  const std::size_t hid = static_cast<std::size_t>(dims.hidden);
  const std::size_t out = static_cast<std::size_t>(dims.chunk_dim());
  DecoderParams p;
  p.w1 = Var::leaf(uniform_init(rng, in, hid, in), true);
  p.b1 = Var::leaf(Tensor::zeros({1, hid}), true);
  p.w2 = Var::leaf(uniform_init(rng, hid, hid, hid), true);
  p.b2 = Var::leaf(Tensor::zeros({1, hid}), true);
  p.w3 = Var::leaf(uniform_init(rng, hid, out, hid), true);
  p.b3 = Var::leaf(Tensor::zeros({1, out}), true);
  return p;
}

std::vector<Var> DecoderParams::params() const { return {w1, b1, w2, b2, w3, b3}; }

Tensor timestep_embedding(double s) {
  using std::numbers::pi;
  return Tensor::row({std::sin(pi * s), std::cos(pi * s),
                      std::sin(2.0 * pi * s), std::cos(2.0 * pi * s)});
}

Var decoder_forward(const DecoderParams& p, const DecoderDims& dims,
                    const Var& h_tokens, const Tensor& a_s, const Tensor& q,
                    double s) {
  if (static_cast<int>(h_tokens.value().cols()) != dims.d_model) {
    throw ShapeError("decoder_forward: token width " +
                     shape_str(h_tokens.value().shape()) + " vs d_model " +
                     std::to_string(dims.d_model));
  }
  if (static_cast<int>(a_s.size()) != dims.chunk_dim()) {
    throw ShapeError("decoder_forward: chunk " + shape_str(a_s.shape()) +
                     " vs horizon*d_a " + std::to_string(dims.chunk_dim()));
  }
  if (static_cast<int>(q.size()) != dims.d_q) {
    throw ShapeError("decoder_forward: proprio " + shape_str(q.shape()) +
                     " vs d_q " + std::to_string(dims.d_q));
  }
  Var pooled = mean_rows(h_tokens);
  Var qv = Var::constant(Tensor::row(q.vec()));
  Var av = Var::constant(Tensor::row(a_s.vec()));
  Var sv = Var::constant(timestep_embedding(s));
  Var in = concat_cols({pooled, qv, av, sv});
  Var l1 = tanh(add_rowvec(matmul(in, p.w1), p.b1));
  Var l2 = tanh(add_rowvec(matmul(l1, p.w2), p.b2));
  return add_rowvec(matmul(l2, p.w3), p.b3);
}

Var fm_loss(const DecoderParams& p, const DecoderDims& dims,
            const std::vector<Var>& h_tokens, const std::vector<FlowSample>& samples,
            const std::vector<Tensor>& q_rows) {
  const std::size_t b = h_tokens.size();
  if (b == 0) throw ValueError("fm_loss: empty batch");
  if (samples.size() != b || q_rows.size() != b) {
    throw ShapeError("fm_loss: batch sizes disagree: " + std::to_string(b) + " h, " +
                     std::to_string(samples.size()) + " samples, " +
                     std::to_string(q_rows.size()) + " q rows");
  }
  std::vector<Var> preds;
  preds.reserve(b);
  Tensor targets = Tensor::zeros({b, static_cast<std::size_t>(dims.chunk_dim())});
  for (std::size_t i = 0; i < b; ++i) {
    preds.push_back(decoder_forward(p, dims, h_tokens[i], samples[i].a_s, q_rows[i],
                                    samples[i].s));
    const Tensor& t = samples[i].target;
    for (std::size_t j = 0; j < t.size(); ++j) targets.at(i, j) = t[j];
  }
  Var pred = b == 1 ? preds[0] : concat_rows(preds);
  return mse(pred, Var::constant(std::move(targets)));
}

Tensor euler_sample(const VelocityFn& velocity, int horizon, int d_a, int k_steps,
                    Rng& rng) {
  if (k_steps < 1) throw ValueError("euler_sample: k_steps must be >= 1");
  Tensor x = rng.gaussian_tensor({static_cast<std::size_t>(horizon),
                                  static_cast<std::size_t>(d_a)});
  const double dt = 1.0 / static_cast<double>(k_steps);
  double s = 0.0;
  for (int k = 0; k < k_steps; ++k) {
    Tensor v = velocity(x, s);
    require_same_shape(x, v, "euler_sample");
    require_finite(v, "euler_sample");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dt * v[i];
    s += dt;
  }
  return x;
}

Tensor sample_actions(const DecoderParams& p, const DecoderDims& dims,
                      const Var& h_tokens, const Tensor& q, int k_steps, Rng& rng) {
  NoGradGuard guard;
  return euler_sample(
      [&](const Tensor& x, double s) {
        Tensor flat = Tensor::row(x.vec());
        Var v = decoder_forward(p, dims, h_tokens, flat, q, s);
        return Tensor({static_cast<std::size_t>(dims.horizon),
                       static_cast<std::size_t>(dims.d_a)},
                      v.value().vec());
      },
      dims.horizon, dims.d_a, k_steps, rng);
}

}  // namespace rscl
