#include "rscl/encoder.hpp"

#include <cmath>
#include <string>

#include "rscl/errors.hpp"

namespace rscl {

Tensor uniform_init(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

BackboneParams BackboneParams::init(const EncoderDims& dims, Rng& rng, bool frozen) {
  BackboneParams p;
  p.frozen = frozen;
  const bool grad = !frozen;
  const std::size_t out = static_cast<std::size_t>(dims.n_tok * dims.d_model);
  const std::size_t raw = static_cast<std::size_t>(dims.raw_dim);
  for (int v = 0; v < dims.v_views; ++v) {
    p.view_w.push_back(Var::leaf(uniform_init(rng, out, raw, raw), grad));
    p.view_b.push_back(Var::leaf(Tensor::zeros({out, 1}), grad));
  }
  p.instr_table = Var::leaf(
      uniform_init(rng, static_cast<std::size_t>(dims.n_instructions),
                   static_cast<std::size_t>(dims.d_model),
                   static_cast<std::size_t>(dims.d_model)),
      grad);
  return p;
}

std::vector<Var> BackboneParams::params() const {
  std::vector<Var> out;
  for (std::size_t v = 0; v < view_w.size(); ++v) {
    out.push_back(view_w[v]);
    out.push_back(view_b[v]);
  }
  out.push_back(instr_table);
  return out;
}

AdapterParams AdapterParams::init(const EncoderDims& dims, Rng& rng) {
  const std::size_t d = static_cast<std::size_t>(dims.d_model);
  AdapterParams p;
  p.w1 = Var::leaf(uniform_init(rng, d, d, d), true);
  p.b1 = Var::leaf(Tensor::zeros({1, d}), true);
  p.w2 = Var::leaf(uniform_init(rng, d, d, d), true);
  p.b2 = Var::leaf(Tensor::zeros({1, d}), true);
  Tensor u = Tensor::zeros({1, d});
  for (std::size_t i = 0; i < d; ++i) u[i] = rng.gaussian(0.0, 0.02);
  p.u = Var::leaf(std::move(u), true);
  p.read = Var::leaf(uniform_init(rng, d, d, d), true);
  return p;
}

std::vector<Var> AdapterParams::params() const {
  return {w1, b1, w2, b2, u, read};
}

ProjectorParams ProjectorParams::init(const EncoderDims& dims, Rng& rng) {
  const std::size_t d = static_cast<std::size_t>(dims.d_model);
  const std::size_t h = static_cast<std::size_t>(dims.d_hidden);
  const std::size_t o = static_cast<std::size_t>(dims.d_proj);
  ProjectorParams p;
  p.w1 = Var::leaf(uniform_init(rng, d, h, d), true);
  p.b1 = Var::leaf(Tensor::zeros({1, h}), true);
  p.w2 = Var::leaf(uniform_init(rng, h, o, h), true);
  p.b2 = Var::leaf(Tensor::zeros({1, o}), true);
  return p;
}

std::vector<Var> ProjectorParams::params() const { return {w1, b1, w2, b2}; }

TokenSequence backbone_forward(const BackboneParams& p, const EncoderDims& dims,
                               const std::vector<std::vector<double>>& views,
                               int instruction_id) {
  if (static_cast<int>(views.size()) != dims.v_views) {
    throw ShapeError("backbone_forward: got " + std::to_string(views.size()) +
                     " views, configured for " + std::to_string(dims.v_views));
  }
  if (instruction_id < 0 || instruction_id >= dims.n_instructions) {
    throw ValueError("backbone_forward: instruction id " +
                     std::to_string(instruction_id) + " out of range");
  }
  TokenSequence seq;
  std::vector<Var> rows;
  for (int v = 0; v < dims.v_views; ++v) {
    if (static_cast<int>(views[v].size()) != dims.raw_dim) {
      throw ShapeError("backbone_forward: view " + std::to_string(v) + " has " +
                       std::to_string(views[v].size()) + " dims, expected " +
                       std::to_string(dims.raw_dim));
    }
    Var x = Var::constant(
        Tensor({static_cast<std::size_t>(dims.raw_dim), 1}, views[v]));
    Var tok = tanh(add(matmul(p.view_w[v], x), p.view_b[v]));
    rows.push_back(reshape(tok, {static_cast<std::size_t>(dims.n_tok),
                                 static_cast<std::size_t>(dims.d_model)}));
    for (int t = 0; t < dims.n_tok; ++t) seq.tags.push_back({TokenKind::View, v});
  }
  rows.push_back(gather_rows(p.instr_table,
                             {static_cast<std::size_t>(instruction_id)}));
  seq.tags.push_back({TokenKind::Instruction, -1});
  seq.tokens = concat_rows(rows);
  return seq;
}

namespace {
Var adapter_mlp(const AdapterParams& p, const Var& x) {
  Var hidden = tanh(add_rowvec(matmul(x, p.w1), p.b1));
  return add(x, add_rowvec(matmul(hidden, p.w2), p.b2));
}
}  // namespace

std::pair<TokenSequence, Var> adapter_forward(const AdapterParams& p,
                                              const TokenSequence& seq) {
  for (const auto& tag : seq.tags) {
    if (tag.kind == TokenKind::Summarization) {
      throw ValueError("adapter_forward: sequence already has a summarization token");
    }
  }
  const std::size_t n = seq.tokens.value().rows();
  if (n != seq.tags.size()) {
    throw ShapeError("adapter_forward: " + std::to_string(n) + " rows vs " +
                     std::to_string(seq.tags.size()) + " tags");
  }
  Var full = concat_rows({seq.tokens, p.u});
  Var refined = adapter_mlp(p, full);
  TokenSequence h;
  h.tokens = slice_rows(refined, 0, n);
  h.tags = seq.tags;
  // The summarization output reads the refined content rows; without this the
  // per-row map would leave w independent of the observation.
  Var w = add(slice_rows(refined, n, n + 1),
              matmul(mean_rows(h.tokens), p.read));
  return {std::move(h), std::move(w)};
}

Var project(const ProjectorParams& p, const Var& w) {
  Var hidden = tanh(add_rowvec(matmul(w, p.w1), p.b1));
  return add_rowvec(matmul(hidden, p.w2), p.b2);
}

}  // namespace rscl
