#pragma once

#include <utility>
#include <vector>

#include "rscl/autodiff.hpp"
#include "rscl/rng.hpp"

namespace rscl {

enum class TokenKind { View, Instruction, Summarization };

struct TokenTag {
  TokenKind kind = TokenKind::View;
  int view = -1;  // meaningful for View tokens only
};

// A [N, d_model] token matrix with per-row provenance tags. Rows are laid
// out view 0 .. view V-1, then the instruction token, with the summarization
// token appended last by the adapter.
struct TokenSequence {
  Var tokens;
  std::vector<TokenTag> tags;
};

struct EncoderDims {
  int v_views = 2;
  int n_tok = 4;
  int d_model = 32;
  int d_hidden = 64;   // projector hidden width
  int d_proj = 16;
  int raw_dim = 16;
  int n_instructions = 2;
  int seq_len() const { return v_views * n_tok + 1; }  // without summarization
};

// Per-view tokenizer: raw view -> n_tok tokens through tanh(W x + b), plus a
// trainable instruction embedding row.
struct BackboneParams {
  std::vector<Var> view_w;  // [n_tok*d_model, raw_dim]
  std::vector<Var> view_b;  // [n_tok*d_model, 1]
  Var instr_table;          // [n_instructions, d_model]
  bool frozen = false;

  static BackboneParams init(const EncoderDims& dims, Rng& rng, bool frozen = false);
  std::vector<Var> params() const;
};

// Residual token-wise refiner plus the summarization token u. Every row runs
// the same 2-layer residual MLP; the summarization row additionally reads the
// mean of the refined content rows through `read`, so w can actually
// summarize the sequence (a per-row map alone would make w a constant of u,
// and the contrastive loss a constant function). With w2, b2 and read zeroed
// the adapter is exactly the identity, so w equals u at that point.
struct AdapterParams {
  Var w1, b1;  // [d_model, d_model], [1, d_model]
  Var w2, b2;
  Var u;       // [1, d_model]
  Var read;    // [d_model, d_model], summarization-row content read

  static AdapterParams init(const EncoderDims& dims, Rng& rng);
  std::vector<Var> params() const;
};

struct ProjectorParams {
  Var w1, b1;  // [d_model, d_hidden], [1, d_hidden]
  Var w2, b2;  // [d_hidden, d_proj], [1, d_proj]

  static ProjectorParams init(const EncoderDims& dims, Rng& rng);
  std::vector<Var> params() const;
};

// views: V vectors of raw_dim reals. Token order: view 0..V-1, instruction.
TokenSequence backbone_forward(const BackboneParams& p, const EncoderDims& dims,
                               const std::vector<std::vector<double>>& views,
                               int instruction_id);

// Appends u, refines all tokens, and splits the result: h keeps the content
// rows (never the summarization output), w is the refined u row.
std::pair<TokenSequence, Var> adapter_forward(const AdapterParams& p,
                                              const TokenSequence& seq);

Var project(const ProjectorParams& p, const Var& w);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight init.
Tensor uniform_init(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in);

}  // namespace rscl
