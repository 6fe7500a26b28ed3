#pragma once

#include <string>
#include <vector>

#include "rscl/autodiff.hpp"
#include "rscl/encoder.hpp"
#include "rscl/rng.hpp"

namespace rscl {

// Pairwise Euclidean distances between rows; [B,d] -> [B,B].
Tensor pairwise_euclidean(const Tensor& x);

// Row-stochastic weights from arbitrary pairwise distances:
//   w_ij = exp(-d_ij / beta) / sum_k exp(-d_ik / beta)
Tensor weights_from_distances(const Tensor& d, double beta);

struct SoftWeightMatrix {
  Tensor w;  // [B,B], rows sum to 1, diagonal is each row's maximum
  double beta = 1.0;
};

// Weights from proprioceptive state distances. Same distance path as the
// proprio supervision target, by construction.
SoftWeightMatrix soft_weights(const Tensor& q, double beta);

// Soft dynamic time warping with squared-Euclidean cell cost and
// soft-min(a,b,c) = -gamma * log(exp(-a/g) + exp(-b/g) + exp(-c/g)).
// Not a metric: the self-distance is slightly negative for gamma > 0.
double soft_dtw(const Tensor& a, const Tensor& b, double gamma);

enum class SupervisionKind { ProprioState, NextAction, ActionSequenceDtw, OneHot };

SupervisionKind supervision_from_string(const std::string& s);
std::string to_string(SupervisionKind k);

struct SupervisionInputs {
  Tensor q_norm;               // [B, d_q]
  Tensor next_action;          // [B, d_a]
  std::vector<Tensor> chunks;  // B of [H, d_a], for the DTW target
};

// Pairwise distances under the chosen target. OneHot has no distance notion
// and is rejected here; its weights are the identity.
Tensor supervision_distances(const SupervisionInputs& in, SupervisionKind kind,
                             double gamma);

// Row-stochastic weights for the loss: identity for OneHot, soft weights of
// the target distances otherwise.
Tensor weights_for_target(const SupervisionInputs& in, SupervisionKind kind,
                          double beta, double gamma);

// ---- cutoff augmentations (before the adapter) ----------------------------

struct ViewCutoffResult {
  TokenSequence seq;
  int selected_view = -1;
};

// Zeroes every token row of one uniformly chosen view. Instruction (and any
// summarization) rows are never candidates.
ViewCutoffResult view_cutoff(const TokenSequence& seq, int v_views, Rng& rng);

// Zeroes each token row independently with probability p.
TokenSequence token_cutoff(const TokenSequence& seq, double p, Rng& rng);

// Zeroes each feature column (across all tokens) independently with
// probability p.
TokenSequence feature_cutoff(const TokenSequence& seq, double p, Rng& rng);

// ---- loss ------------------------------------------------------------------

// Weighted InfoNCE over cosine similarities, single direction, diagonal
// included:  L = -sum_ij w_ij * log softmax_j(sim(z_i, z~_j) / tau).
// w is treated as a constant; no gradient flows into the weights.
Var rscl_loss(const Var& z, const Var& z_aug, const Tensor& w, double tau);

// Cosine ramp from 1 at step 0 to 0 at max_steps.
double lambda_schedule(long step, long max_steps);

}  // namespace rscl
