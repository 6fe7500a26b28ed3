#include "rscl/contrastive.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "rscl/errors.hpp"

namespace rscl {

Tensor pairwise_euclidean(const Tensor& x) {
  require_rank2(x, "pairwise_euclidean");
  require_finite(x, "pairwise_euclidean");
  const std::size_t b = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({b, b});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x.at(i, k) - x.at(j, k);
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      out.at(i, j) = dist;
      out.at(j, i) = dist;
    }
  }
  return out;
}

Tensor weights_from_distances(const Tensor& d, double beta) {
  require_rank2(d, "weights_from_distances");
  if (d.rows() != d.cols()) {
    throw ShapeError("weights_from_distances: expected square matrix, got " +
                     shape_str(d.shape()));
  }
  if (!(beta > 0.0)) throw ValueError("weights_from_distances: beta must be positive");
  require_finite(d, "weights_from_distances");
  const std::size_t b = d.rows();
  Tensor w = Tensor::zeros({b, b});
  for (std::size_t i = 0; i < b; ++i) {
    // Max-shifted softmax of -d/beta.
    double lo = d.at(i, 0);
    for (std::size_t j = 1; j < b; ++j) lo = std::min(lo, d.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      w.at(i, j) = std::exp(-(d.at(i, j) - lo) / beta);
      sum += w.at(i, j);
    }
    for (std::size_t j = 0; j < b; ++j) w.at(i, j) /= sum;
  }
  return w;
}

SoftWeightMatrix soft_weights(const Tensor& q, double beta) {
  SoftWeightMatrix out;
  out.beta = beta;
  out.w = weights_from_distances(pairwise_euclidean(q), beta);
  return out;
}

double soft_dtw(const Tensor& a, const Tensor& b, double gamma) {
  require_rank2(a, "soft_dtw");
  require_rank2(b, "soft_dtw");
  if (a.cols() != b.cols()) {
    throw ShapeError("soft_dtw: feature dims disagree, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  if (!(gamma > 0.0)) throw ValueError("soft_dtw: gamma must be positive");
  require_finite(a, "soft_dtw");
  require_finite(b, "soft_dtw");
  const std::size_t ta = a.rows(), tb = b.rows(), d = a.cols();

  const auto cell = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = a.at(i, k) - b.at(j, k);
      s += diff * diff;
    }
    return s;
  };
  // Min-shifted soft-min keeps gamma -> 0 exact instead of underflowing.
  const auto softmin3 = [gamma](double x, double y, double z) {
    const double m = std::min(x, std::min(y, z));
    const double s = std::exp(-(x - m) / gamma) + std::exp(-(y - m) / gamma) +
                     std::exp(-(z - m) / gamma);
    return m - gamma * std::log(s);
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(tb + 1, inf), cur(tb + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= ta; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= tb; ++j) {
      const double c = cell(i - 1, j - 1);
      if (i == 1 && j == 1) {
        cur[j] = c;
      } else {
        cur[j] = c + softmin3(prev[j], cur[j - 1], prev[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[tb];
}

SupervisionKind supervision_from_string(const std::string& s) {
  if (s == "proprio_state") return SupervisionKind::ProprioState;
  if (s == "next_action") return SupervisionKind::NextAction;
  if (s == "action_sequence_dtw") return SupervisionKind::ActionSequenceDtw;
  if (s == "one_hot") return SupervisionKind::OneHot;
  throw ValueError("unknown supervision target: " + s);
}

std::string to_string(SupervisionKind k) {
  switch (k) {
    case SupervisionKind::ProprioState: return "proprio_state";
    case SupervisionKind::NextAction: return "next_action";
    case SupervisionKind::ActionSequenceDtw: return "action_sequence_dtw";
    case SupervisionKind::OneHot: return "one_hot";
  }
  throw ValueError("unknown supervision kind");
}

Tensor supervision_distances(const SupervisionInputs& in, SupervisionKind kind,
                             double gamma) {
  switch (kind) {
    case SupervisionKind::ProprioState:
      return pairwise_euclidean(in.q_norm);
    case SupervisionKind::NextAction:
      return pairwise_euclidean(in.next_action);
    case SupervisionKind::ActionSequenceDtw: {
      const std::size_t b = in.chunks.size();
      if (b == 0) throw ValueError("supervision_distances: no action chunks");
      Tensor d = Tensor::zeros({b, b});
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          // soft-DTW is not symmetric-free of its diagonal: compute all pairs.
          d.at(i, j) = soft_dtw(in.chunks[i], in.chunks[j], gamma);
        }
      }
      return d;
    }
    case SupervisionKind::OneHot:
      throw ValueError("supervision_distances: one_hot has no distance matrix");
  }
  throw ValueError("supervision_distances: unknown kind");
}

Tensor weights_for_target(const SupervisionInputs& in, SupervisionKind kind,
                          double beta, double gamma) {
  if (kind == SupervisionKind::OneHot) {
    const std::size_t b = in.q_norm.rows();
    Tensor w = Tensor::zeros({b, b});
    for (std::size_t i = 0; i < b; ++i) w.at(i, i) = 1.0;
    return w;
  }
  return weights_from_distances(supervision_distances(in, kind, gamma), beta);
}

namespace {
TokenSequence apply_row_mask(const TokenSequence& seq,
                             const std::vector<double>& row_mask) {
  const Tensor& t = seq.tokens.value();
  Tensor mask = Tensor::zeros(t.shape());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) mask.at(i, j) = row_mask[i];
  }
  TokenSequence out;
  out.tokens = mul(seq.tokens, Var::constant(std::move(mask)));
  out.tags = seq.tags;
  return out;
}
}  // namespace

ViewCutoffResult view_cutoff(const TokenSequence& seq, int v_views, Rng& rng) {
  if (v_views < 2) {
    throw ValueError("view_cutoff: needs at least 2 views so one survives, got " +
                     std::to_string(v_views));
  }
  for (const auto& tag : seq.tags) {
    if (tag.kind == TokenKind::View && tag.view >= v_views) {
      throw ValueError("view_cutoff: sequence has view " + std::to_string(tag.view) +
                       " beyond configured " + std::to_string(v_views));
    }
  }
  const int selected = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(v_views)));
  std::vector<double> row_mask(seq.tags.size(), 1.0);
  bool found = false;
  for (std::size_t i = 0; i < seq.tags.size(); ++i) {
    if (seq.tags[i].kind == TokenKind::View && seq.tags[i].view == selected) {
      row_mask[i] = 0.0;
      found = true;
    }
  }
  if (!found) {
    throw ValueError("view_cutoff: no tokens tagged for view " +
                     std::to_string(selected));
  }
  ViewCutoffResult out;
  out.seq = apply_row_mask(seq, row_mask);
  out.selected_view = selected;
  return out;
}

TokenSequence token_cutoff(const TokenSequence& seq, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ValueError("token_cutoff: p outside [0,1]");
  std::vector<double> row_mask(seq.tags.size(), 1.0);
  for (std::size_t i = 0; i < seq.tags.size(); ++i) {
    if (rng.bernoulli(p)) row_mask[i] = 0.0;
  }
  return apply_row_mask(seq, row_mask);
}

TokenSequence feature_cutoff(const TokenSequence& seq, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ValueError("feature_cutoff: p outside [0,1]");
  const Tensor& t = seq.tokens.value();
  std::vector<double> col_mask(t.cols(), 1.0);
  for (std::size_t j = 0; j < t.cols(); ++j) {
    if (rng.bernoulli(p)) col_mask[j] = 0.0;
  }
  Tensor mask = Tensor::zeros(t.shape());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) mask.at(i, j) = col_mask[j];
  }
  TokenSequence out;
  out.tokens = mul(seq.tokens, Var::constant(std::move(mask)));
  out.tags = seq.tags;
  return out;
}

Var rscl_loss(const Var& z, const Var& z_aug, const Tensor& w, double tau) {
  if (!(tau > 0.0)) throw ValueError("rscl_loss: tau must be positive");
  const Tensor& Z = z.value();
  const Tensor& Za = z_aug.value();
  require_rank2(Z, "rscl_loss");
  require_same_shape(Z, Za, "rscl_loss");
  const std::size_t b = Z.rows();
  if (w.shape() != Shape{b, b}) {
    throw ShapeError("rscl_loss: weight shape " + shape_str(w.shape()) +
                     " for batch " + std::to_string(b));
  }
  for (std::size_t i = 0; i < b; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (w.at(i, j) < 0.0) throw ValueError("rscl_loss: negative weight");
      rs += w.at(i, j);
    }
    if (std::fabs(rs - 1.0) > 1e-6) {
      throw ValueError("rscl_loss: weight row " + std::to_string(i) +
                       " sums to " + std::to_string(rs));
    }
  }
  Var sims = matmul(l2_normalize_rows(z), transpose(l2_normalize_rows(z_aug)));
  Var logits = scale(sims, 1.0 / tau);
  Var logp = row_log_softmax(logits);
  return scale(sum(mul(logp, Var::constant(w))), -1.0);
}

double lambda_schedule(long step, long max_steps) {
  if (max_steps < 1) throw ValueError("lambda_schedule: max_steps must be >= 1");
  if (step < 0) throw ValueError("lambda_schedule: negative step");
  if (step > max_steps) {
    throw ValueError("lambda_schedule: step " + std::to_string(step) +
                     " beyond max_steps " + std::to_string(max_steps));
  }
  return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                               static_cast<double>(max_steps)));
}

}  // namespace rscl
