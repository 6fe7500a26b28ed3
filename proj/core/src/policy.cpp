#include "rscl/policy.hpp"

#include "rscl/dataset.hpp"
#include "rscl/errors.hpp"

namespace rscl {

env::Policy make_model_policy(const CheckpointData& ck, int k_steps) {
  if (k_steps <= 0) throw ValueError("policy: k_steps must be positive");
  Model model = ck.model;  // shares parameter storage
  DatasetStats stats = ck.stats;
  bool denorm = ck.normalize_actions;

  return [model, stats, denorm, k_steps](const env::Observation& obs,
                                         Rng& rng) {
    NoGradGuard guard;
    auto qn = normalize_proprio(stats, obs.proprio);
    Tensor q = Tensor::row({qn[0], qn[1], qn[2]});

    TokenSequence seq =
        backbone_forward(model.backbone, model.enc, obs.views, obs.instruction_id);
    auto [h, w] = adapter_forward(model.adapter, seq);

    Tensor chunk = sample_actions(model.decoder, model.dec, h.tokens, q,
                                  k_steps, rng);
    std::vector<env::Action> actions(static_cast<std::size_t>(model.dec.horizon));
    for (int t = 0; t < model.dec.horizon; ++t) {
      for (int a = 0; a < model.dec.d_a; ++a) {
        double v = chunk.at(static_cast<std::size_t>(t), static_cast<std::size_t>(a));
        if (denorm) v = v * stats.action_std[static_cast<std::size_t>(a)] +
                        stats.action_mean[static_cast<std::size_t>(a)];
        actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)] = v;
      }
    }
    return actions;
  };
}

}  // namespace rscl
