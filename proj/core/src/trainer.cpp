#include "rscl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rscl/alignment.hpp"
#include "rscl/errors.hpp"
#include "rscl/policy.hpp"

namespace rscl {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kEvalCknnaK = 10;
constexpr int kEvalDumpWindow = 16;

enum class AugKind { ViewCutoff, TokenCutoff, FeatureCutoff, None };

AugKind aug_from_string(const std::string& s) {
  if (s == "view_cutoff") return AugKind::ViewCutoff;
  if (s == "token_cutoff") return AugKind::TokenCutoff;
  if (s == "feature_cutoff") return AugKind::FeatureCutoff;
  if (s == "none") return AugKind::None;
  throw ValueError("unknown augmentation '" + s + "'");
}

double effective_lambda(const TrainConfig& cfg, long step) {
  double lam = cfg.lambda0;
  if (cfg.lambda_schedule) lam *= lambda_schedule(step, cfg.max_steps);
  return lam;
}

TokenSequence apply_token_cutoff(const TokenSequence& seq, AugKind kind,
                                 const TrainConfig& cfg, Rng& rng) {
  switch (kind) {
    case AugKind::ViewCutoff:
      return view_cutoff(seq, cfg.v, rng).seq;
    case AugKind::TokenCutoff:
      return token_cutoff(seq, cfg.cutoff_p, rng);
    case AugKind::FeatureCutoff:
      return feature_cutoff(seq, cfg.cutoff_p, rng);
    case AugKind::None:
      return seq;
  }
  throw ValueError("unreachable augmentation kind");
}

// Embedding-level variant of the cutoffs: one row of z per sample, so the
// masks act on the d_proj features. View cutoff zeroes the selected view's
// contiguous feature slice; the other two kinds zero features independently.
Tensor z_stage_mask(AugKind kind, const TrainConfig& cfg, int batch,
                    int d_proj, Rng& rng) {
  Tensor mask = Tensor::full({static_cast<std::size_t>(batch),
                              static_cast<std::size_t>(d_proj)},
                             1.0);
  for (int i = 0; i < batch; ++i) {
    switch (kind) {
      case AugKind::ViewCutoff: {
        std::uint64_t v = rng.uniform_int(static_cast<std::uint64_t>(cfg.v));
        int lo = static_cast<int>(v) * d_proj / cfg.v;
        int hi = (static_cast<int>(v) + 1) * d_proj / cfg.v;
        for (int c = lo; c < hi; ++c)
          mask.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = 0.0;
        break;
      }
      case AugKind::TokenCutoff:
      case AugKind::FeatureCutoff:
        for (int c = 0; c < d_proj; ++c)
          if (rng.bernoulli(cfg.cutoff_p))
            mask.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = 0.0;
        break;
      case AugKind::None:
        break;
    }
  }
  return mask;
}

// Best-effort localization of a non-finite value: re-runs each item's
// forward in isolation (no taping) and reports the first one that throws.
int find_offending_item(const Model& model, const Batch& batch,
                        const std::vector<FlowSample>& flows) {
  NoGradGuard guard;
  for (int i = 0; i < batch.size(); ++i) {
    try {
      TokenSequence seq =
          backbone_forward(model.backbone, model.enc, batch.views[i],
                           batch.instruction[static_cast<std::size_t>(i)]);
      auto [h, w] = adapter_forward(model.adapter, seq);
      Tensor q = Tensor::row({batch.proprio_norm.at(i, 0),
                              batch.proprio_norm.at(i, 1),
                              batch.proprio_norm.at(i, 2)});
      (void)decoder_forward(model.decoder, model.dec, h.tokens,
                            flows[static_cast<std::size_t>(i)].a_s, q,
                            flows[static_cast<std::size_t>(i)].s);
      (void)project(model.projector, w);
    } catch (const NumericError&) {
      return i;
    }
  }
  return -1;
}

[[noreturn]] void rethrow_with_batch(const Model& model, const Batch& batch,
                                     const std::vector<FlowSample>& flows,
                                     long step, const char* what) {
  int item = find_offending_item(model, batch, flows);
  std::string msg = "train step " + std::to_string(step + 1) +
                    ": non-finite value (" + what + "); ";
  if (item >= 0) {
    msg += "batch item " + std::to_string(item) + " (trajectory " +
           std::to_string(batch.traj_index[static_cast<std::size_t>(item)]) +
           ", timestep " +
           std::to_string(batch.step_index[static_cast<std::size_t>(item)]) + ")";
  } else {
    msg += "no single batch item reproduces it in isolation";
  }
  throw NumericError(msg);
}

void write_metrics_line(std::ofstream& out, const StepMetrics& m) {
  ordered_json j;
  j["step"] = m.step;
  j["loss_fm"] = m.loss_fm;
  j["loss_rscl"] = m.loss_rscl;
  j["lambda"] = m.lambda;
  j["total"] = m.total;
  j["grad_norm"] = m.grad_norm;
  out << j.dump() << "\n";
  out.flush();
}

void write_eval_line(std::ofstream& out, const EvalRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["success_rate"] = r.success_rate;
  j["cknna_proprio"] = r.cknna_proprio;
  out << j.dump() << "\n";
  out.flush();
}

void check_resume_compatible(const CheckpointData& st, const TrainConfig& cfg) {
  const EncoderDims want = encoder_dims_from(cfg);
  const DecoderDims wantd = decoder_dims_from(cfg);
  const EncoderDims& e = st.model.enc;
  const DecoderDims& d = st.model.dec;
  if (e.v_views != want.v_views || e.n_tok != want.n_tok ||
      e.d_model != want.d_model || e.d_hidden != want.d_hidden ||
      e.d_proj != want.d_proj || d.hidden != wantd.hidden ||
      d.horizon != wantd.horizon)
    throw ValueError("resume: checkpoint dimensions do not match the config");
  if (st.freeze_backbone != cfg.freeze_backbone)
    throw ValueError("resume: freeze_backbone differs from the checkpoint");
  if (st.normalize_actions != cfg.normalize_actions)
    throw ValueError("resume: normalize_actions differs from the checkpoint");
  if (st.step > cfg.max_steps)
    throw ValueError("resume: checkpoint step " + std::to_string(st.step) +
                     " is beyond max_steps " + std::to_string(cfg.max_steps));
}

}  // namespace

Batch assemble_batch(const Dataset& ds, int batch_size, int horizon, Rng& rng,
                     bool normalize_actions) {
  if (ds.trajectories.empty()) throw ValueError("assemble_batch: empty dataset");
  if (batch_size < 1) throw ValueError("assemble_batch: batch_size must be >= 1");
  if (horizon < 1) throw ValueError("assemble_batch: horizon must be >= 1");

  Batch b;
  std::vector<double> proprio, next_action;
  for (int i = 0; i < batch_size; ++i) {
    std::size_t ti = rng.uniform_int(ds.trajectories.size());
    const Trajectory& traj = ds.trajectories[ti];
    std::size_t t = rng.uniform_int(traj.steps.size());
    const TrajStep& step = traj.steps[t];

    b.views.push_back(step.views);
    b.instruction.push_back(traj.task_id);
    b.traj_index.push_back(ti);
    b.step_index.push_back(t);

    auto qn = normalize_proprio(ds.stats, step.proprio);
    proprio.insert(proprio.end(), qn.begin(), qn.end());
    const auto& first = step.action;
    next_action.insert(next_action.end(), first.begin(), first.end());

    std::vector<double> raw, fm;
    raw.reserve(static_cast<std::size_t>(horizon) * env::kActionDim);
    fm.reserve(static_cast<std::size_t>(horizon) * env::kActionDim);
    for (int r = 0; r < horizon; ++r) {
      std::size_t idx = std::min(t + static_cast<std::size_t>(r),
                                 traj.steps.size() - 1);
      const auto& a = traj.steps[idx].action;
      for (int c = 0; c < env::kActionDim; ++c) {
        raw.push_back(a[static_cast<std::size_t>(c)]);
        double v = a[static_cast<std::size_t>(c)];
        if (normalize_actions)
          v = (v - ds.stats.action_mean[static_cast<std::size_t>(c)]) /
              ds.stats.action_std[static_cast<std::size_t>(c)];
        fm.push_back(v);
      }
    }
    b.chunks_raw.emplace_back(
        Shape{static_cast<std::size_t>(horizon), env::kActionDim}, std::move(raw));
    b.chunks_fm.emplace_back(
        Shape{static_cast<std::size_t>(horizon), env::kActionDim}, std::move(fm));
  }
  b.proprio_norm = Tensor({static_cast<std::size_t>(batch_size), env::kProprioDim},
                          std::move(proprio));
  b.next_action = Tensor({static_cast<std::size_t>(batch_size), env::kActionDim},
                         std::move(next_action));
  return b;
}

std::vector<FlowSample> draw_flow_samples(const Batch& batch, Rng& rng_noise) {
  std::vector<FlowSample> flows;
  flows.reserve(static_cast<std::size_t>(batch.size()));
  for (int i = 0; i < batch.size(); ++i) {
    double s = sample_timestep(rng_noise);
    const Tensor& chunk = batch.chunks_fm[static_cast<std::size_t>(i)];
    Tensor eps = rng_noise.gaussian_tensor(chunk.shape());
    flows.push_back(interpolate(chunk, eps, s));
  }
  return flows;
}

LossBundle build_losses(const Model& model, const TrainConfig& cfg,
                        const Batch& batch, const std::vector<FlowSample>& flows,
                        long step, Rng& rng_aug) {
  const int B = batch.size();
  if (B < 1) throw ValueError("build_losses: empty batch");
  if (flows.size() != static_cast<std::size_t>(B))
    throw ValueError("build_losses: flow sample count does not match batch");

  const double lam = effective_lambda(cfg, step);
  const bool do_rscl = lam != 0.0;
  const AugKind aug = aug_from_string(cfg.augmentation);
  const bool z_stage = cfg.cutoff_stage == "z";

  std::vector<Var> h_tokens;
  std::vector<Tensor> q_rows;
  std::vector<Var> w_clean;            // contrastive anchors, pre-projection
  std::vector<TokenSequence> contrast; // base sequences for the augmented pass
  h_tokens.reserve(static_cast<std::size_t>(B));
  q_rows.reserve(static_cast<std::size_t>(B));

  for (int i = 0; i < B; ++i) {
    TokenSequence seq =
        backbone_forward(model.backbone, model.enc, batch.views[static_cast<std::size_t>(i)],
                         batch.instruction[static_cast<std::size_t>(i)]);
    auto [h, w] = adapter_forward(model.adapter, seq);
    h_tokens.push_back(h.tokens);
    q_rows.push_back(Tensor::row({batch.proprio_norm.at(static_cast<std::size_t>(i), 0),
                                  batch.proprio_norm.at(static_cast<std::size_t>(i), 1),
                                  batch.proprio_norm.at(static_cast<std::size_t>(i), 2)}));
    if (!do_rscl) continue;
    if (cfg.rscl_to_backbone) {
      contrast.push_back(seq);
      w_clean.push_back(w);
    } else {
      // Same values, but the contrastive branch ends at the backbone output.
      TokenSequence cut{detach(seq.tokens), seq.tags};
      auto [h2, w2] = adapter_forward(model.adapter, cut);
      contrast.push_back(std::move(cut));
      w_clean.push_back(w2);
    }
  }

  LossBundle out;
  out.lambda = lam;
  out.loss_fm = fm_loss(model.decoder, model.dec, h_tokens, flows, q_rows);
  if (!do_rscl) {
    out.total = out.loss_fm;
    return out;
  }

  Var z = project(model.projector, concat_rows(w_clean));
  Var z_aug;
  if (z_stage) {
    if (aug == AugKind::None) {
      z_aug = z;
    } else {
      Tensor mask = z_stage_mask(aug, cfg, B, model.enc.d_proj, rng_aug);
      z_aug = mul(z, Var::constant(mask));
    }
  } else if (aug == AugKind::None) {
    z_aug = z;
  } else {
    std::vector<Var> w_aug;
    w_aug.reserve(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
      TokenSequence cut =
          apply_token_cutoff(contrast[static_cast<std::size_t>(i)], aug, cfg, rng_aug);
      auto [h2, w2] = adapter_forward(model.adapter, cut);
      w_aug.push_back(w2);
    }
    z_aug = project(model.projector, concat_rows(w_aug));
  }

  SupervisionInputs sup;
  sup.q_norm = batch.proprio_norm;
  sup.next_action = batch.next_action;
  sup.chunks = batch.chunks_raw;
  SupervisionKind kind = supervision_from_string(cfg.supervision);
  Tensor w = weights_for_target(sup, kind, cfg.beta, cfg.gamma);

  out.loss_rscl = rscl_loss(z, z_aug, w, cfg.tau);
  out.total = add(out.loss_fm, scale(out.loss_rscl, lam));
  return out;
}

double lr_at(const TrainConfig& cfg, long step) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  long total = cfg.max_steps - cfg.warmup_steps;
  if (total < 1) total = 1;
  long done = step - cfg.warmup_steps;
  if (done < 0) done = 0;
  constexpr double kPi = 3.14159265358979323846;
  return cfg.lr * 0.5 *
         (1.0 + std::cos(kPi * static_cast<double>(done) /
                         static_cast<double>(total)));
}

CheckpointData init_train_state(const TrainConfig& cfg, const Dataset& ds) {
  CheckpointData st;
  st.step = 0;
  Rng init_rng(Rng::derive_seed(cfg.train_seed, 0));
  st.model = Model::init(cfg, init_rng);
  for (const auto& g : st.model.trainable_groups())
    st.opt.push_back(AdamState::init(g.params, cfg.lr, cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps,
                                     cfg.weight_decay));
  st.rngs.batch = Rng(Rng::derive_seed(cfg.train_seed, 1));
  st.rngs.noise = Rng(Rng::derive_seed(cfg.train_seed, 2));
  st.rngs.aug = Rng(Rng::derive_seed(cfg.train_seed, 3));
  st.stats = ds.stats;
  st.normalize_actions = cfg.normalize_actions;
  st.freeze_backbone = cfg.freeze_backbone;
  return st;
}

StepMetrics train_step(CheckpointData& state, const TrainConfig& cfg,
                       const Dataset& ds) {
  const long i = state.step;
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, state.rngs.batch,
                               cfg.normalize_actions);
  std::vector<FlowSample> flows = draw_flow_samples(batch, state.rngs.noise);

  LossBundle losses;
  try {
    losses = build_losses(state.model, cfg, batch, flows, i, state.rngs.aug);
  } catch (const NumericError& e) {
    rethrow_with_batch(state.model, batch, flows, i, e.what());
  }

  auto params = state.model.all_trainable();
  zero_grads(params);
  try {
    backward(losses.total);
  } catch (const NumericError& e) {
    rethrow_with_batch(state.model, batch, flows, i, e.what());
  }

  double gn2 = 0.0;
  for (const Var& p : params) {
    const Tensor& g = p.grad();
    for (std::size_t k = 0; k < g.size(); ++k) gn2 += g[k] * g[k];
  }

  const double lr_now = lr_at(cfg, i);
  auto groups = state.model.trainable_groups();
  for (std::size_t g = 0; g < groups.size(); ++g)
    adam_step(state.opt[g], groups[g].params, lr_now);

  state.step = i + 1;
  StepMetrics m;
  m.step = state.step;
  m.loss_fm = losses.loss_fm.item();
  m.loss_rscl = losses.loss_rscl.defined() ? losses.loss_rscl.item() : 0.0;
  m.lambda = losses.lambda;
  m.total = losses.total.item();
  m.grad_norm = std::sqrt(gn2);
  return m;
}

EvalRecord run_eval_hook(const CheckpointData& state, const TrainConfig& cfg,
                         const Dataset& ds, long step) {
  env::ViewMaps maps(cfg.v, state.stats.data_seed);
  env::Policy policy = make_model_policy(state, cfg.k_steps);
  env::EvalResult er = env::evaluate_policy(
      policy, cfg.eval_episodes,
      Rng::derive_seed(cfg.eval_seed, static_cast<std::uint64_t>(step)), maps);
  EmbeddingDump dump = dump_embeddings(state, ds, kEvalDumpWindow, "", "");
  EvalRecord rec;
  rec.step = step;
  rec.success_rate = er.success_rate;
  // The neighborhood cannot exceed the harvested rows; tiny datasets still
  // get a (coarser) alignment reading instead of aborting the run.
  const long rows = static_cast<long>(dump.x.rows());
  const int k = static_cast<int>(std::min<long>(kEvalCknnaK, rows - 1));
  rec.cknna_proprio = k >= 1 ? cknna(dump.x, dump.q, k) : 0.0;
  return rec;
}

TrainResult train(const TrainConfig& cfg, const StepHook& on_step,
                  const EvalHook& on_eval) {
  cfg.validate();
  Dataset ds = read_dataset(cfg.dataset);
  if (ds.v_views != cfg.v)
    throw ValueError("train: dataset has " + std::to_string(ds.v_views) +
                     " views but the config expects " + std::to_string(cfg.v));

  const bool resuming = !cfg.resume.empty();
  CheckpointData state;
  if (resuming) {
    state = load_checkpoint(cfg.resume);
    check_resume_compatible(state, cfg);
  } else {
    state = init_train_state(cfg, ds);
  }

  std::filesystem::create_directories(cfg.checkpoint_dir);
  std::ofstream metrics(cfg.metrics,
                        resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open metrics file " + cfg.metrics);

  TrainResult res;
  while (state.step < cfg.max_steps) {
    StepMetrics m = train_step(state, cfg, ds);
    write_metrics_line(metrics, m);
    if (on_step) on_step(m);
    res.steps.push_back(m);

    if (cfg.eval_every > 0 && state.step % cfg.eval_every == 0) {
      EvalRecord rec = run_eval_hook(state, cfg, ds, state.step);
      write_eval_line(metrics, rec);
      if (on_eval) on_eval(rec);
      res.evals.push_back(rec);
    }
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      save_checkpoint(state, cfg.checkpoint_dir + "/ckpt_step" +
                                 std::to_string(state.step) + ".json");
    }
  }

  res.final_checkpoint = cfg.checkpoint_dir + "/ckpt_final.json";
  save_checkpoint(state, res.final_checkpoint);
  res.state = std::move(state);
  return res;
}

}  // namespace rscl
