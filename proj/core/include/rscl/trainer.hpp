#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rscl/checkpoint.hpp"
#include "rscl/config.hpp"
#include "rscl/contrastive.hpp"
#include "rscl/dataset.hpp"
#include "rscl/flow.hpp"

namespace rscl {

// One training batch: B uniformly sampled (trajectory, timestep) pairs with
// H-step action chunks (end-padded past the trajectory tail). Proprio is
// normalized; action chunks are kept both raw (supervision distances) and in
// the representation the decoder trains on.
struct Batch {
  std::vector<std::vector<std::vector<double>>> views;  // B x V x raw
  std::vector<int> instruction;                         // B
  Tensor proprio_norm;                                  // [B, d_q]
  Tensor next_action;                                   // [B, d_a], raw
  std::vector<Tensor> chunks_raw;                       // B of [H, d_a]
  std::vector<Tensor> chunks_fm;                        // decoder-space chunks
  std::vector<std::size_t> traj_index;                  // provenance
  std::vector<std::size_t> step_index;
  int size() const { return static_cast<int>(views.size()); }
};

Batch assemble_batch(const Dataset& ds, int batch_size, int horizon, Rng& rng,
                     bool normalize_actions);

// Per-item flow-matching randomness, drawn from the noise stream in batch
// order (timestep first, then the noise tensor).
std::vector<FlowSample> draw_flow_samples(const Batch& batch, Rng& rng_noise);

struct LossBundle {
  Var loss_fm;
  Var loss_rscl;  // left undefined when lambda is exactly 0 (path skipped)
  Var total;
  double lambda = 0.0;
};

// Shared by training and the gradient-check harness: clean encode for the
// decoder conditioning, contrastive clean + augmented passes, soft weights
// from the configured target, and the joint objective.
LossBundle build_losses(const Model& model, const TrainConfig& cfg,
                        const Batch& batch, const std::vector<FlowSample>& flows,
                        long step, Rng& rng_aug);

struct StepMetrics {
  long step = 0;  // 1-based, the number of completed steps after this one
  double loss_fm = 0.0;
  double loss_rscl = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct EvalRecord {
  long step = 0;
  double success_rate = 0.0;
  double cknna_proprio = 0.0;
};

// Fresh state: model init, one Adam state per trainable group, and the three
// rng streams, all derived from train_seed.
CheckpointData init_train_state(const TrainConfig& cfg, const Dataset& ds);

// One optimizer step; advances state.step. Throws NumericError with the
// offending batch item's provenance when a forward/backward value diverges.
StepMetrics train_step(CheckpointData& state, const TrainConfig& cfg,
                       const Dataset& ds);

// Warmup then cosine decay to zero; step is 0-based.
double lr_at(const TrainConfig& cfg, long step);

// 100-episode rollout success + CKNNA(adapter embeddings, proprio).
EvalRecord run_eval_hook(const CheckpointData& state, const TrainConfig& cfg,
                         const Dataset& ds, long step);

struct TrainResult {
  CheckpointData state;
  std::string final_checkpoint;
  std::vector<StepMetrics> steps;
  std::vector<EvalRecord> evals;
};

using StepHook = std::function<void(const StepMetrics&)>;
using EvalHook = std::function<void(const EvalRecord&)>;

// Full loop: metrics JSON-lines, periodic eval + checkpoints, final
// checkpoint. Resuming appends to the metrics file and continues the run
// bit-exactly.
TrainResult train(const TrainConfig& cfg, const StepHook& on_step = {},
                  const EvalHook& on_eval = {});

}  // namespace rscl
