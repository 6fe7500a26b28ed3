#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rscl/alignment.hpp"
#include "rscl/checkpoint.hpp"
#include "rscl/config.hpp"
#include "rscl/dataset.hpp"
#include "rscl/env.hpp"
#include "rscl/errors.hpp"
#include "rscl/gradcheck.hpp"
#include "rscl/policy.hpp"
#include "rscl/trainer.hpp"
#include "rscl/util.hpp"

namespace {

using namespace rscl;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

TrainConfig config_from(const std::string& config_path) {
  if (config_path.empty()) return TrainConfig{};
  return load_config_file(config_path);
}

// ---- gen-data --------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 int n_override, long long seed_override) {
  TrainConfig cfg = config_from(config_path);
  if (n_override > 0) cfg.n_traj = n_override;
  if (seed_override >= 0) cfg.data_seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();
  Dataset ds = generate_dataset(cfg.n_traj, cfg.v, cfg.data_seed, cfg.horizon + 1);
  write_dataset(ds, out);
  std::cout << "wrote " << ds.trajectories.size() << " trajectories ("
            << ds.stats.redraws << " redraws) to " << out << "\n";
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const TrainConfig& cfg) {
  long every = cfg.max_steps >= 1000 ? 100 : (cfg.max_steps >= 100 ? 50 : 10);
  auto on_step = [&](const StepMetrics& m) {
    if (m.step % every == 0 || m.step == cfg.max_steps) {
      std::cout << "step " << m.step << "/" << cfg.max_steps
                << " fm=" << fmt(m.loss_fm) << " rscl=" << fmt(m.loss_rscl)
                << " lambda=" << fmt(m.lambda) << " total=" << fmt(m.total)
                << "\n";
    }
  };
  auto on_eval = [](const EvalRecord& r) {
    std::cout << "eval @" << r.step << " success_rate=" << fmt(r.success_rate)
              << " cknna_proprio=" << fmt(r.cknna_proprio) << "\n";
  };
  TrainResult res = train(cfg, on_step, on_eval);
  std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

// The scripted controller needs the true scene, so its rollout loop runs on
// states directly rather than through the observation-based policy interface.
env::EvalResult eval_expert(int n_episodes, std::uint64_t seed) {
  env::EvalResult out;
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    std::uint64_t ep_seed = Rng::derive_seed(seed, static_cast<std::uint64_t>(e));
    Rng rng(ep_seed);
    env::SceneState s = env::draw_start_state(rng);
    env::EpisodeRecord rec;
    rec.episode = e;
    rec.seed = ep_seed;
    int t = 0;
    for (; t < env::kMaxEpisodeSteps; ++t) {
      s = env_step(s, env::scripted_expert(s));
      if (env::task_success(s)) break;
    }
    rec.success = env::task_success(s);
    rec.steps = t < env::kMaxEpisodeSteps ? t + 1 : env::kMaxEpisodeSteps;
    double dx = s.object_x - s.target_x, dy = s.object_y - s.target_y;
    rec.final_dist = std::sqrt(dx * dx + dy * dy);
    successes += rec.success ? 1 : 0;
    out.episodes.push_back(rec);
  }
  out.success_rate = static_cast<double>(successes) / n_episodes;
  return out;
}

int cmd_eval(const std::string& checkpoint, bool expert, int episodes,
             long long seed, int k_steps, const std::string& out_path) {
  if (episodes <= 0) throw ValueError("eval: --episodes must be positive");
  if (!expert && checkpoint.empty())
    throw ValueError("eval: provide --checkpoint or --expert");
  std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : 3;

  std::string label;
  env::EvalResult res;
  if (expert) {
    label = "expert";
    res = eval_expert(episodes, s);
  } else {
    label = checkpoint;
    CheckpointData ck = load_checkpoint(checkpoint);
    env::ViewMaps maps(ck.model.enc.v_views, ck.stats.data_seed);
    env::Policy policy = make_model_policy(ck, k_steps);
    res = env::evaluate_policy(policy, episodes, s, maps);
  }

  int successes = 0;
  for (const auto& ep : res.episodes) successes += ep.success ? 1 : 0;
  std::string csv = "checkpoint,episodes,successes,success_rate\n" + label + "," +
                    std::to_string(episodes) + "," + std::to_string(successes) +
                    "," + fmt(res.success_rate) + "\n";
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    atomic_write_file(out_path, csv);
    std::cout << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

// ---- analyze ---------------------------------------------------------------

int cmd_analyze(const std::string& checkpoint, const std::string& dataset,
                int k, int window, const std::string& dump_path,
                const std::string& out_path) {
  CheckpointData ck = load_checkpoint(checkpoint);
  Dataset ds = read_dataset(dataset);
  EmbeddingDump dump = dump_embeddings(ck, ds, window, checkpoint, dataset);
  if (!dump_path.empty()) write_embedding_dump(dump, dump_path);

  double cka_v = linear_cka(dump.x, dump.q);
  double cknna_v = cknna(dump.x, dump.q, k);
  std::string csv = "checkpoint,metric,k,value\n" + checkpoint + ",cka,," +
                    fmt(cka_v) + "\n" + checkpoint + ",cknna," +
                    std::to_string(k) + "," + fmt(cknna_v) + "\n";
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    atomic_write_file(out_path, csv);
    std::cout << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------

Batch make_synthetic_batch(const TrainConfig& cfg, int batch, Rng& rng) {
  Batch b;
  std::vector<double> proprio, next_action;
  for (int i = 0; i < batch; ++i) {
    std::vector<std::vector<double>> views;
    for (int v = 0; v < cfg.v; ++v) {
      std::vector<double> raw(env::kRawViewDim);
      for (double& x : raw) x = rng.uniform(-1.0, 1.0);
      views.push_back(std::move(raw));
    }
    b.views.push_back(std::move(views));
    b.instruction.push_back(
        static_cast<int>(rng.uniform_int(env::kNumInstructions)));
    b.traj_index.push_back(static_cast<std::size_t>(i));
    b.step_index.push_back(0);
    for (int c = 0; c < env::kProprioDim; ++c) proprio.push_back(rng.gaussian());
    for (int c = 0; c < env::kActionDim; ++c) next_action.push_back(rng.gaussian());
    Tensor chunk = rng.gaussian_tensor(
        {static_cast<std::size_t>(cfg.horizon), env::kActionDim});
    b.chunks_raw.push_back(chunk);
    b.chunks_fm.push_back(chunk);
  }
  b.proprio_norm =
      Tensor({static_cast<std::size_t>(batch), env::kProprioDim}, std::move(proprio));
  b.next_action = Tensor({static_cast<std::size_t>(batch), env::kActionDim},
                         std::move(next_action));
  return b;
}

// Gradient correctness is dimension-independent, so the check runs on a
// reduced model where probing every coordinate stays under a second.
TrainConfig gradcheck_config() {
  TrainConfig cfg;
  cfg.v = 2;
  cfg.n_tok = 2;
  cfg.d_model = 6;
  cfg.d_hidden = 8;
  cfg.d_proj = 4;
  cfg.d_dec_hidden = 8;
  cfg.horizon = 3;
  cfg.max_steps = 100;
  return cfg;
}

int cmd_gradcheck(long long seed_arg, int batch) {
  if (batch < 1) throw ValueError("gradcheck: --batch must be >= 1");
  std::uint64_t seed = seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg) : 1;
  constexpr double kThreshold = 1e-4;

  TrainConfig base = gradcheck_config();
  Rng rng(Rng::derive_seed(seed, 100));
  Batch b = make_synthetic_batch(base, batch, rng);
  std::vector<FlowSample> flows = draw_flow_samples(b, rng);
  const Rng aug0(Rng::derive_seed(seed, 200));

  struct Check {
    const char* name;
    double err;
  };
  std::vector<Check> checks;

  auto run_check = [&](const char* name, const TrainConfig& cfg,
                       bool rscl_only) {
    Rng init(Rng::derive_seed(seed, 300));
    Model model = Model::init(cfg, init);
    auto f = [&]() {
      Rng aug = aug0;  // frozen augmentation draws per rebuild
      LossBundle l = build_losses(model, cfg, b, flows, 0, aug);
      return rscl_only ? l.loss_rscl : l.total;
    };
    double err = finite_diff_check(f, model.all_trainable());
    checks.push_back({name, err});
  };

  TrainConfig fm_only = base;
  fm_only.lambda0 = 0.0;
  run_check("fm", fm_only, false);
  run_check("rscl", base, true);
  run_check("joint", base, false);

  std::cout << "check,seed,batch,max_rel_err,status\n";
  bool ok = true;
  for (const Check& c : checks) {
    bool pass = c.err < kThreshold;
    ok = ok && pass;
    std::cout << c.name << "," << seed << "," << batch << "," << fmt(c.err)
              << "," << (pass ? "ok" : "FAIL") << "\n";
  }
  return ok ? kExitOk : kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale robot-state-aware contrastive pretraining pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate an expert dataset");
  std::string gen_config, gen_out;
  int gen_n = 0;
  long long gen_seed = -1;
  gen->add_option("--config", gen_config, "config file");
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--n", gen_n, "trajectory count override");
  gen->add_option("--seed", gen_seed, "data seed override");

  // train
  auto* tr = app.add_subcommand("train", "Train the model");
  std::string train_config;
  tr->add_option("--config", train_config, "config file");
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_opts;
  for (const ConfigKey& key : config_keys())
    override_opts[key.name] =
        tr->add_option("--" + key.name, overrides[key.name], key.doc);

  // eval
  auto* ev = app.add_subcommand("eval", "Roll out a policy and report success");
  std::string eval_ckpt, eval_out;
  bool eval_expert_flag = false;
  int eval_episodes = 100;
  long long eval_seed = 3;
  int eval_k_steps = 16;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate");
  ev->add_flag("--expert", eval_expert_flag, "evaluate the scripted expert");
  ev->add_option("--episodes", eval_episodes, "episode count");
  ev->add_option("--seed", eval_seed, "evaluation seed");
  ev->add_option("--k-steps", eval_k_steps, "sampler integration steps");
  ev->add_option("--out", eval_out, "write the CSV here instead of stdout");

  // analyze
  auto* an = app.add_subcommand("analyze", "Embedding alignment metrics");
  std::string an_ckpt, an_dataset, an_dump, an_out;
  int an_k = 10, an_window = 16;
  an->add_option("--checkpoint", an_ckpt, "checkpoint")->required();
  an->add_option("--dataset", an_dataset, "dataset path")->required();
  an->add_option("--k", an_k, "neighborhood size");
  an->add_option("--window", an_window, "timestep stride");
  an->add_option("--dump", an_dump, "also write the embedding dump here");
  an->add_option("--out", an_out, "write the CSV here instead of stdout");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "Finite-difference check of both losses");
  long long gc_seed = 1;
  int gc_batch = 4;
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_option("--batch", gc_batch, "batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_out, gen_n, gen_seed);
    if (tr->parsed()) {
      TrainConfig cfg = config_from(train_config);
      for (const auto& [key, opt] : override_opts)
        if (opt->count() > 0) config_set(cfg, key, overrides[key]);
      cfg.validate();
      if (cfg.dataset.empty())
        throw ValueError("train: no dataset configured (set dataset=...)");
      return cmd_train(cfg);
    }
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_expert_flag, eval_episodes, eval_seed,
                      eval_k_steps, eval_out);
    if (an->parsed())
      return cmd_analyze(an_ckpt, an_dataset, an_k, an_window, an_dump, an_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_batch);
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
