#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "rscl/config.hpp"
#include "rscl/errors.hpp"
#include "rscl/policy.hpp"
#include "rscl/trainer.hpp"
#include "rscl/util.hpp"

using namespace rscl;

namespace {

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.v = 2;
  cfg.n_tok = 2;
  cfg.d_model = 6;
  cfg.d_hidden = 8;
  cfg.d_proj = 4;
  cfg.d_dec_hidden = 8;
  cfg.horizon = 3;
  cfg.batch_size = 4;
  cfg.max_steps = 100;
  cfg.warmup_steps = 10;
  cfg.eval_episodes = 4;
  return cfg;
}

Dataset small_dataset() { return generate_dataset(6, 2, 77, 4); }

std::vector<double> flat_grads(const Model& m) {
  std::vector<double> out;
  for (const Var& v : m.all_trainable())
    for (double g : v.grad().vec()) out.push_back(g);
  return out;
}

std::vector<double> flat_values(const std::vector<Var>& vars) {
  std::vector<double> out;
  for (const Var& v : vars)
    for (double x : v.value().vec()) out.push_back(x);
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& stem)
      : path(std::filesystem::temp_directory_path() / stem) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("batch assembly: padding rule, normalization, and provenance") {
  Dataset ds = small_dataset();
  Rng rng(3);
  const int H = 3;
  for (int round = 0; round < 5; ++round) {
    Batch b = assemble_batch(ds, 8, H, rng, true);
    REQUIRE(b.size() == 8);
    for (int i = 0; i < 8; ++i) {
      const auto& traj = ds.trajectories[b.traj_index[i]];
      const std::size_t t = b.step_index[i];
      const std::size_t T = traj.steps.size();
      REQUIRE(t < T);

      // proprio is normalized with the dataset stats.
      auto qn = normalize_proprio(ds.stats, traj.steps[t].proprio);
      for (int c = 0; c < 3; ++c)
        CHECK(b.proprio_norm.at(i, c) == qn[static_cast<std::size_t>(c)]);

      // next_action is the raw action at the sampled step.
      for (int c = 0; c < 3; ++c)
        CHECK(b.next_action.at(i, c) == traj.steps[t].action[static_cast<std::size_t>(c)]);

      // chunks follow the end-padding rule index min(t + r, T - 1).
      for (int r = 0; r < H; ++r) {
        std::size_t src = std::min(t + static_cast<std::size_t>(r), T - 1);
        for (int c = 0; c < 3; ++c) {
          double raw = traj.steps[src].action[static_cast<std::size_t>(c)];
          CHECK(b.chunks_raw[i].at(r, c) == raw);
          double fm = (raw - ds.stats.action_mean[static_cast<std::size_t>(c)]) /
                      ds.stats.action_std[static_cast<std::size_t>(c)];
          CHECK(b.chunks_fm[i].at(r, c) == doctest::Approx(fm).epsilon(1e-12));
        }
      }
      CHECK(b.views[i].size() == 2);
    }
  }

  // Chunks at the very tail repeat the final action H times.
  bool saw_tail = false;
  Rng rng2(5);
  for (int round = 0; round < 50 && !saw_tail; ++round) {
    Batch b = assemble_batch(ds, 8, H, rng2, false);
    for (int i = 0; i < 8; ++i) {
      const auto& traj = ds.trajectories[b.traj_index[i]];
      if (b.step_index[i] + 1 != traj.steps.size()) continue;
      saw_tail = true;
      const auto& last = traj.steps.back().action;
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < 3; ++c)
          CHECK(b.chunks_raw[i].at(r, c) == last[static_cast<std::size_t>(c)]);
    }
  }
  CHECK(saw_tail);

  // Same rng state, same batch.
  Rng a(9), c(9);
  Batch b1 = assemble_batch(ds, 4, H, a, true);
  Batch b2 = assemble_batch(ds, 4, H, c, true);
  CHECK(b1.traj_index == b2.traj_index);
  CHECK(b1.step_index == b2.step_index);
  CHECK(b1.proprio_norm.vec() == b2.proprio_norm.vec());

  Dataset empty;
  CHECK_THROWS_AS(assemble_batch(empty, 4, H, a, true), ValueError);
}

TEST_CASE("learning-rate schedule: linear warmup then cosine decay to zero") {
  TrainConfig cfg = small_cfg();  // lr 1e-3, warmup 10, max 100
  CHECK(lr_at(cfg, 0) == doctest::Approx(cfg.lr * 0.1).epsilon(1e-12));
  CHECK(lr_at(cfg, 9) == doctest::Approx(cfg.lr).epsilon(1e-12));
  CHECK(lr_at(cfg, 55) == doctest::Approx(cfg.lr * 0.5).epsilon(1e-12));
  CHECK(lr_at(cfg, 100) == doctest::Approx(0.0).epsilon(1e-12));
  double prev = cfg.lr;
  for (long s = 10; s <= 100; ++s) {
    double v = lr_at(cfg, s);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("gradient additivity: total = fm + lambda * contrastive, per parameter") {
  TrainConfig cfg = small_cfg();
  Dataset ds = small_dataset();
  Rng mr(13);
  Model model = Model::init(cfg, mr);

  Rng br(17);
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, br, true);
  Rng nr(19);
  std::vector<FlowSample> flows = draw_flow_samples(batch, nr);
  const long step = 25;
  const Rng aug0(23);

  auto run = [&](int which) {  // 0 total, 1 fm, 2 rscl
    zero_grads(model.all_trainable());
    Rng aug = aug0;
    LossBundle bundle = build_losses(model, cfg, batch, flows, step, aug);
    if (which == 0) backward(bundle.total);
    if (which == 1) backward(bundle.loss_fm);
    if (which == 2) backward(bundle.loss_rscl);
    return std::make_pair(flat_grads(model), bundle.lambda);
  };

  auto [g_total, lam] = run(0);
  CHECK(lam > 0.0);
  CHECK(lam < 1.0);
  auto [g_fm, lam1] = run(1);
  auto [g_rscl, lam2] = run(2);
  REQUIRE(g_total.size() == g_fm.size());
  for (std::size_t i = 0; i < g_total.size(); ++i)
    CHECK(g_total[i] == doctest::Approx(g_fm[i] + lam * g_rscl[i]).epsilon(1e-9));
}

TEST_CASE("the contrastive loss never reaches the decoder") {
  TrainConfig cfg = small_cfg();
  Dataset ds = small_dataset();
  Rng mr(29);
  Model model = Model::init(cfg, mr);
  Rng br(31);
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, br, true);
  Rng nr(37);
  std::vector<FlowSample> flows = draw_flow_samples(batch, nr);

  zero_grads(model.all_trainable());
  Rng aug(41);
  LossBundle bundle = build_losses(model, cfg, batch, flows, 25, aug);
  backward(bundle.loss_rscl);
  for (const Var& v : model.decoder.params())
    for (double g : v.grad().vec()) CHECK(g == 0.0);
  // ... while the adapter and projector do learn from it.
  double ga = 0.0, gp = 0.0;
  for (const Var& v : model.adapter.params())
    for (double g : v.grad().vec()) ga += std::abs(g);
  for (const Var& v : model.projector.params())
    for (double g : v.grad().vec()) gp += std::abs(g);
  CHECK(ga > 0.0);
  CHECK(gp > 0.0);
}

TEST_CASE("backbone routing flags direct the contrastive gradient") {
  TrainConfig cfg = small_cfg();
  Dataset ds = small_dataset();

  // rscl_to_backbone = false: contrastive gradients stop at the adapter.
  cfg.rscl_to_backbone = false;
  Rng mr(43);
  Model model = Model::init(cfg, mr);
  Rng br(47);
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, br, true);
  Rng nr(53);
  std::vector<FlowSample> flows = draw_flow_samples(batch, nr);

  zero_grads(model.all_trainable());
  Rng aug(59);
  LossBundle bundle = build_losses(model, cfg, batch, flows, 25, aug);
  backward(bundle.loss_rscl);
  for (const Var& v : model.backbone.params())
    for (double g : v.grad().vec()) CHECK(g == 0.0);

  // ... but the flow-matching loss still trains the backbone.
  zero_grads(model.all_trainable());
  Rng aug2(59);
  LossBundle b2 = build_losses(model, cfg, batch, flows, 25, aug2);
  backward(b2.loss_fm);
  double gb = 0.0;
  for (const Var& v : model.backbone.params())
    for (double g : v.grad().vec()) gb += std::abs(g);
  CHECK(gb > 0.0);

  // Frozen backbone: only adapter (incl. u and read) and projector get
  // contrastive gradients; the backbone is not even a trainable leaf.
  TrainConfig fcfg = small_cfg();
  fcfg.freeze_backbone = true;
  Rng mr2(43);
  Model frozen = Model::init(fcfg, mr2);
  CHECK(frozen.trainable_groups().size() == 3);
  zero_grads(frozen.all_trainable());
  Rng aug3(61);
  LossBundle fb = build_losses(frozen, fcfg, batch, flows, 25, aug3);
  backward(fb.loss_rscl);
  double ga = 0.0;
  for (const Var& v : frozen.adapter.params())
    for (double g : v.grad().vec()) ga += std::abs(g);
  CHECK(ga > 0.0);
  for (const Var& v : frozen.decoder.params())
    for (double g : v.grad().vec()) CHECK(g == 0.0);
}

TEST_CASE("lambda zero skips the whole contrastive branch") {
  TrainConfig cfg = small_cfg();
  cfg.lambda0 = 0.0;
  Dataset ds = small_dataset();
  Rng mr(67);
  Model model = Model::init(cfg, mr);
  Rng br(71);
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, br, true);
  Rng nr(73);
  std::vector<FlowSample> flows = draw_flow_samples(batch, nr);

  Rng aug(79);
  auto before = aug.state();
  LossBundle bundle = build_losses(model, cfg, batch, flows, 10, aug);
  CHECK(aug.state() == before);       // no augmentation draws consumed
  CHECK(!bundle.loss_rscl.defined()); // the loss was never built
  CHECK(bundle.lambda == 0.0);
  CHECK(bundle.total.item() == bundle.loss_fm.item());
}

TEST_CASE("contrastive config knobs cannot leak into a lambda-zero run") {
  Dataset ds = small_dataset();
  TempDir tmp("rscl_test_lam0");
  write_dataset(ds, tmp.file("data.jsonl"));

  auto run = [&](const std::string& tag, const std::string& supervision,
                 const std::string& augmentation) {
    TrainConfig cfg = small_cfg();
    cfg.lambda0 = 0.0;
    cfg.supervision = supervision;
    cfg.augmentation = augmentation;
    cfg.dataset = tmp.file("data.jsonl");
    cfg.metrics = tmp.file(tag + ".jsonl");
    cfg.checkpoint_dir = tmp.file(tag + "_ckpt");
    cfg.max_steps = 12;
    cfg.eval_every = 0;
    cfg.checkpoint_every = 0;
    train(cfg);
    return read_file(cfg.metrics);
  };
  std::string a = run("a", "proprio_state", "view_cutoff");
  std::string b = run("b", "one_hot", "none");
  CHECK(a == b);
  CHECK(a.find("\"loss_rscl\":0.0") != std::string::npos);
}

TEST_CASE("train steps advance the counter and log 1-based steps") {
  TrainConfig cfg = small_cfg();
  cfg.max_steps = 5;
  Dataset ds = small_dataset();
  CheckpointData state = init_train_state(cfg, ds);
  CHECK(state.step == 0);
  StepMetrics m1 = train_step(state, cfg, ds);
  CHECK(m1.step == 1);
  CHECK(state.step == 1);
  CHECK(m1.lambda == 1.0);  // schedule evaluated at the pre-increment index 0
  CHECK(m1.grad_norm > 0.0);
  CHECK(std::isfinite(m1.total));
  StepMetrics m2 = train_step(state, cfg, ds);
  CHECK(m2.step == 2);
  CHECK(m2.lambda < 1.0);
  CHECK(m2.lambda >= 0.0);
}

TEST_CASE("freezing the backbone keeps its parameters bit-identical") {
  TrainConfig cfg = small_cfg();
  cfg.freeze_backbone = true;
  cfg.max_steps = 10;
  Dataset ds = small_dataset();
  CheckpointData state = init_train_state(cfg, ds);
  REQUIRE(state.opt.size() == 3);

  std::vector<double> backbone_before = flat_values(state.model.backbone.params());
  std::vector<double> adapter_before = flat_values(state.model.adapter.params());
  for (int i = 0; i < 3; ++i) train_step(state, cfg, ds);
  CHECK(flat_values(state.model.backbone.params()) == backbone_before);
  CHECK(flat_values(state.model.adapter.params()) != adapter_before);
}

TEST_CASE("full loop: metrics schema, lambda monotone, determinism, resume") {
  Dataset ds = small_dataset();
  TempDir tmp("rscl_test_loop");
  write_dataset(ds, tmp.file("data.jsonl"));

  TrainConfig cfg = small_cfg();
  cfg.dataset = tmp.file("data.jsonl");
  cfg.max_steps = 20;
  cfg.checkpoint_every = 10;
  cfg.eval_every = 10;
  cfg.metrics = tmp.file("run1.jsonl");
  cfg.checkpoint_dir = tmp.file("ck1");

  std::vector<double> lambdas;
  TrainResult r1 = train(cfg, [&](const StepMetrics& m) { lambdas.push_back(m.lambda); });
  CHECK(r1.steps.size() == 20);
  CHECK(r1.evals.size() == 2);
  CHECK(r1.state.step == 20);
  for (std::size_t i = 1; i < lambdas.size(); ++i) CHECK(lambdas[i] <= lambdas[i - 1]);

  std::string m1 = read_file(cfg.metrics);
  CHECK(m1.find("\"loss_fm\":") != std::string::npos);
  CHECK(m1.find("\"loss_rscl\":") != std::string::npos);
  CHECK(m1.find("\"lambda\":") != std::string::npos);
  CHECK(m1.find("\"grad_norm\":") != std::string::npos);
  CHECK(m1.find("\"success_rate\":") != std::string::npos);
  CHECK(m1.find("\"cknna_proprio\":") != std::string::npos);

  // Same config, fresh directories: byte-identical metrics and checkpoints.
  cfg.metrics = tmp.file("run2.jsonl");
  cfg.checkpoint_dir = tmp.file("ck2");
  train(cfg);
  CHECK(read_file(tmp.file("run2.jsonl")) == m1);
  CHECK(read_file(tmp.file("ck2/ckpt_final.json")) ==
        read_file(tmp.file("ck1/ckpt_final.json")));
  CHECK(read_file(tmp.file("ck2/ckpt_step10.json")) ==
        read_file(tmp.file("ck1/ckpt_step10.json")));

  // Resume from the midpoint reproduces the tail exactly.
  cfg.metrics = tmp.file("run3.jsonl");
  cfg.checkpoint_dir = tmp.file("ck3");
  cfg.resume = tmp.file("ck1/ckpt_step10.json");
  TrainResult r3 = train(cfg);
  CHECK(r3.state.step == 20);
  CHECK(read_file(tmp.file("ck3/ckpt_final.json")) ==
        read_file(tmp.file("ck1/ckpt_final.json")));

  // The resumed metrics file holds exactly the tail rows of the full run.
  std::string tail = read_file(tmp.file("run3.jsonl"));
  CHECK(m1.size() > tail.size());
  CHECK(m1.compare(m1.size() - tail.size(), tail.size(), tail) == 0);

  // Resume validation catches config drift.
  TrainConfig bad = cfg;
  bad.freeze_backbone = true;
  CHECK_THROWS_AS(train(bad), ValueError);
}

TEST_CASE("zero-step training writes only the final checkpoint") {
  Dataset ds = small_dataset();
  TempDir tmp("rscl_test_zero");
  write_dataset(ds, tmp.file("data.jsonl"));
  TrainConfig cfg = small_cfg();
  cfg.dataset = tmp.file("data.jsonl");
  cfg.max_steps = 0;
  cfg.metrics = tmp.file("m.jsonl");
  cfg.checkpoint_dir = tmp.file("ck");
  TrainResult r = train(cfg);
  CHECK(r.steps.empty());
  CHECK(read_file(tmp.file("m.jsonl")).empty());
  CHECK(std::filesystem::exists(tmp.file("ck/ckpt_final.json")));
  CheckpointData ck = load_checkpoint(tmp.file("ck/ckpt_final.json"));
  CHECK(ck.step == 0);
}

TEST_CASE("eval hook is deterministic and bounded") {
  TrainConfig cfg = small_cfg();
  Dataset ds = small_dataset();
  CheckpointData state = init_train_state(cfg, ds);
  EvalRecord a = run_eval_hook(state, cfg, ds, 7);
  EvalRecord b = run_eval_hook(state, cfg, ds, 7);
  CHECK(a.step == 7);
  CHECK(a.success_rate == b.success_rate);
  CHECK(a.cknna_proprio == b.cknna_proprio);
  CHECK(a.success_rate >= 0.0);
  CHECK(a.success_rate <= 1.0);
  CHECK(std::isfinite(a.cknna_proprio));
  // A different step keys a different episode stream.
  EvalRecord c = run_eval_hook(state, cfg, ds, 8);
  CHECK(c.step == 8);
}

TEST_CASE("model policies are deterministic and validate their arguments") {
  TrainConfig cfg = small_cfg();
  Dataset ds = small_dataset();
  CheckpointData state = init_train_state(cfg, ds);
  CHECK_THROWS_AS(make_model_policy(state, 0), ValueError);

  env::Policy pol = make_model_policy(state, 4);
  env::ViewMaps maps(2, ds.stats.data_seed);
  env::EvalResult r1 = env::evaluate_policy(pol, 3, 5, maps);
  env::EvalResult r2 = env::evaluate_policy(pol, 3, 5, maps);
  CHECK(r1.success_rate == r2.success_rate);
  REQUIRE(r1.episodes.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(r1.episodes[i].steps == r2.episodes[i].steps);
}

TEST_CASE("config parsing: precedence, unknown keys, and error locations") {
  TrainConfig defaults;
  CHECK(defaults.tau == 0.2);
  CHECK(defaults.beta == 1.0);
  CHECK(defaults.gamma == 10.0);
  CHECK(defaults.lambda0 == 1.0);
  CHECK(defaults.lambda_schedule);
  CHECK(defaults.batch_size == 32);
  CHECK(defaults.max_steps == 3000);
  CHECK(defaults.horizon == 8);
  CHECK(defaults.k_steps == 16);

  TrainConfig cfg = parse_config_text(
      "# comment line\n"
      "tau = 0.5\n"
      "\n"
      "supervision = next_action\n"
      "freeze_backbone = on\n",
      "inline");
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.supervision == "next_action");
  CHECK(cfg.freeze_backbone);
  CHECK(cfg.beta == 1.0);  // untouched default

  config_set(cfg, "tau", "0.7");  // override wins over the file value
  CHECK(cfg.tau == 0.7);

  CHECK_THROWS_AS(config_set(cfg, "no_such_key", "1"), ValueError);
  CHECK_THROWS_AS(config_set(cfg, "tau", "abc"), ValueError);

  try {
    parse_config_text("tau = 0.5\nbogus_key = 3\n", "myfile.cfg");
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    std::string msg = e.what();
    CHECK(msg.find("myfile.cfg:2") != std::string::npos);
    CHECK(msg.find("bogus_key") != std::string::npos);
  }
  try {
    parse_config_text("tau 0.5\n", "nofile");
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("nofile:1") != std::string::npos);
  }

  // Every documented key is gettable and settable with its own output.
  TrainConfig probe;
  for (const auto& key : config_keys()) {
    std::string v = key.get(probe);
    CHECK_NOTHROW(config_set(probe, key.name, v));
    CHECK(key.get(probe) == v);
    CHECK(!key.doc.empty());
  }

  TrainConfig bad;
  bad.tau = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = TrainConfig{};
  bad.v = 1;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = TrainConfig{};
  bad.supervision = "nope";
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = TrainConfig{};
  bad.cutoff_p = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  CHECK(parse_bool("on"));
  CHECK(!parse_bool("0"));
  CHECK_THROWS_AS(parse_bool("maybe"), ValueError);
}

TEST_CASE("z-stage cutoff masks the projected embedding itself") {
  TrainConfig cfg = small_cfg();
  cfg.cutoff_stage = "z";
  Dataset ds = small_dataset();
  Rng mr(83);
  Model model = Model::init(cfg, mr);
  Rng br(89);
  Batch batch = assemble_batch(ds, cfg.batch_size, cfg.horizon, br, true);
  Rng nr(97);
  std::vector<FlowSample> flows = draw_flow_samples(batch, nr);

  Rng aug(101);
  LossBundle bundle = build_losses(model, cfg, batch, flows, 25, aug);
  CHECK(bundle.loss_rscl.defined());
  CHECK(std::isfinite(bundle.loss_rscl.item()));
  // The masked variant differs from the clean pass ("none" augmentation).
  TrainConfig none = cfg;
  none.augmentation = "none";
  Rng aug2(101);
  LossBundle clean = build_losses(model, none, batch, flows, 25, aug2);
  CHECK(bundle.loss_rscl.item() != clean.loss_rscl.item());
}
