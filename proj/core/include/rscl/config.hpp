#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rscl {

// Every knob of the training pipeline, with desk-scale defaults. Values come
// from (lowest to highest precedence) these defaults, a flat key=value file,
// then command-line overrides.
struct TrainConfig {
  std::string dataset;
  std::string metrics = "metrics.jsonl";
  std::string checkpoint_dir = "checkpoints";
  std::string resume;

  int n_traj = 200;

  int v = 2;
  int n_tok = 4;
  int d_model = 32;
  int d_hidden = 64;
  int d_proj = 16;
  int d_dec_hidden = 64;
  int horizon = 8;
  int k_steps = 16;

  double tau = 0.2;
  double beta = 1.0;
  double gamma = 10.0;
  double lambda0 = 1.0;
  bool lambda_schedule = true;
  std::string supervision = "proprio_state";
  std::string augmentation = "view_cutoff";
  double cutoff_p = 0.2;
  std::string cutoff_stage = "tokens";
  bool freeze_backbone = false;
  bool rscl_to_backbone = true;
  bool normalize_actions = true;

  int batch_size = 32;
  long max_steps = 3000;
  double lr = 1e-3;
  long warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  std::uint64_t data_seed = 1;
  std::uint64_t train_seed = 2;
  std::uint64_t eval_seed = 3;

  long checkpoint_every = 1000;
  long eval_every = 500;
  int eval_episodes = 100;

  void validate() const;  // throws ValueError on any out-of-range field
};

struct ConfigKey {
  std::string name;
  std::string doc;
  std::string (*get)(const TrainConfig&);
  void (*set)(TrainConfig&, const std::string&);
};

const std::vector<ConfigKey>& config_keys();

// Sets one key; throws ValueError for unknown keys or unparseable values.
void config_set(TrainConfig& cfg, const std::string& key, const std::string& value);

// Flat key=value lines, '#' starts a comment. Errors name the line and key.
TrainConfig parse_config_text(const std::string& text, const std::string& origin);
TrainConfig load_config_file(const std::string& path);

bool parse_bool(const std::string& s);  // true/false/on/off/1/0

}  // namespace rscl
