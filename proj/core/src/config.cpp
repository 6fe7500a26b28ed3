#include "rscl/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "rscl/errors.hpp"
#include "rscl/util.hpp"

namespace rscl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ValueError("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ValueError("trailing characters in number: '" + s + "'");
  if (!std::isfinite(v)) throw ValueError("non-finite number: '" + s + "'");
  return v;
}

long to_long(const std::string& s) {
  std::size_t pos = 0;
  long v;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw ValueError("not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw ValueError("trailing characters in integer: '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end) {
    throw ValueError("not an unsigned integer: '" + s + "'");
  }
  return v;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw ValueError("not a boolean: '" + s + "'");
}

#define STR_KEY(field, docstr)                                              \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) { return c.field; },                   \
            [](TrainConfig& c, const std::string& v) { c.field = v; }}
#define INT_KEY(field, docstr)                                              \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) { return std::to_string(c.field); },   \
            [](TrainConfig& c, const std::string& v) {                      \
              c.field = static_cast<int>(to_long(v));                       \
            }}
#define LONG_KEY(field, docstr)                                             \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) { return std::to_string(c.field); },   \
            [](TrainConfig& c, const std::string& v) { c.field = to_long(v); }}
#define U64_KEY(field, docstr)                                              \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) { return std::to_string(c.field); },   \
            [](TrainConfig& c, const std::string& v) { c.field = to_u64(v); }}
#define DBL_KEY(field, docstr)                                              \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) { return fmt_double(c.field); },       \
            [](TrainConfig& c, const std::string& v) { c.field = to_double(v); }}
#define BOOL_KEY(field, docstr)                                             \
  ConfigKey{#field, docstr,                                                 \
            [](const TrainConfig& c) {                                      \
              return std::string(c.field ? "on" : "off");                   \
            },                                                              \
            [](TrainConfig& c, const std::string& v) { c.field = parse_bool(v); }}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      STR_KEY(dataset, "path to the trajectory JSONL (stats sidecar alongside)"),
      STR_KEY(metrics, "output path for the per-step JSONL metrics log"),
      STR_KEY(checkpoint_dir, "directory for checkpoints"),
      STR_KEY(resume, "checkpoint to resume from (empty = fresh start)"),
      INT_KEY(n_traj, "trajectories to generate when --n is not given"),
      INT_KEY(v, "number of camera views (>= 2)"),
      INT_KEY(n_tok, "tokens per view"),
      INT_KEY(d_model, "token width"),
      INT_KEY(d_hidden, "projector hidden width"),
      INT_KEY(d_proj, "projection (z) width"),
      INT_KEY(d_dec_hidden, "decoder hidden width"),
      INT_KEY(horizon, "action chunk length H"),
      INT_KEY(k_steps, "Euler integration steps at sampling time"),
      DBL_KEY(tau, "contrastive temperature"),
      DBL_KEY(beta, "soft-weight distance temperature"),
      DBL_KEY(gamma, "soft-DTW smoothing"),
      DBL_KEY(lambda0, "contrastive weight at step 0 (0 disables the loss)"),
      BOOL_KEY(lambda_schedule, "cosine-decay lambda to 0 over max_steps"),
      STR_KEY(supervision,
              "proprio_state | next_action | action_sequence_dtw | one_hot"),
      STR_KEY(augmentation, "view_cutoff | token_cutoff | feature_cutoff | none"),
      DBL_KEY(cutoff_p, "drop probability for token/feature cutoff"),
      STR_KEY(cutoff_stage, "apply the cutoff to 'tokens' or to 'z'"),
      BOOL_KEY(freeze_backbone, "exclude backbone parameters from updates"),
      BOOL_KEY(rscl_to_backbone,
               "let the contrastive gradient reach the backbone"),
      BOOL_KEY(normalize_actions,
               "train the flow head on per-dim standardized actions"),
      INT_KEY(batch_size, "samples per step"),
      LONG_KEY(max_steps, "training steps"),
      DBL_KEY(lr, "peak learning rate (warmup then cosine decay)"),
      LONG_KEY(warmup_steps, "linear warmup steps"),
      DBL_KEY(adam_beta1, "Adam first-moment decay"),
      DBL_KEY(adam_beta2, "Adam second-moment decay"),
      DBL_KEY(adam_eps, "Adam denominator epsilon"),
      DBL_KEY(weight_decay, "decoupled weight decay (0 = off)"),
      U64_KEY(data_seed, "dataset generation seed (fixes the view maps)"),
      U64_KEY(train_seed, "parameter init and batch/noise/augmentation streams"),
      U64_KEY(eval_seed, "rollout evaluation seed"),
      LONG_KEY(checkpoint_every, "checkpoint period in steps (0 disables)"),
      LONG_KEY(eval_every, "rollout + alignment eval period in steps (0 disables)"),
      INT_KEY(eval_episodes, "episodes per evaluation hook"),
  };
  return keys;
}

#undef STR_KEY
#undef INT_KEY
#undef LONG_KEY
#undef U64_KEY
#undef DBL_KEY
#undef BOOL_KEY

void config_set(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      try {
        k.set(cfg, value);
      } catch (const ValueError& e) {
        throw ValueError("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw ValueError("config: unknown key '" + key + "'");
}

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError(origin + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ValueError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    try {
      config_set(cfg, key, value);
    } catch (const ValueError& e) {
      throw ValueError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config_file(const std::string& path) {
  return parse_config_text(read_file(path), path);
}

void TrainConfig::validate() const {
  const auto bad = [](const std::string& msg) { throw ValueError("config: " + msg); };
  if (v < 2) bad("v must be >= 2");
  if (n_tok < 1) bad("n_tok must be >= 1");
  if (d_model < 1 || d_hidden < 1 || d_proj < 1 || d_dec_hidden < 1) {
    bad("model widths must be >= 1");
  }
  if (horizon < 1) bad("horizon must be >= 1");
  if (k_steps < 1) bad("k_steps must be >= 1");
  if (!(tau > 0.0)) bad("tau must be positive");
  if (!(beta > 0.0)) bad("beta must be positive");
  if (!(gamma > 0.0)) bad("gamma must be positive");
  if (lambda0 < 0.0) bad("lambda0 must be >= 0");
  if (supervision != "proprio_state" && supervision != "next_action" &&
      supervision != "action_sequence_dtw" && supervision != "one_hot") {
    bad("supervision must be proprio_state | next_action | action_sequence_dtw | one_hot");
  }
  if (augmentation != "view_cutoff" && augmentation != "token_cutoff" &&
      augmentation != "feature_cutoff" && augmentation != "none") {
    bad("augmentation must be view_cutoff | token_cutoff | feature_cutoff | none");
  }
  if (cutoff_p < 0.0 || cutoff_p > 1.0) bad("cutoff_p outside [0,1]");
  if (cutoff_stage != "tokens" && cutoff_stage != "z") {
    bad("cutoff_stage must be 'tokens' or 'z'");
  }
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (max_steps < 0) bad("max_steps must be >= 0");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (warmup_steps < 0) bad("warmup_steps must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("adam_beta1 outside [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("adam_beta2 outside [0,1)");
  if (!(adam_eps > 0.0)) bad("adam_eps must be positive");
  if (weight_decay < 0.0) bad("weight_decay must be >= 0");
  if (checkpoint_every < 0) bad("checkpoint_every must be >= 0 (0 disables)");
  if (eval_every < 0) bad("eval_every must be >= 0 (0 disables)");
  if (eval_episodes < 1) bad("eval_episodes must be >= 1");
  if (n_traj < 1) bad("n_traj must be >= 1");
}

}  // namespace rscl
