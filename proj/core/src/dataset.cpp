#include "rscl/dataset.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rscl/errors.hpp"
#include "rscl/util.hpp"

namespace rscl {

using json = nlohmann::ordered_json;

namespace {

// Success plus a short hold tail; nullopt-style empty steps on expert failure.
std::vector<TrajStep> roll_expert(const env::ViewMaps& maps, std::uint64_t traj_seed,
                                  int min_len, int* task_id_out) {
  Rng rng(traj_seed);
  env::SceneState s = env::draw_start_state(rng);
  *task_id_out = s.task_id;
  std::vector<TrajStep> steps;
  bool success = false;
  for (int t = 0; t < env::kMaxEpisodeSteps; ++t) {
    TrajStep st;
    st.views = maps.render(s, rng);
    st.proprio = env::proprio_of(s);
    st.action = env::scripted_expert(s);
    steps.push_back(std::move(st));
    s = env::env_step(s, steps.back().action);
    if (env::task_success(s)) {
      success = true;
      break;
    }
  }
  if (!success) return {};
  // Hold in place so short episodes still cover a full action chunk.
  while (static_cast<int>(steps.size()) < min_len) {
    TrajStep st;
    st.views = maps.render(s, rng);
    st.proprio = env::proprio_of(s);
    st.action = env::scripted_expert(s);
    steps.push_back(std::move(st));
    s = env::env_step(s, steps.back().action);
  }
  return steps;
}

void accumulate_stats(Dataset& ds) {
  auto& st = ds.stats;
  std::array<double, env::kProprioDim> qs{}, qs2{};
  std::array<double, env::kActionDim> as{}, as2{};
  std::size_t n = 0;
  for (const auto& tr : ds.trajectories) {
    for (const auto& step : tr.steps) {
      for (int d = 0; d < env::kProprioDim; ++d) {
        qs[d] += step.proprio[d];
        qs2[d] += step.proprio[d] * step.proprio[d];
      }
      for (int d = 0; d < env::kActionDim; ++d) {
        as[d] += step.action[d];
        as2[d] += step.action[d] * step.action[d];
      }
      ++n;
    }
  }
  const double dn = static_cast<double>(n);
  for (int d = 0; d < env::kProprioDim; ++d) {
    st.proprio_mean[d] = qs[d] / dn;
    const double var = qs2[d] / dn - st.proprio_mean[d] * st.proprio_mean[d];
    st.proprio_std[d] = std::sqrt(std::max(var, 0.0));
    if (st.proprio_std[d] < 1e-8) st.proprio_std[d] = 1e-8;
  }
  for (int d = 0; d < env::kActionDim; ++d) {
    st.action_mean[d] = as[d] / dn;
    const double var = as2[d] / dn - st.action_mean[d] * st.action_mean[d];
    st.action_std[d] = std::sqrt(std::max(var, 0.0));
    if (st.action_std[d] < 1e-8) st.action_std[d] = 1e-8;
  }
}

}  // namespace

Dataset generate_dataset(int n_traj, int v_views, std::uint64_t seed, int min_len) {
  if (n_traj <= 0) throw ValueError("generate_dataset: n_traj must be positive");
  env::ViewMaps maps(v_views, seed);
  Dataset ds;
  ds.v_views = v_views;
  ds.stats.data_seed = seed;
  ds.stats.n_trajectories = n_traj;
  int redraws = 0;
  for (int i = 0; i < n_traj; ++i) {
    std::uint64_t traj_seed = seed + static_cast<std::uint64_t>(i);
    int task_id = 0;
    std::vector<TrajStep> steps = roll_expert(maps, traj_seed, min_len, &task_id);
    while (steps.empty()) {
      ++redraws;
      traj_seed = Rng::derive_seed(seed, static_cast<std::uint64_t>(n_traj + redraws)) +
                  static_cast<std::uint64_t>(i);
      steps = roll_expert(maps, traj_seed, min_len, &task_id);
    }
    Trajectory tr;
    tr.seed = traj_seed;
    tr.task_id = task_id;
    tr.steps = std::move(steps);
    ds.trajectories.push_back(std::move(tr));
  }
  ds.stats.redraws = redraws;
  accumulate_stats(ds);
  return ds;
}

std::string stats_sidecar_path(const std::string& dataset_path) {
  return dataset_path + ".stats.json";
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ostringstream out;
  for (const auto& tr : ds.trajectories) {
    json views = json::array();
    json proprio = json::array();
    json actions = json::array();
    for (const auto& step : tr.steps) {
      views.push_back(step.views);
      proprio.push_back(step.proprio);
      actions.push_back(step.action);
    }
    json line;
    line["seed"] = tr.seed;
    line["task_id"] = tr.task_id;
    line["views"] = std::move(views);
    line["proprio"] = std::move(proprio);
    line["actions"] = std::move(actions);
    out << line.dump() << "\n";
  }
  atomic_write_file(path, out.str());

  json st;
  st["proprio_mean"] = ds.stats.proprio_mean;
  st["proprio_std"] = ds.stats.proprio_std;
  st["action_mean"] = ds.stats.action_mean;
  st["action_std"] = ds.stats.action_std;
  st["data_seed"] = ds.stats.data_seed;
  st["n_trajectories"] = ds.stats.n_trajectories;
  st["redraws"] = ds.stats.redraws;
  st["v_views"] = ds.v_views;
  atomic_write_file(stats_sidecar_path(path), st.dump(2) + "\n");
}

Dataset read_dataset(const std::string& path) {
  Dataset ds;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Trajectory tr;
    tr.seed = j.at("seed").get<std::uint64_t>();
    tr.task_id = j.at("task_id").get<int>();
    const auto& views = j.at("views");
    const auto& proprio = j.at("proprio");
    const auto& actions = j.at("actions");
    if (views.size() != proprio.size() || views.size() != actions.size()) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": step counts disagree across fields");
    }
    for (std::size_t t = 0; t < views.size(); ++t) {
      TrajStep step;
      step.views = views[t].get<std::vector<std::vector<double>>>();
      for (const auto& v : step.views) {
        if (static_cast<int>(v.size()) != env::kRawViewDim) {
          throw IoError(path + ":" + std::to_string(lineno) + ": view width " +
                        std::to_string(v.size()));
        }
      }
      step.proprio = proprio[t].get<std::array<double, env::kProprioDim>>();
      step.action = actions[t].get<std::array<double, env::kActionDim>>();
      tr.steps.push_back(std::move(step));
    }
    if (tr.steps.empty()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": empty trajectory");
    }
    ds.trajectories.push_back(std::move(tr));
  }
  if (ds.trajectories.empty()) throw IoError(path + ": no trajectories");

  const std::string sp = stats_sidecar_path(path);
  json st;
  try {
    st = json::parse(read_file(sp));
  } catch (const json::parse_error& e) {
    throw IoError(sp + ": " + e.what());
  }
  ds.stats.proprio_mean = st.at("proprio_mean").get<std::array<double, env::kProprioDim>>();
  ds.stats.proprio_std = st.at("proprio_std").get<std::array<double, env::kProprioDim>>();
  ds.stats.action_mean = st.at("action_mean").get<std::array<double, env::kActionDim>>();
  ds.stats.action_std = st.at("action_std").get<std::array<double, env::kActionDim>>();
  ds.stats.data_seed = st.at("data_seed").get<std::uint64_t>();
  ds.stats.n_trajectories = st.at("n_trajectories").get<int>();
  ds.stats.redraws = st.at("redraws").get<int>();
  ds.v_views = st.at("v_views").get<int>();
  return ds;
}

std::array<double, env::kProprioDim> normalize_proprio(
    const DatasetStats& st, const std::array<double, env::kProprioDim>& q) {
  std::array<double, env::kProprioDim> out{};
  for (int d = 0; d < env::kProprioDim; ++d) {
    out[d] = (q[d] - st.proprio_mean[d]) / st.proprio_std[d];
  }
  return out;
}

}  // namespace rscl
