#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rscl/env.hpp"

namespace rscl {

struct TrajStep {
  std::vector<std::vector<double>> views;  // [V][raw]
  std::array<double, env::kProprioDim> proprio{};
  std::array<double, env::kActionDim> action{};
};

struct Trajectory {
  std::uint64_t seed = 0;
  int task_id = 0;  // doubles as the instruction id
  std::vector<TrajStep> steps;
};

struct DatasetStats {
  std::array<double, env::kProprioDim> proprio_mean{};
  std::array<double, env::kProprioDim> proprio_std{};
  std::array<double, env::kActionDim> action_mean{};
  std::array<double, env::kActionDim> action_std{};
  std::uint64_t data_seed = 0;
  int n_trajectories = 0;
  int redraws = 0;  // expert failures that were re-drawn
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetStats stats;
  int v_views = 2;
};

// Rolls the scripted expert until success (failures are re-drawn under a
// derived seed and counted), then pads with hold actions so every trajectory
// spans at least horizon+1 steps.
Dataset generate_dataset(int n_traj, int v_views, std::uint64_t seed,
                         int min_len);

// One JSON object per line; a ".stats.json" sidecar carries the normalization
// stats. Writes are atomic.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);
std::string stats_sidecar_path(const std::string& dataset_path);

std::array<double, env::kProprioDim> normalize_proprio(
    const DatasetStats& st, const std::array<double, env::kProprioDim>& q);

}  // namespace rscl
