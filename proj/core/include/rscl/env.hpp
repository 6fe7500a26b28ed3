#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "rscl/rng.hpp"

namespace rscl {

// Planar pick-and-place in the unit square. Actions are (dx, dy, grip) with
// the deltas clipped to +-kDeltaClip and grip thresholded at 0.5 (below
// closes, at or above opens).
namespace env {

inline constexpr double kDeltaClip = 0.1;
inline constexpr double kPickRadius = 0.05;
inline constexpr double kPlaceRadius = 0.05;
inline constexpr int kMaxEpisodeSteps = 200;
inline constexpr double kObsNoise = 0.01;
inline constexpr int kRawViewDim = 16;
inline constexpr int kActionDim = 3;
inline constexpr int kProprioDim = 3;
inline constexpr int kNumInstructions = 2;

using Action = std::array<double, kActionDim>;

struct SceneState {
  double gripper_x = 0.5;
  double gripper_y = 0.5;
  double gripper_open = 1.0;  // 0 closed, 1 open
  double object_x = 0.5;
  double object_y = 0.5;
  double target_x = 0.5;
  double target_y = 0.5;
  bool holding = false;
  int task_id = 0;
};

// Deterministic transition; throws on non-finite action components.
SceneState env_step(const SceneState& s, const Action& a);

// Object inside the place radius and released.
bool task_success(const SceneState& s);

// Proportional controller: approach, close, carry, release, then hold still.
Action scripted_expert(const SceneState& s);

std::array<double, kProprioDim> proprio_of(const SceneState& s);

// Random start with the gripper clear of the object and the object clear of
// the target, so neither grasp nor success holds at t=0.
SceneState draw_start_state(Rng& rng);

// Frozen random linear maps from scene features to raw view vectors.
// View 0 observes absolute features (incl. the target); view 1 observes
// gripper-relative object features only; any further views get independent
// absolute maps.
class ViewMaps {
 public:
  ViewMaps(int v_views, std::uint64_t seed);
  int v_views() const { return v_; }
  std::uint64_t seed() const { return seed_; }
  // One kRawViewDim vector per view, with additive Gaussian noise from rng.
  std::vector<std::vector<double>> render(const SceneState& s, Rng& rng) const;

 private:
  int v_;
  std::uint64_t seed_;
  std::vector<std::vector<double>> maps_;  // per view, row-major [raw, feat]
};

struct Observation {
  std::vector<std::vector<double>> views;
  int instruction_id = 0;
  std::array<double, kProprioDim> proprio{};
};

// A policy maps an observation to a chunk of actions; the rng carries the
// episode's noise stream for stochastic policies.
using Policy =
    std::function<std::vector<Action>(const Observation&, Rng& rng)>;

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t seed = 0;
  bool success = false;
  int steps = 0;
  double final_dist = 0.0;
};

struct EvalResult {
  double success_rate = 0.0;
  std::vector<EpisodeRecord> episodes;
};

// Closed-loop rollouts: each policy chunk is executed in full before
// re-planning. An episode ends on success or after kMaxEpisodeSteps.
EvalResult evaluate_policy(const Policy& policy, int n_episodes,
                           std::uint64_t seed, const ViewMaps& maps);

}  // namespace env
}  // namespace rscl
