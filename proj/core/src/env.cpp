#include "rscl/env.hpp"

#include <algorithm>
#include <cmath>

#include "rscl/errors.hpp"

namespace rscl {
namespace env {

namespace {
double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}
}  // namespace

SceneState env_step(const SceneState& s, const Action& a) {
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericError("env_step: non-finite action");
  }
  SceneState n = s;
  n.gripper_x = clip(s.gripper_x + clip(a[0], -kDeltaClip, kDeltaClip), 0.0, 1.0);
  n.gripper_y = clip(s.gripper_y + clip(a[1], -kDeltaClip, kDeltaClip), 0.0, 1.0);
  const double grip = clip(a[2], 0.0, 1.0);
  n.gripper_open = grip < 0.5 ? 0.0 : 1.0;
  if (grip >= 0.5) {
    n.holding = false;
  } else if (!n.holding &&
             dist2d(n.gripper_x, n.gripper_y, n.object_x, n.object_y) < kPickRadius) {
    n.holding = true;
  }
  if (n.holding) {
    n.object_x = n.gripper_x;
    n.object_y = n.gripper_y;
  }
  return n;
}

bool task_success(const SceneState& s) {
  return !s.holding &&
         dist2d(s.object_x, s.object_y, s.target_x, s.target_y) < kPlaceRadius;
}

Action scripted_expert(const SceneState& s) {
  const auto toward = [](double dx, double dy, double grip) -> Action {
    return {clip(dx, -kDeltaClip, kDeltaClip), clip(dy, -kDeltaClip, kDeltaClip), grip};
  };
  if (task_success(s)) return {0.0, 0.0, 1.0};
  if (s.holding) {
    const double ex = s.target_x - s.gripper_x;
    const double ey = s.target_y - s.gripper_y;
    if (std::hypot(ex, ey) > kPlaceRadius * 0.5) return toward(ex, ey, 0.0);
    return {0.0, 0.0, 1.0};  // release over the target
  }
  const double dx = s.object_x - s.gripper_x;
  const double dy = s.object_y - s.gripper_y;
  if (std::hypot(dx, dy) > kPickRadius * 0.5) return toward(dx, dy, 1.0);
  return toward(dx, dy, 0.0);  // land on the object and close
}

std::array<double, kProprioDim> proprio_of(const SceneState& s) {
  return {s.gripper_x, s.gripper_y, s.gripper_open};
}

SceneState draw_start_state(Rng& rng) {
  SceneState s;
  for (int tries = 0; tries < 1000; ++tries) {
    s.gripper_x = rng.uniform(0.05, 0.95);
    s.gripper_y = rng.uniform(0.05, 0.95);
    s.object_x = rng.uniform(0.05, 0.95);
    s.object_y = rng.uniform(0.05, 0.95);
    s.target_x = rng.uniform(0.05, 0.95);
    s.target_y = rng.uniform(0.05, 0.95);
    s.gripper_open = 1.0;
    s.holding = false;
    s.task_id = static_cast<int>(rng.uniform_int(kNumInstructions));
    const bool clear_of_object =
        dist2d(s.gripper_x, s.gripper_y, s.object_x, s.object_y) > 2.0 * kPickRadius;
    const bool object_off_target =
        dist2d(s.object_x, s.object_y, s.target_x, s.target_y) > 3.0 * kPlaceRadius;
    if (clear_of_object && object_off_target) return s;
  }
  throw ValueError("draw_start_state: rejection sampling failed");
}

namespace {
std::vector<double> abs_features(const SceneState& s) {
  return {s.gripper_x, s.gripper_y, s.gripper_open, s.object_x,
          s.object_y, s.target_x, s.target_y, s.holding ? 1.0 : 0.0};
}

// The wrist frame moves with the gripper: only object offsets and the
// grip flags survive, the target drops out entirely.
std::vector<double> wrist_features(const SceneState& s) {
  return {s.object_x - s.gripper_x, s.object_y - s.gripper_y, s.gripper_open,
          s.holding ? 1.0 : 0.0};
}
}  // namespace

ViewMaps::ViewMaps(int v_views, std::uint64_t seed) : v_(v_views), seed_(seed) {
  if (v_views < 2) {
    throw ValueError("ViewMaps: at least 2 views required, got " +
                     std::to_string(v_views));
  }
  Rng rng(Rng::derive_seed(seed, 0x76696577ull));  // dedicated view-map stream
  for (int v = 0; v < v_views; ++v) {
    const std::size_t nf = (v == 1) ? wrist_features(SceneState{}).size()
                                    : abs_features(SceneState{}).size();
    std::vector<double> m(kRawViewDim * nf);
    const double sc = 1.0 / std::sqrt(static_cast<double>(nf));
    for (auto& w : m) w = rng.gaussian() * sc;
    maps_.push_back(std::move(m));
  }
}

std::vector<std::vector<double>> ViewMaps::render(const SceneState& s,
                                                  Rng& rng) const {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(v_));
  for (int v = 0; v < v_; ++v) {
    const std::vector<double> f = (v == 1) ? wrist_features(s) : abs_features(s);
    std::vector<double> y(kRawViewDim, 0.0);
    const double* m = maps_[static_cast<std::size_t>(v)].data();
    for (int i = 0; i < kRawViewDim; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) acc += m[i * f.size() + j] * f[j];
      y[static_cast<std::size_t>(i)] = acc + kObsNoise * rng.gaussian();
    }
    out.push_back(std::move(y));
  }
  return out;
}

EvalResult evaluate_policy(const Policy& policy, int n_episodes,
                           std::uint64_t seed, const ViewMaps& maps) {
  if (n_episodes <= 0) throw ValueError("evaluate_policy: empty evaluation");
  EvalResult result;
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t ep_seed = Rng::derive_seed(seed, static_cast<std::uint64_t>(e));
    Rng rng(ep_seed);
    SceneState s = draw_start_state(rng);
    int steps = 0;
    bool success = false;
    while (steps < kMaxEpisodeSteps && !success) {
      Observation obs{maps.render(s, rng), s.task_id, proprio_of(s)};
      const auto chunk = policy(obs, rng);
      if (chunk.empty()) throw ValueError("evaluate_policy: policy returned no actions");
      for (const auto& a : chunk) {
        s = env_step(s, a);
        ++steps;
        if (task_success(s)) {
          success = true;
          break;
        }
        if (steps >= kMaxEpisodeSteps) break;
      }
    }
    successes += success ? 1 : 0;
    result.episodes.push_back(
        {e, ep_seed, success, steps,
         dist2d(s.object_x, s.object_y, s.target_x, s.target_y)});
  }
  result.success_rate = static_cast<double>(successes) / n_episodes;
  return result;
}

}  // namespace env
}  // namespace rscl
