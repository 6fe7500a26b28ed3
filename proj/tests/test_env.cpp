#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "rscl/dataset.hpp"
#include "rscl/env.hpp"
#include "rscl/errors.hpp"
#include "rscl/util.hpp"

using namespace rscl;
using namespace rscl::env;

namespace {

SceneState mid_state() {
  SceneState s;
  s.gripper_x = 0.5;
  s.gripper_y = 0.5;
  s.gripper_open = 1.0;
  s.object_x = 0.3;
  s.object_y = 0.7;
  s.target_x = 0.8;
  s.target_y = 0.2;
  return s;
}

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("zero action on an open gripper is a fixed point") {
  SceneState s = mid_state();
  SceneState t = env_step(s, {0.0, 0.0, 1.0});
  CHECK(t.gripper_x == s.gripper_x);
  CHECK(t.gripper_y == s.gripper_y);
  CHECK(t.object_x == s.object_x);
  CHECK(t.holding == s.holding);
}

TEST_CASE("closing on the object grabs it and it follows the gripper") {
  SceneState s = mid_state();
  s.gripper_x = s.object_x;
  s.gripper_y = s.object_y;
  SceneState grabbed = env_step(s, {0.0, 0.0, 0.0});
  CHECK(grabbed.holding);
  CHECK(grabbed.object_x == grabbed.gripper_x);

  SceneState moved = env_step(grabbed, {0.05, 0.0, 0.0});
  CHECK(moved.holding);
  CHECK(moved.gripper_x == doctest::Approx(grabbed.gripper_x + 0.05));
  CHECK(moved.object_x == moved.gripper_x);
  CHECK(moved.object_y == moved.gripper_y);

  SceneState released = env_step(moved, {0.0, 0.0, 1.0});
  CHECK(!released.holding);
}

TEST_CASE("closing far from the object does not grab") {
  SceneState s = mid_state();  // gripper 0.28 away from the object
  SceneState t = env_step(s, {0.0, 0.0, 0.0});
  CHECK(!t.holding);
}

TEST_CASE("deltas are clipped and coordinates stay inside the unit square") {
  SceneState s = mid_state();
  SceneState t = env_step(s, {5.0, -5.0, 1.0});
  CHECK(t.gripper_x == doctest::Approx(0.6));   // clipped to +0.1
  CHECK(t.gripper_y == doctest::Approx(0.4));

  s.gripper_x = 0.99;
  s.gripper_y = 0.01;
  t = env_step(s, {0.1, -0.1, 1.0});
  CHECK(t.gripper_x <= 1.0);
  CHECK(t.gripper_y >= 0.0);

  CHECK_THROWS_AS(env_step(s, {std::nan(""), 0.0, 1.0}), NumericError);
}

TEST_CASE("task success requires a released object inside the place radius") {
  SceneState s = mid_state();
  CHECK(!task_success(s));
  s.object_x = s.target_x + 0.01;
  s.object_y = s.target_y;
  CHECK(task_success(s));
  s.holding = true;  // still held: not done
  CHECK(!task_success(s));
}

TEST_CASE("expert phases: close on the object, then head for the target") {
  SceneState s = mid_state();
  s.gripper_x = s.object_x;
  s.gripper_y = s.object_y;
  Action a = scripted_expert(s);
  CHECK(a[2] < 0.5);  // grip-close command

  s.holding = true;
  s.object_x = s.gripper_x;
  s.object_y = s.gripper_y;
  s.gripper_open = 0.0;
  s.target_x = s.gripper_x + 0.3;  // target to the right
  s.target_y = s.gripper_y;
  a = scripted_expert(s);
  CHECK(a[0] > 0.0);
  CHECK(std::abs(a[0]) <= kDeltaClip + 1e-12);
  CHECK(std::abs(a[1]) <= kDeltaClip + 1e-12);
}

TEST_CASE("expert solves at least 99 percent of 1000 random starts") {
  int solved = 0;
  for (int i = 0; i < 1000; ++i) {
    Rng rng(Rng::derive_seed(777, static_cast<std::uint64_t>(i)));
    SceneState s = draw_start_state(rng);
    CHECK(!task_success(s));
    CHECK(!s.holding);
    for (int t = 0; t < kMaxEpisodeSteps; ++t) {
      s = env_step(s, scripted_expert(s));
      if (task_success(s)) break;
    }
    solved += task_success(s) ? 1 : 0;
  }
  CHECK(solved >= 990);
}

TEST_CASE("start states keep the gripper off the object and the object off target") {
  for (int i = 0; i < 200; ++i) {
    Rng rng(Rng::derive_seed(5, static_cast<std::uint64_t>(i)));
    SceneState s = draw_start_state(rng);
    double dg = std::hypot(s.gripper_x - s.object_x, s.gripper_y - s.object_y);
    double dt = std::hypot(s.object_x - s.target_x, s.object_y - s.target_y);
    CHECK(dg >= kPickRadius);
    CHECK(dt >= kPlaceRadius);
  }
}

TEST_CASE("proprio reports gripper pose and grip bit") {
  SceneState s = mid_state();
  auto q = proprio_of(s);
  CHECK(q[0] == s.gripper_x);
  CHECK(q[1] == s.gripper_y);
  CHECK(q[2] == s.gripper_open);
}

TEST_CASE("view rendering is deterministic and view-count checked") {
  CHECK_THROWS_AS(ViewMaps(1, 3), ValueError);
  ViewMaps maps(2, 3);
  SceneState s = mid_state();
  Rng r1(10), r2(10);
  auto a = maps.render(s, r1);
  auto b = maps.render(s, r2);
  REQUIRE(a.size() == 2);
  REQUIRE(a[0].size() == static_cast<std::size_t>(kRawViewDim));
  CHECK(a == b);
}

TEST_CASE("exterior view sees the target, wrist view is shift invariant") {
  ViewMaps maps(2, 3);
  SceneState s = mid_state();

  SceneState target_moved = s;
  target_moved.target_x += 0.1;
  Rng r1(4), r2(4);  // identical noise draws isolate the map difference
  auto base = maps.render(s, r1);
  auto moved = maps.render(target_moved, r2);
  CHECK(base[0] != moved[0]);  // exterior reacts to the target
  CHECK(base[1] == moved[1]);  // wrist never saw it

  SceneState shifted = s;
  shifted.gripper_x += 0.07;
  shifted.gripper_y -= 0.04;
  shifted.object_x += 0.07;
  shifted.object_y -= 0.04;
  Rng r3(4), r4(4);
  auto u = maps.render(s, r3);
  auto v = maps.render(shifted, r4);
  // Gripper-relative features are shift invariant up to the roundoff of
  // (a + d) - (b + d); the exterior view moves by a macroscopic amount.
  REQUIRE(u[1].size() == v[1].size());
  for (std::size_t i = 0; i < u[1].size(); ++i)
    CHECK(u[1][i] == doctest::Approx(v[1][i]).epsilon(1e-9));
  CHECK(u[0] != v[0]);
}

TEST_CASE("evaluate_policy runs chunked rollouts and validates inputs") {
  ViewMaps maps(2, 3);
  Policy random_policy = [](const Observation&, Rng& rng) {
    std::vector<Action> chunk;
    for (int i = 0; i < 8; ++i)
      chunk.push_back({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                       rng.uniform() < 0.5 ? 0.0 : 1.0});
    return chunk;
  };

  CHECK_THROWS_AS(evaluate_policy(random_policy, 0, 1, maps), ValueError);

  EvalResult r = evaluate_policy(random_policy, 200, 9, maps);
  CHECK(r.episodes.size() == 200);
  CHECK(r.success_rate <= 0.05);  // flailing almost never places the object
  for (const auto& ep : r.episodes) CHECK(ep.steps <= kMaxEpisodeSteps);

  EvalResult r2 = evaluate_policy(random_policy, 200, 9, maps);
  CHECK(r2.success_rate == r.success_rate);
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    CHECK(r.episodes[i].success == r2.episodes[i].success);
    CHECK(r.episodes[i].steps == r2.episodes[i].steps);
  }
}

TEST_CASE("dataset generation is deterministic and statistically annotated") {
  Dataset ds = generate_dataset(5, 2, 21, 9);
  CHECK(ds.trajectories.size() == 5);
  CHECK(ds.stats.n_trajectories == 5);
  CHECK(ds.stats.data_seed == 21);
  CHECK(ds.v_views == 2);
  for (const auto& t : ds.trajectories) {
    CHECK(t.steps.size() >= 9);
    for (const auto& st : t.steps) {
      REQUIRE(st.views.size() == 2);
      REQUIRE(st.views[0].size() == static_cast<std::size_t>(kRawViewDim));
    }
  }
  // Distinct seeds change the first observed state.
  Dataset other = generate_dataset(5, 2, 22, 9);
  CHECK(ds.trajectories[0].steps[0].proprio != other.trajectories[0].steps[0].proprio);

  // Stats describe the stored arrays.
  double sum_x = 0.0;
  std::size_t n = 0;
  for (const auto& t : ds.trajectories)
    for (const auto& st : t.steps) {
      sum_x += st.proprio[0];
      ++n;
    }
  CHECK(ds.stats.proprio_mean[0] == doctest::Approx(sum_x / n).epsilon(1e-12));
  for (double sd : ds.stats.proprio_std) CHECK(sd >= 1e-8);

  auto z = normalize_proprio(ds.stats, {ds.stats.proprio_mean[0],
                                        ds.stats.proprio_mean[1],
                                        ds.stats.proprio_mean[2]});
  CHECK(z[0] == doctest::Approx(0.0));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(0.0));
}

TEST_CASE("dataset files round-trip exactly and are byte stable") {
  Dataset ds = generate_dataset(3, 2, 33, 9);
  std::string p1 = temp_path("rscl_test_ds_a.jsonl");
  std::string p2 = temp_path("rscl_test_ds_b.jsonl");
  write_dataset(ds, p1);
  write_dataset(ds, p2);
  CHECK(read_file(p1) == read_file(p2));
  CHECK(read_file(stats_sidecar_path(p1)) == read_file(stats_sidecar_path(p2)));

  Dataset back = read_dataset(p1);
  REQUIRE(back.trajectories.size() == ds.trajectories.size());
  CHECK(back.v_views == ds.v_views);
  CHECK(back.stats.data_seed == ds.stats.data_seed);
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& a = ds.trajectories[i];
    const auto& b = back.trajectories[i];
    CHECK(a.seed == b.seed);
    CHECK(a.task_id == b.task_id);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
      CHECK(a.steps[t].views == b.steps[t].views);      // bit-exact doubles
      CHECK(a.steps[t].proprio == b.steps[t].proprio);
      CHECK(a.steps[t].action == b.steps[t].action);
    }
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(stats_sidecar_path(p1).c_str());
  std::remove(stats_sidecar_path(p2).c_str());

  CHECK_THROWS_AS(read_dataset(temp_path("rscl_no_such_file.jsonl")), IoError);
  CHECK_THROWS_AS(generate_dataset(0, 2, 1, 9), ValueError);
}

TEST_CASE("both instruction ids appear in a generated dataset") {
  Dataset ds = generate_dataset(16, 2, 44, 9);
  bool saw0 = false, saw1 = false;
  for (const auto& t : ds.trajectories) {
    if (t.task_id == 0) saw0 = true;
    if (t.task_id == 1) saw1 = true;
  }
  CHECK(saw0);
  CHECK(saw1);
}
