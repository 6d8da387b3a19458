#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mrtamp/execution.hpp"
#include "mrtamp/sim.hpp"

using namespace mrtamp;

TEST(Interpolate, TwoWaypoints) {
  const Trajectory t = interpolate(std::vector<Pose>{{0, 0, 0.1}, {0.1, 0, 0.1}}, 0.05);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0], (Pose{0, 0, 0.1}));
  EXPECT_NEAR(t[1].x, 0.05, 1e-12);
  EXPECT_EQ(t[2], (Pose{0.1, 0, 0.1}));
}

TEST(Interpolate, SingleWaypoint) {
  EXPECT_EQ(interpolate(std::vector<Pose>{{0.3, 0.3, 0.1}}, 0.02).size(), 1u);
}

TEST(Interpolate, EmptyThrows) {
  EXPECT_THROW(interpolate(WaypointPlan{0, {}}, 0.02), EmptyPlanError);
}

TEST(Interpolate, CeilingRuleCount) {
  // 0.37 / 0.02 = 18.5 -> 19 intervals -> 20 samples; equivalently ceil(37 / 2) + 1 in integers.
  const int intervals = (37 + 2 - 1) / 2;
  const Trajectory t = interpolate(std::vector<Pose>{{0.1, 0.1, 0.1}, {0.47, 0.1, 0.1}}, 0.02);
  EXPECT_EQ(static_cast<int>(t.size()), intervals + 1);
  EXPECT_EQ(t.size(), 20u);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_LE(distance(t[i - 1], t[i]), 0.02 + 1e-12);
  // Multi-segment: counts add per segment and shared waypoints appear once.
  const Trajectory m = interpolate(std::vector<Pose>{{0, 0, 0.1}, {0.1, 0, 0.1}, {0.1, 0.05, 0.1}}, 0.02);
  EXPECT_EQ(m.size(), 5u + 3u + 1u);
}

namespace {

// 2x2 map, one robot on the centre joint, a box in cell (0,0) bound for (1,0).
WorldSpec one_robot() {
  WorldSpec w = fx::world(2, 2, {{1, 1}});
  fx::add_box(w, {0, 0}, {1, 0});
  return w;
}

WaypointPlan straight(int r, Pose a, Pose b) { return {r, {a, b}}; }

}  // namespace

TEST(ExecuteStep, PickAndPlace) {
  const WorldSpec w = one_robot();
  WorldState s = initial_state(w);
  const Pose over_box{0.25, 0.25, 0.10};
  auto r1 = execute_step(s, w, {{0, over_box, false}}, {{0, straight(0, s.arm_pos[0], over_box)}});
  ASSERT_TRUE(r1.outcome.ok()) << r1.outcome.detail;
  EXPECT_EQ(r1.state.step_index, 1);
  const Pose over_target{0.75, 0.25, 0.10};
  auto r2 = execute_step(r1.state, w, {{0, over_target, true}}, {{0, straight(0, over_box, over_target)}});
  ASSERT_TRUE(r2.outcome.ok()) << r2.outcome.detail;
  EXPECT_EQ(r2.state.box_pos[0], (Pose{0.75, 0.25, 0.08}));
  EXPECT_FALSE(r2.state.carrying[0].has_value());
  EXPECT_EQ(classify_episode({r1.outcome, r2.outcome}, r2.state, w).kind, OutcomeKind::Success);
}

TEST(ExecuteStep, CrossingArmsCollideAtomically) {
  const WorldSpec w = fx::world(4, 2, {{1, 1}, {3, 1}});
  const WorldState s = initial_state(w);
  const Pose t0{1.25, 0.5, 0.10};
  const Pose t1{0.75, 0.5, 0.10};
  auto r = execute_step(s, w, {{0, t0, false}, {1, t1, false}},
                        {{0, straight(0, s.arm_pos[0], t0)}, {1, straight(1, s.arm_pos[1], t1)}});
  EXPECT_EQ(r.outcome.kind, OutcomeKind::RobRobCollision);
  EXPECT_EQ(r.state, s);
  EXPECT_EQ(r.outcome.robots, (std::vector<int>{0, 1}));
}

TEST(ExecuteStep, FarFromTarget) {
  const WorldSpec w = one_robot();
  const WorldState s = initial_state(w);
  const Pose target{0.25, 0.25, 0.10};
  const Pose short_of{0.25 + 0.12, 0.25, 0.10};
  auto r = execute_step(s, w, {{0, target, false}}, {{0, straight(0, s.arm_pos[0], short_of)}});
  EXPECT_EQ(r.outcome.kind, OutcomeKind::FarFromTarget);
  EXPECT_EQ(r.state, s);
}

TEST(ExecuteStep, ObstacleHit) {
  const WorldSpec w = fx::world(2, 2, {{1, 1}}, {{1, 0}});
  const WorldState s = initial_state(w);
  const Pose target{0.80, 0.25, 0.10};
  auto r = execute_step(s, w, {{0, target, false}}, {{0, straight(0, s.arm_pos[0], target)}});
  EXPECT_EQ(r.outcome.kind, OutcomeKind::RobObsCollision);
  ASSERT_TRUE(r.outcome.at_pose.has_value());
  EXPECT_EQ(r.state, s);
}

TEST(ExecuteStep, InvalidPlansAreExecutionErrors) {
  const WorldSpec w = one_robot();
  const WorldState s = initial_state(w);
  const Pose target{0.25, 0.25, 0.10};
  EXPECT_EQ(execute_step(s, w, {{0, target, false}}, {}).outcome.kind, OutcomeKind::ExecutionErr);
  EXPECT_EQ(execute_step(s, w, {{0, target, false}}, {{0, WaypointPlan{0, {}}}}).outcome.kind,
            OutcomeKind::ExecutionErr);
  EXPECT_EQ(execute_step(s, w, {{0, target, false}}, {{0, WaypointPlan{0, {target, target}}}}).outcome.kind,
            OutcomeKind::ExecutionErr);
  EXPECT_EQ(execute_step(s, w, {{0, target, false}}, {{0, WaypointPlan{0, {{3.0, 3.0, 0.1}}}}}).outcome.kind,
            OutcomeKind::ExecutionErr);
  // Carry with nothing under the arm.
  EXPECT_EQ(execute_step(s, w, {{0, target, true}}, {{0, straight(0, s.arm_pos[0], target)}}).outcome.kind,
            OutcomeKind::ExecutionErr);
}

TEST(ExecuteStep, NoTeleportAndSynchronisedFinish) {
  const WorldSpec w = fx::world(4, 2, {{1, 1}, {3, 1}});
  const WorldState s = initial_state(w);
  const Pose t0{0.25, 0.25, 0.10};
  const Pose t1{1.95, 0.8, 0.25};
  std::vector<TrajectoryRow> rows;
  auto r = execute_step(s, w, {{0, t0, false}, {1, t1, false}},
                        {{0, straight(0, s.arm_pos[0], t0)}, {1, straight(1, s.arm_pos[1], t1)}}, &rows);
  ASSERT_TRUE(r.outcome.ok());
  const int ticks = std::max(interval_count(distance(s.arm_pos[0], t0), 0.02), interval_count(distance(s.arm_pos[1], t1), 0.02));
  ASSERT_EQ(static_cast<int>(rows.size()), 2 * (ticks + 1));
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LE(distance(rows[i - 2].p, rows[i].p), 2 * 0.02 + 1e-12);
  EXPECT_EQ(rows[rows.size() - 2].p, t0);
  EXPECT_EQ(rows.back().p, t1);
  const std::string csv = trajectory_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tick,robot_id,x,y,z,carrying");
}

TEST(ExecuteStep, Conservation) {
  WorldSpec w = fx::world(3, 2, {{1, 1}, {2, 1}});
  fx::add_box(w, {0, 0}, {0, 1});
  fx::add_box(w, {2, 0}, {2, 1});
  WorldState s = initial_state(w);
  const Pose b0{0.25, 0.25, 0.10};
  const Pose b1{1.25, 0.25, 0.10};
  auto r = execute_step(s, w, {{0, b0, false}, {1, b1, false}},
                        {{0, straight(0, s.arm_pos[0], b0)}, {1, straight(1, s.arm_pos[1], b1)}});
  ASSERT_TRUE(r.outcome.ok()) << r.outcome.detail;
  const Pose d0{0.25, 0.75, 0.10};
  const Pose d1{1.25, 0.75, 0.10};
  auto r2 = execute_step(r.state, w, {{0, d0, true}, {1, d1, true}},
                         {{0, straight(0, b0, d0)}, {1, straight(1, b1, d1)}});
  ASSERT_TRUE(r2.outcome.ok()) << r2.outcome.detail;
  EXPECT_EQ(r2.state.box_pos.size(), 2u);
  for (const auto& c : r2.state.carrying) EXPECT_FALSE(c.has_value());
  for (const auto& b : r2.state.box_pos) EXPECT_DOUBLE_EQ(b.z, 0.08);
  EXPECT_TRUE(all_boxes_placed(w, r2.state));
}

TEST(ClassifyEpisode, Rules) {
  const WorldSpec w = one_robot();
  WorldState s = initial_state(w);
  std::vector<Outcome> trace{Outcome::success(0), Outcome::success(1), Outcome::success(2),
                             Outcome::failure(OutcomeKind::RobObsCollision, "x", 3), Outcome::success(4)};
  const Outcome o = classify_episode(trace, s, w);
  EXPECT_EQ(o.kind, OutcomeKind::RobObsCollision);
  EXPECT_EQ(o.at_step, 3);
  EXPECT_EQ(classify_episode({Outcome::success(0)}, s, w).kind, OutcomeKind::TaskIncomplete);
  s.box_pos[0] = box_rest_pose(w, {1, 0});
  EXPECT_EQ(classify_episode({Outcome::success(0)}, s, w).kind, OutcomeKind::Success);
  EXPECT_THROW(classify_episode({}, s, w), std::invalid_argument);
}

TEST(ExecuteStep, Deterministic) {
  const WorldSpec w = one_robot();
  const WorldState s = initial_state(w);
  const Pose t{0.3, 0.2, 0.17};
  auto a = execute_step(s, w, {{0, t, false}}, {{0, straight(0, s.arm_pos[0], t)}});
  auto b = execute_step(s, w, {{0, t, false}}, {{0, straight(0, s.arm_pos[0], t)}});
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.outcome.kind, b.outcome.kind);
}

TEST(RunTaskStep, OracleCertifiesAndExecutes) {
  const WorldSpec w = fx::world(2, 2, {{1, 1}}, {{1, 0}});
  const WorldState s = initial_state(w);
  OracleMotionPlanner oracle;
  StepRun run = run_task_step(w, s, {{0, {0.25, 0.25, 0.10}, false}}, oracle);
  EXPECT_TRUE(run.outcome.ok()) << run.outcome.detail;
  EXPECT_EQ(run.infeasible, 0);
  // A target inside the obstacle is certified infeasible.
  StepRun bad = run_task_step(w, s, {{0, {0.75, 0.25, 0.10}, false}}, oracle);
  EXPECT_EQ(bad.outcome.kind, OutcomeKind::UnreachableMotion);
  EXPECT_EQ(bad.infeasible, 1);
  EXPECT_EQ(bad.next, s);
}
