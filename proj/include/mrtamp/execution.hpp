#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrtamp/motion.hpp"
#include "mrtamp/sim.hpp"

namespace mrtamp {

struct RobotStepRecord {
  MotionQuery query;
  Certificate certificate = Certificate::Feasible;
  std::optional<WaypointPlan> plan;  // supplied planner's output (feasible queries only)
  std::string planner_error;
};

struct StepRun {
  Outcome outcome;
  WorldState next;
  std::vector<RobotStepRecord> robots;  // ascending robot id
  int infeasible = 0;                   // robot-steps certified infeasible
};

struct StepRunOptions {
  FrontierConfig certifier;
  // Keep certifying every robot of the step after the first infeasible one (rollout counting).
  bool certify_all = false;
  std::vector<TrajectoryRow>* dump = nullptr;
};

// Runs one task step: validates commands, certifies each robot's motion query with the
// frontier search, asks `planner` for waypoints and executes them jointly.
inline StepRun run_task_step(const WorldSpec& world, const WorldState& state, const TaskStep& step_in,
                             MotionPlanner& planner, const StepRunOptions& opt = {}) {
  TaskStep step = step_in;
  sort_step(step);
  StepRun run;
  run.next = state;
  const int step_no = state.step_index;
  auto fail = [&](OutcomeKind kind, std::string detail, std::optional<Pose> pose, std::vector<int> robots) {
    run.outcome = Outcome::failure(kind, std::move(detail), step_no, pose, std::move(robots));
    run.next = state;
    return run;
  };

  const int nr = static_cast<int>(world.robots.size());
  for (std::size_t i = 0; i < step.size(); ++i) {
    const auto& cmd = step[i];
    if (cmd.robot_id < 0 || cmd.robot_id >= nr)
      return fail(OutcomeKind::ExecutionErr, "unknown robot " + std::to_string(cmd.robot_id), std::nullopt, {});
    if (i > 0 && step[i - 1].robot_id == cmd.robot_id)
      return fail(OutcomeKind::ExecutionErr, "robot commanded twice in one step", std::nullopt, {cmd.robot_id});
    if (!is_finite(cmd.target) || !in_bounds_xy(world, cmd.target) || cmd.target.z < 0.0 || cmd.target.z > world.tol.max_z)
      return fail(OutcomeKind::ExecutionErr, "command target outside map", cmd.target, {cmd.robot_id});
    if (cmd.carry && !box_in_grasp(world, state, cmd.robot_id))
      return fail(OutcomeKind::ExecutionErr, "Robot " + std::to_string(cmd.robot_id) + " has no box within grasp tolerance",
                  state.arm_pos[cmd.robot_id], {cmd.robot_id});
  }

  std::optional<Outcome> unreachable;
  for (const auto& cmd : step) {
    RobotStepRecord rec{make_query(world, state, cmd), Certificate::Feasible, std::nullopt, {}};
    const RobotSpec& robot = world.robots[cmd.robot_id];
    MotionSearchResult cert;
    if (!reachable(world, robot, cmd.target)) {
      cert.status = MotionStatus::InvalidQuery;
      cert.reason = "target outside reach";
    } else {
      cert = search(rec.query, opt.certifier);
    }
    if (cert.status != MotionStatus::Feasible) {
      rec.certificate = Certificate::Infeasible;
      ++run.infeasible;
      if (!unreachable)
        unreachable = Outcome::failure(OutcomeKind::UnreachableMotion,
                                       "Robot " + std::to_string(cmd.robot_id) + " motion infeasible (" + cert.reason + ")",
                                       step_no, cmd.target, {cmd.robot_id});
      run.robots.push_back(std::move(rec));
      if (!opt.certify_all) break;
      continue;
    }
    if (planner.is_oracle()) {
      rec.plan = cert.plan;
    } else {
      MotionResponse resp = planner.plan(rec.query);
      rec.plan = std::move(resp.plan);
      rec.planner_error = std::move(resp.error);
    }
    run.robots.push_back(std::move(rec));
  }
  if (unreachable) {
    run.outcome = *unreachable;
    run.next = state;
    return run;
  }

  std::map<int, WaypointPlan> plans;
  for (const auto& rec : run.robots) {
    if (!rec.plan)
      return fail(OutcomeKind::ExecutionErr,
                  "Robot " + std::to_string(rec.query.robot_id) + " produced no waypoint plan: " + rec.planner_error,
                  std::nullopt, {rec.query.robot_id});
    plans.emplace(rec.query.robot_id, *rec.plan);
  }
  StepResult sr = execute_step(state, world, step, plans, opt.dump);
  run.outcome = std::move(sr.outcome);
  run.next = std::move(sr.state);
  return run;
}

struct PlanRun {
  std::vector<Outcome> trace;
  std::vector<StepRun> steps;
  WorldState final_state;
  Outcome outcome;
  int steps_succeeded = 0;
  int infeasible = 0;
  double seconds = 0.0;
};

struct PlanRunOptions {
  StepRunOptions step;
  // Continue with later steps after a failure (the failed step leaves the world unchanged).
  bool continue_after_failure = false;
};

inline PlanRun run_plan(const WorldSpec& world, const WorldState& initial, const TaskPlan& plan, MotionPlanner& planner,
                        const PlanRunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  PlanRun run;
  WorldState state = initial;
  for (const auto& step : plan) {
    StepRun sr = run_task_step(world, state, step, planner, opt.step);
    run.trace.push_back(sr.outcome);
    run.infeasible += sr.infeasible;
    const bool ok = sr.outcome.ok();
    if (ok) {
      ++run.steps_succeeded;
      state = sr.next;
    }
    run.steps.push_back(std::move(sr));
    if (!ok && !opt.continue_after_failure) break;
  }
  run.final_state = state;
  if (run.trace.empty()) run.trace.push_back(Outcome::success(initial.step_index));
  run.outcome = classify_episode(run.trace, state, world);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace mrtamp
