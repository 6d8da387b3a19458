#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mrtamp/execution.hpp"
#include "mrtamp/motion.hpp"
#include "mrtamp/plan_text.hpp"

namespace mrtamp {

struct RewardConfig {
  double success = 1.0;
  double format = 0.1;
  double efficiency_per_step = 0.05;
  double efficiency_floor = -0.2;
  double infeasible_per_step = 0.05;
  double infeasible_floor = 0.2;
  int n_cap = 8;
};

struct RewardBreakdown {
  double r_success = 0.0;
  double r_format = 0.0;
  double r_efficiency = 0.0;
  double r_motion_penalty = 0.0;
  double total = 0.0;
  std::optional<std::string> format_error;

  void finish() { total = r_success + r_format + r_efficiency + r_motion_penalty; }
};

inline RewardBreakdown task_reward_stage2(int plan_len, const Outcome& outcome, int reference_len, bool well_formed,
                                          const RewardConfig& cfg = {}) {
  if (reference_len < 1) throw std::invalid_argument("task_reward_stage2: reference_len must be >= 1");
  RewardBreakdown r;
  r.r_success = outcome.ok() ? cfg.success : 0.0;
  r.r_format = well_formed ? cfg.format : 0.0;
  if (outcome.ok())
    r.r_efficiency = std::max(cfg.efficiency_per_step * (reference_len - plan_len), cfg.efficiency_floor);
  r.finish();
  return r;
}

inline double motion_penalty(int n_infeasible, const RewardConfig& cfg = {}) {
  if (n_infeasible < 0) throw std::invalid_argument("motion_penalty: negative count");
  if (n_infeasible == 0) return 0.0;
  return -std::max(cfg.infeasible_floor, cfg.infeasible_per_step * n_infeasible);
}

inline RewardBreakdown task_reward_stage3(int plan_len, const Outcome& outcome, int reference_len, bool well_formed,
                                          int n_infeasible, const RewardConfig& cfg = {}) {
  RewardBreakdown r = task_reward_stage2(plan_len, outcome, reference_len, well_formed, cfg);
  r.r_motion_penalty = motion_penalty(n_infeasible, cfg);
  r.finish();
  return r;
}

struct MotionScore {
  RewardBreakdown reward;
  Outcome outcome;
  std::optional<WaypointPlan> plan;
};

// `text` is the planner's raw waypoint answer ({robot_id, waypoints}).
inline MotionScore motion_reward(const std::string& text, const MotionQuery& q, const RewardConfig& cfg = {}) {
  MotionScore s;
  std::string err;
  s.plan = parse_waypoint_plan(text, &err);
  if (!s.plan) {
    s.outcome = Outcome::failure(OutcomeKind::ExecutionErr, "waypoint format: " + err, -1, std::nullopt, {q.robot_id});
    s.reward.format_error = err;
    s.reward.finish();
    return s;
  }
  s.reward.r_format = cfg.format;
  if (s.plan->robot_id != q.robot_id) {
    s.outcome = Outcome::failure(OutcomeKind::ExecutionErr, "waypoint plan for wrong robot", -1, std::nullopt, {q.robot_id});
  } else {
    s.outcome = execute_single(q, *s.plan).outcome;
  }
  s.reward.r_success = s.outcome.ok() ? cfg.success : 0.0;
  s.reward.finish();
  return s;
}

// ---------------------------------------------------------------------------
// Rollout

struct MotionStepRecord {
  int step = 0;
  int robot_id = 0;
  MotionQuery query;
  Certificate certificate = Certificate::Feasible;
  bool planner_failed = false;  // certified Feasible, supplied planner's output fails alone
};

struct BufferEntry {
  int plan_index = 0;
  int step = 0;
  MotionQuery query;
  WaypointPlan plan;  // the failing planner output
};

struct RolloutRecord {
  int plan_index = 0;
  std::string plan_text;
  TaskPlan plan;
  bool well_formed = false;
  Outcome outcome;
  std::vector<MotionStepRecord> motion_steps;
  int n_infeasible = 0;
  std::vector<BufferEntry> buffer;
  RewardBreakdown reward;
  std::string error;  // per-record validation problem, batch continues
};

struct RolloutBatch {
  std::vector<RolloutRecord> records;
  std::vector<BufferEntry> buffer;  // first n_cap entries in (plan, step, robot) order
};

using PlanCandidate = std::variant<std::string, TaskPlan>;

inline RolloutRecord rollout_one(const WorldSpec& world, const WorldState& initial, int reference_len,
                                 const PlanCandidate& cand, int index, MotionPlanner& planner,
                                 const RewardConfig& cfg = {}, const FrontierConfig& certifier = {}) {
  RolloutRecord rec;
  rec.plan_index = index;
  if (const auto* text = std::get_if<std::string>(&cand)) {
    rec.plan_text = *text;
    PlanParse p = parse_plan(*text);
    if (!p.ok()) {
      rec.outcome = format_error_outcome(*p.error);
      rec.reward = task_reward_stage3(0, rec.outcome, reference_len, false, 0, cfg);
      rec.reward.format_error = p.error->what();
      return rec;
    }
    rec.plan = *p.plan;
    rec.well_formed = true;
  } else {
    rec.plan = std::get<TaskPlan>(cand);
    rec.plan_text = render_plan(rec.plan);
    rec.well_formed = true;
  }

  PlanRunOptions opt;
  opt.continue_after_failure = true;
  opt.step.certify_all = true;
  opt.step.certifier = certifier;
  try {
    const PlanRun run = run_plan(world, initial, rec.plan, planner, opt);
    rec.outcome = run.outcome;
    rec.n_infeasible = run.infeasible;
    for (std::size_t si = 0; si < run.steps.size(); ++si) {
      for (const auto& rr : run.steps[si].robots) {
        MotionStepRecord m{static_cast<int>(si), rr.query.robot_id, rr.query, rr.certificate, false};
        if (rr.certificate == Certificate::Feasible && rr.plan) {
          m.planner_failed = !execute_single(rr.query, *rr.plan).outcome.ok();
          if (m.planner_failed && static_cast<int>(rec.buffer.size()) < cfg.n_cap)
            rec.buffer.push_back({index, static_cast<int>(si), rr.query, *rr.plan});
        }
        rec.motion_steps.push_back(std::move(m));
      }
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.outcome = Outcome::failure(OutcomeKind::ExecutionErr, e.what());
  }
  rec.reward = task_reward_stage3(static_cast<int>(rec.plan.size()), rec.outcome, reference_len, rec.well_formed,
                                  rec.n_infeasible, cfg);
  return rec;
}

inline RolloutBatch rollout(const WorldSpec& world, const WorldState& initial, int reference_len,
                            const std::vector<PlanCandidate>& plans, MotionPlanner& planner, const RewardConfig& cfg = {},
                            const FrontierConfig& certifier = {}) {
  if (plans.empty()) throw std::invalid_argument("rollout: need at least one plan");
  RolloutBatch batch;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    batch.records.push_back(rollout_one(world, initial, reference_len, plans[i], static_cast<int>(i), planner, cfg, certifier));
    for (const auto& e : batch.records.back().buffer)
      if (static_cast<int>(batch.buffer.size()) < cfg.n_cap) batch.buffer.push_back(e);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json_value(const RewardBreakdown& r) {
  json j{{"r_success", r.r_success},
         {"r_format", r.r_format},
         {"r_efficiency", r.r_efficiency},
         {"r_motion_penalty", r.r_motion_penalty},
         {"total", r.total}};
  if (r.format_error) j["format_error"] = *r.format_error;
  return j;
}

inline json to_json_value(const BufferEntry& e) {
  return {{"plan_index", e.plan_index}, {"step", e.step}, {"query", to_json_value(e.query)}, {"plan", to_json_value(e.plan)}};
}

inline BufferEntry buffer_entry_from_json(const json& j) {
  BufferEntry e;
  e.plan_index = j.at("plan_index").get<int>();
  e.step = j.at("step").get<int>();
  e.query = motion_query_from_json(j.at("query"));
  auto p = parse_waypoint_plan(j.at("plan").dump());
  if (!p) throw std::invalid_argument("buffer entry: bad plan");
  e.plan = *p;
  return e;
}

inline json to_json_value(const RolloutRecord& r) {
  json steps = json::array();
  for (const auto& m : r.motion_steps)
    steps.push_back({{"step", m.step},
                     {"robot_id", m.robot_id},
                     {"start", pose_to_json(m.query.start)},
                     {"target", pose_to_json(m.query.target)},
                     {"carry", m.query.carry},
                     {"certificate", m.certificate == Certificate::Feasible ? "Feasible" : "Infeasible"},
                     {"planner_failed", m.planner_failed}});
  json buf = json::array();
  for (const auto& e : r.buffer) buf.push_back(to_json_value(e));
  json j{{"plan_index", r.plan_index},
         {"plan_text", r.plan_text},
         {"well_formed", r.well_formed},
         {"outcome", to_json_value(r.outcome)},
         {"motion_steps", steps},
         {"n_infeasible", r.n_infeasible},
         {"buffer", buf},
         {"reward", to_json_value(r.reward)}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace mrtamp
