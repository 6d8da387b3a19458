#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrtamp/world.hpp"

namespace mrtamp {

struct RobotCommand {
  int robot_id = 0;
  Pose target;
  bool carry = false;  // transport the box under the arm and release it at target
  friend bool operator==(const RobotCommand&, const RobotCommand&) = default;
};

// One task step: the active robots and their commands; robots not listed stay put.
using TaskStep = std::vector<RobotCommand>;
using TaskPlan = std::vector<TaskStep>;

struct WaypointPlan {
  int robot_id = 0;
  std::vector<Pose> waypoints;
  friend bool operator==(const WaypointPlan&, const WaypointPlan&) = default;
};

using Trajectory = std::vector<Pose>;

class EmptyPlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void sort_step(TaskStep& step) {
  std::sort(step.begin(), step.end(), [](const auto& a, const auto& b) { return a.robot_id < b.robot_id; });
}

inline double path_length(const std::vector<Pose>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

// Number of sampling intervals covering a segment of length `len` at spacing <= step.
inline int interval_count(double len, double step) {
  if (len <= 0.0) return 0;
  return std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
}

// Piecewise-linear samples along consecutive waypoints at spacing <= step. Each waypoint
// appears exactly once.
inline Trajectory interpolate(const std::vector<Pose>& waypoints, double step) {
  if (waypoints.empty()) throw EmptyPlanError("interpolate: plan has no waypoints");
  if (!(step > 0.0)) throw std::invalid_argument("interpolate: step must be positive");
  Trajectory out{waypoints.front()};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const Pose a = waypoints[i - 1];
    const Pose b = waypoints[i];
    const int n = interval_count(distance(a, b), step);
    for (int k = 1; k < n; ++k) out.push_back(lerp(a, b, static_cast<double>(k) / n));
    if (n > 0) out.push_back(b);
  }
  return out;
}

inline Trajectory interpolate(const WaypointPlan& plan, double step) { return interpolate(plan.waypoints, step); }

namespace detail {

// Polyline parameterised by normalised arc length.
class Polyline {
 public:
  explicit Polyline(std::vector<Pose> pts) : pts_(std::move(pts)) {
    cum_.push_back(0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) cum_.push_back(cum_.back() + distance(pts_[i - 1], pts_[i]));
  }
  double length() const { return cum_.back(); }
  const std::vector<Pose>& points() const { return pts_; }

  Pose at(double u) const {
    if (u >= 1.0 || length() <= 0.0) return pts_.back();
    if (u <= 0.0) return pts_.front();
    const double s = u * length();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    const std::size_t i = static_cast<std::size_t>(std::distance(cum_.begin(), it));
    const double seg = cum_[i] - cum_[i - 1];
    return seg <= 0.0 ? pts_[i] : lerp(pts_[i - 1], pts_[i], (s - cum_[i - 1]) / seg);
  }

  int intervals(double step) const {
    int n = 0;
    for (std::size_t i = 1; i < pts_.size(); ++i) n += interval_count(distance(pts_[i - 1], pts_[i]), step);
    return n;
  }

 private:
  std::vector<Pose> pts_;
  std::vector<double> cum_;
};

inline std::string fmt_pose(Pose p) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "[" << p.x << ", " << p.y << ", " << p.z << "]";
  return os.str();
}

}  // namespace detail

inline bool pose_in_workspace(const WorldSpec& world, const RobotSpec& robot, Pose p) {
  if (!is_finite(p) || p.z < 0.0 || p.z > world.tol.max_z) return false;
  const double r = robot.reach_radius;
  return p.x >= -r && p.y >= -r && p.x <= world.width() + r && p.y <= world.height() + r;
}

// Checks a waypoint plan against its own invariants for the given robot.
inline std::optional<std::string> waypoint_plan_error(const WorldSpec& world, const WaypointPlan& plan) {
  if (plan.robot_id < 0 || plan.robot_id >= static_cast<int>(world.robots.size())) return "unknown robot id";
  if (plan.waypoints.empty()) return "empty waypoint plan";
  const RobotSpec& robot = world.robots[plan.robot_id];
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    const Pose p = plan.waypoints[i];
    if (!pose_in_workspace(world, robot, p)) return "waypoint " + std::to_string(i) + " outside workspace";
    if (!reachable(world, robot, p)) return "waypoint " + std::to_string(i) + " outside robot reach";
    if (i > 0 && distance(p, plan.waypoints[i - 1]) <= 1e-9) return "consecutive waypoints coincide";
  }
  return std::nullopt;
}

struct TrajectoryRow {
  int tick = 0;
  int robot_id = 0;
  Pose p;
  bool carrying = false;
};

inline std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::ostringstream os;
  os << "tick,robot_id,x,y,z,carrying\n";
  os.setf(std::ios::fixed);
  os.precision(4);
  for (const auto& r : rows) os << r.tick << ',' << r.robot_id << ',' << r.p.x << ',' << r.p.y << ',' << r.p.z << ',' << (r.carrying ? 1 : 0) << '\n';
  return os.str();
}

struct StepResult {
  WorldState state;
  Outcome outcome;
};

// Advances all commanded robots along their waypoint plans on a shared, time-normalised
// tick clock. A failing step returns `state` unchanged.
inline StepResult execute_step(const WorldState& state, const WorldSpec& world, const TaskStep& commands,
                               const std::map<int, WaypointPlan>& motion, std::vector<TrajectoryRow>* dump = nullptr) {
  const int step_no = state.step_index;
  auto fail = [&](OutcomeKind kind, std::string detail, std::optional<Pose> pose = std::nullopt,
                  std::vector<int> robots = {}) {
    return StepResult{state, Outcome::failure(kind, std::move(detail), step_no, pose, std::move(robots))};
  };

  const std::size_t nr = world.robots.size();
  std::vector<bool> active(nr, false);
  for (const auto& cmd : commands) {
    if (cmd.robot_id < 0 || cmd.robot_id >= static_cast<int>(nr))
      return fail(OutcomeKind::ExecutionErr, "unknown robot " + std::to_string(cmd.robot_id));
    if (active[cmd.robot_id])
      return fail(OutcomeKind::ExecutionErr, "robot commanded twice in one step", std::nullopt, {cmd.robot_id});
    active[cmd.robot_id] = true;
    if (!is_finite(cmd.target) || !in_bounds_xy(world, cmd.target) || cmd.target.z < 0.0 || cmd.target.z > world.tol.max_z)
      return fail(OutcomeKind::ExecutionErr, "command target outside map", cmd.target, {cmd.robot_id});
  }

  WorldState work = state;
  std::vector<std::optional<detail::Polyline>> paths(nr);
  int intervals = 0;
  for (const auto& cmd : commands) {
    const int r = cmd.robot_id;
    auto it = motion.find(r);
    if (it == motion.end())
      return fail(OutcomeKind::ExecutionErr, "no waypoint plan for robot " + std::to_string(r), std::nullopt, {r});
    if (it->second.robot_id != r)
      return fail(OutcomeKind::ExecutionErr, "waypoint plan robot mismatch", std::nullopt, {r});
    if (auto err = waypoint_plan_error(world, it->second))
      return fail(OutcomeKind::ExecutionErr, "Robot " + std::to_string(r) + " " + *err, std::nullopt, {r});
    if (cmd.carry) {
      auto box = box_in_grasp(world, state, r);
      if (!box)
        return fail(OutcomeKind::ExecutionErr, "Robot " + std::to_string(r) + " has no box within grasp tolerance",
                    state.arm_pos[r], {r});
      work.carrying[r] = *box;
      work.box_pos[*box] = state.arm_pos[r] - Vec3{0.0, 0.0, world.tol.grasp_offset};
    }
    std::vector<Pose> pts{state.arm_pos[r]};
    for (const auto& w : it->second.waypoints)
      if (distance(w, pts.back()) > 1e-9) pts.push_back(w);
    paths[r].emplace(std::move(pts));
    intervals = std::max(intervals, paths[r]->intervals(world.tol.sample_step));
  }

  for (int tick = 0; tick <= intervals; ++tick) {
    const double u = intervals == 0 ? 1.0 : static_cast<double>(tick) / intervals;
    for (std::size_t r = 0; r < nr; ++r) {
      if (!paths[r]) continue;
      work.arm_pos[r] = paths[r]->at(u);
      if (work.carrying[r]) work.box_pos[*work.carrying[r]] = work.arm_pos[r] - Vec3{0.0, 0.0, world.tol.grasp_offset};
    }
    if (dump) {
      for (std::size_t r = 0; r < nr; ++r)
        dump->push_back({tick, static_cast<int>(r), work.arm_pos[r], work.carrying[r].has_value()});
    }
    if (auto c = detect_collision(work, world, &active)) {
      if (c->kind == OutcomeKind::RobObsCollision)
        return fail(c->kind, "Robot " + std::to_string(c->robot) + " hits obstacle " + std::to_string(c->other),
                    c->pose, {c->robot});
      return fail(c->kind, "Robot " + std::to_string(c->robot) + " and Robot " + std::to_string(c->other) + " collide",
                  c->pose, {c->robot, c->other});
    }
  }

  for (const auto& cmd : commands) {
    const int r = cmd.robot_id;
    const double miss = distance(work.arm_pos[r], cmd.target);
    if (miss > world.tol.target_tolerance + 1e-9) {
      std::ostringstream os;
      os.precision(3);
      os << "Robot " << r << " ended " << miss << " from target";
      return fail(OutcomeKind::FarFromTarget, os.str(), work.arm_pos[r], {r});
    }
  }
  for (const auto& cmd : commands) {
    const int r = cmd.robot_id;
    if (!work.carrying[r]) continue;
    Pose& box = work.box_pos[*work.carrying[r]];
    box = {work.arm_pos[r].x, work.arm_pos[r].y, world.tol.box_rest_z};
    work.carrying[r].reset();
  }
  work.step_index = state.step_index + 1;
  return {std::move(work), Outcome::success(step_no)};
}

// First failing step outcome wins; otherwise Success iff every box sits on its target.
inline Outcome classify_episode(const std::vector<Outcome>& trace, const WorldState& final_state, const WorldSpec& world) {
  if (trace.empty()) throw std::invalid_argument("classify_episode: empty trace");
  for (const auto& o : trace)
    if (!o.ok()) return o;
  for (std::size_t b = 0; b < world.boxes.size(); ++b) {
    if (!box_at_target(world, final_state, static_cast<int>(b)))
      return Outcome::failure(OutcomeKind::TaskIncomplete, "Object " + std::to_string(b) + " not at target",
                              trace.back().at_step, final_state.box_pos[b]);
  }
  Outcome ok = Outcome::success(trace.back().at_step);
  return ok;
}

inline json to_json_value(const WaypointPlan& p) {
  json wps = json::array();
  for (const auto& w : p.waypoints) wps.push_back(pose_to_json(w));
  return {{"robot_id", p.robot_id}, {"waypoints", wps}};
}

inline json to_json_value(const Outcome& o) {
  json j = {{"kind", std::string(to_string(o.kind))}, {"detail", o.detail}, {"at_step", o.at_step}};
  if (o.at_pose) j["at_pose"] = pose_to_json(*o.at_pose);
  if (!o.robots.empty()) j["robots"] = o.robots;
  return j;
}

inline Outcome outcome_from_json(const json& j) {
  Outcome o;
  o.kind = outcome_kind_from_string(j.at("kind").get<std::string>());
  o.detail = j.value("detail", "");
  o.at_step = j.value("at_step", -1);
  if (j.contains("at_pose")) o.at_pose = pose_from_json(j.at("at_pose"));
  if (j.contains("robots")) o.robots = j.at("robots").get<std::vector<int>>();
  return o;
}

inline json to_json_value(const TaskStep& step) {
  json arr = json::array();
  for (const auto& c : step) arr.push_back({{"robot_id", c.robot_id}, {"target", pose_to_json(c.target)}, {"carry", c.carry}});
  return arr;
}

inline TaskStep task_step_from_json(const json& j) {
  TaskStep step;
  for (const auto& c : j) step.push_back({c.at("robot_id").get<int>(), pose_from_json(c.at("target")), c.at("carry").get<bool>()});
  return step;
}

}  // namespace mrtamp
