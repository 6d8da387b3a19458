#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrtamp/rng.hpp"
#include "mrtamp/sim.hpp"
#include "mrtamp/world.hpp"

namespace mrtamp {

struct FrontierConfig {
  double w_goal = 1.0;
  double w_work = 1.0;
  double w_clear = 0.5;
  int r_min = 1;  // Chebyshev shell radii, in lattice cells
  int r_max = 3;
  int max_depth = 24;
  int max_expansions = 5000;
  int max_stall = 400;
  int min_chain = 1;
  double lattice_pitch = 0.25;
  std::vector<double> z_levels{0.10, 0.17, 0.25};
  double clearance_threshold = 0.05;  // delta_c
  double stall_epsilon = 0.01;

  void validate() const {
    if (r_min < 1 || r_max < r_min) throw std::invalid_argument("FrontierConfig: need 1 <= r_min <= r_max");
    if (max_depth <= 0 || max_expansions <= 0 || max_stall <= 0 || min_chain <= 0)
      throw std::invalid_argument("FrontierConfig: budgets must be positive");
    if (!(lattice_pitch > 0.0) || z_levels.empty()) throw std::invalid_argument("FrontierConfig: bad lattice");
  }
};

// One robot's motion problem with the rest of the world frozen at `view`.
struct MotionQuery {
  int robot_id = 0;
  Pose start;
  Pose target;
  bool carry = false;
  WorldSpec world;
  WorldState view;
};

inline MotionQuery make_query(const WorldSpec& world, const WorldState& state, const RobotCommand& cmd) {
  MotionQuery q;
  q.robot_id = cmd.robot_id;
  q.start = state.arm_pos.at(cmd.robot_id);
  q.target = cmd.target;
  q.carry = cmd.carry;
  q.world = world;
  q.view = state;
  return q;
}

struct PathPoint {
  Pose pose;
  double clearance = 0.0;
};

// w_goal * (length so far + straight remainder) + w_work * |head - target|
//   + w_clear * sum_nodes max(0, delta_c - clearance) / delta_c
inline double priority(std::span<const PathPoint> path, Pose target, const FrontierConfig& cfg) {
  if (path.empty()) throw std::invalid_argument("priority: empty path");
  double len = 0.0;
  double penalty = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) len += distance(path[i - 1].pose, path[i].pose);
    penalty += std::max(0.0, cfg.clearance_threshold - path[i].clearance) / cfg.clearance_threshold;
  }
  const double remainder = distance(path.back().pose, target);
  return cfg.w_goal * (len + remainder) + cfg.w_work * remainder + cfg.w_clear * penalty;
}

enum class MotionStatus { Feasible, Infeasible, InvalidQuery };

inline std::string_view to_string(MotionStatus s) {
  switch (s) {
    case MotionStatus::Feasible: return "Feasible";
    case MotionStatus::Infeasible: return "Infeasible";
    case MotionStatus::InvalidQuery: return "InvalidQuery";
  }
  return "?";
}

struct MotionSearchResult {
  MotionStatus status = MotionStatus::Infeasible;
  std::optional<WaypointPlan> plan;
  int expansions = 0;
  std::string reason;
};

class InvalidQueryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Discrete candidate poses: XY lattice at `lattice_pitch` over the map, times the z levels.
class PoseLattice {
 public:
  PoseLattice(const WorldSpec& world, const FrontierConfig& cfg)
      : pitch_(cfg.lattice_pitch), z_(cfg.z_levels) {
    nx_ = static_cast<int>(std::floor(world.width() / pitch_ + 1e-9)) + 1;
    ny_ = static_cast<int>(std::floor(world.height() / pitch_ + 1e-9)) + 1;
  }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return static_cast<int>(z_.size()); }
  int size() const { return nx_ * ny_ * nz(); }
  bool contains(int ix, int iy, int iz) const {
    return ix >= 0 && iy >= 0 && iz >= 0 && ix < nx_ && iy < ny_ && iz < nz();
  }
  int index(int ix, int iy, int iz) const { return (iz * ny_ + iy) * nx_ + ix; }
  Pose pose(int ix, int iy, int iz) const { return {ix * pitch_, iy * pitch_, z_[iz]}; }
  Pose pose(int index) const {
    const int ix = index % nx_;
    const int iy = (index / nx_) % ny_;
    return pose(ix, iy, index / (nx_ * ny_));
  }
  // Nearest lattice coordinates to an arbitrary pose.
  std::array<int, 3> snap(Pose p) const {
    int iz = 0;
    for (int k = 1; k < nz(); ++k)
      if (std::abs(z_[k] - p.z) < std::abs(z_[iz] - p.z)) iz = k;
    return {static_cast<int>(std::lround(p.x / pitch_)), static_cast<int>(std::lround(p.y / pitch_)), iz};
  }

 private:
  double pitch_;
  std::vector<double> z_;
  int nx_ = 0;
  int ny_ = 0;
};

// Shell offsets at Chebyshev radius r, lexicographic in (dx, dy).
inline std::vector<std::array<int, 2>> shell_offsets(int r) {
  std::vector<std::array<int, 2>> out;
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      if (std::max(std::abs(dx), std::abs(dy)) == r) out.push_back({dx, dy});
  return out;
}

// Priority-guided frontier expansion over lattice poses. Returns the first path whose head
// connects to the target by a collision-free straight edge.
inline MotionSearchResult search(const MotionQuery& q, const FrontierConfig& cfg = {}) {
  cfg.validate();
  const WorldSpec& world = q.world;
  MotionSearchResult res;
  if (q.robot_id < 0 || q.robot_id >= static_cast<int>(world.robots.size())) {
    res.status = MotionStatus::InvalidQuery;
    res.reason = "unknown robot";
    return res;
  }
  const RobotSpec& robot = world.robots[q.robot_id];
  if (!reachable(world, robot, q.start) || !reachable(world, robot, q.target) ||
      !pose_in_workspace(world, robot, q.start) || !pose_in_workspace(world, robot, q.target)) {
    res.status = MotionStatus::InvalidQuery;
    res.reason = "start or target outside robot reach";
    return res;
  }

  WorldState view = q.view;
  view.arm_pos.at(q.robot_id) = q.start;
  const PoseLattice lattice(world, cfg);
  const double margin = world.tol.sweep_margin();
  // Clearance only matters below 2 * delta_c (penalty and wide-shell gating).
  const double cap = 2.0 * cfg.clearance_threshold + 0.01;
  if (pose_clearance(world, view, q.robot_id, q.target, q.carry, cap) <= margin) {
    res.reason = "target pose in collision";
    return res;
  }

  struct Node {
    int lattice = -1;  // -1 for the start pose
    Pose pose;
    double clearance;
    int parent;
    int depth;  // nodes in the chain, start included
    double length;
    double penalty;
  };
  std::vector<Node> nodes;
  auto penalty_of = [&](double c) { return std::max(0.0, cfg.clearance_threshold - c) / cfg.clearance_threshold; };
  auto prio = [&](const Node& n) {
    const double rem = distance(n.pose, q.target);
    return cfg.w_goal * (n.length + rem) + cfg.w_work * rem + cfg.w_clear * n.penalty;
  };

  struct Entry {
    double priority;
    std::uint64_t seq;
    int node;
    bool operator>(const Entry& o) const { return priority != o.priority ? priority > o.priority : seq > o.seq; }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::uint64_t seq = 0;

  std::vector<double> node_clearance(lattice.size(), std::nan(""));
  std::vector<char> closed(lattice.size(), 0);
  auto clearance_at = [&](int li) {
    if (std::isnan(node_clearance[li])) node_clearance[li] = pose_clearance(world, view, q.robot_id, lattice.pose(li), q.carry, cap);
    return node_clearance[li];
  };

  const double c0 = pose_clearance(world, view, q.robot_id, q.start, q.carry, cap);
  nodes.push_back({-1, q.start, c0, -1, 1, 0.0, penalty_of(c0)});
  open.push({prio(nodes[0]), seq++, 0});

  auto finish = [&](int head) {
    std::vector<Pose> pts;
    for (int i = head; i >= 0; i = nodes[i].parent) pts.push_back(nodes[i].pose);
    std::reverse(pts.begin(), pts.end());
    if (distance(pts.back(), q.target) > 1e-9) pts.push_back(q.target);
    res.status = MotionStatus::Feasible;
    res.plan = WaypointPlan{q.robot_id, std::move(pts)};
    return res;
  };

  bool start_closed = false;
  double best_dist = kInfinity;
  int stall = 0;
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    const Node head = nodes[e.node];
    if (head.lattice < 0) {
      if (start_closed) continue;
      start_closed = true;
    } else {
      if (closed[head.lattice]) continue;
      closed[head.lattice] = 1;
    }
    if (++res.expansions > cfg.max_expansions) {
      res.reason = "expansion budget exhausted";
      return res;
    }
    const double dist = distance(head.pose, q.target);
    if (dist < best_dist - cfg.stall_epsilon) {
      best_dist = dist;
      stall = 0;
    } else if (++stall > cfg.max_stall) {
      res.reason = "stalled";
      return res;
    }

    if (head.depth >= cfg.min_chain && sweep_feasible(world, view, q.robot_id, head.pose, q.target, q.carry))
      return finish(e.node);
    if (head.depth >= cfg.max_depth) continue;

    const auto [hx, hy, hz_unused] = lattice.snap(head.pose);
    (void)hz_unused;
    const int r_hi = head.clearance >= 2.0 * cfg.clearance_threshold ? cfg.r_max : cfg.r_min;
    for (int r = cfg.r_min; r <= r_hi; ++r) {
      for (int iz = 0; iz < lattice.nz(); ++iz) {
        for (const auto& [dx, dy] : shell_offsets(r)) {
          const int ix = hx + dx;
          const int iy = hy + dy;
          if (!lattice.contains(ix, iy, iz)) continue;
          const int li = lattice.index(ix, iy, iz);
          if (closed[li]) continue;
          const Pose p = lattice.pose(li);
          if (!reachable(world, robot, p)) continue;
          const double c = clearance_at(li);
          if (c <= margin) continue;
          if (!sweep_feasible(world, view, q.robot_id, head.pose, p, q.carry)) continue;
          Node child{li, p, c, e.node, head.depth + 1, head.length + distance(head.pose, p), head.penalty + penalty_of(c)};
          nodes.push_back(child);
          open.push({prio(child), seq++, static_cast<int>(nodes.size()) - 1});
        }
      }
    }
  }
  res.reason = "frontier exhausted";
  return res;
}

enum class Certificate { Feasible, Infeasible };

inline Certificate certify(const MotionQuery& q, const FrontierConfig& cfg = {}) {
  const MotionSearchResult r = search(q, cfg);
  if (r.status == MotionStatus::InvalidQuery) throw InvalidQueryError(r.reason);
  return r.status == MotionStatus::Feasible ? Certificate::Feasible : Certificate::Infeasible;
}

// ---------------------------------------------------------------------------
// Motion planners

struct MotionResponse {
  std::optional<WaypointPlan> plan;
  std::string error;  // set when the planner produced no usable plan
  std::string raw;    // raw text, when the planner is text-based
};

class MotionPlanner {
 public:
  virtual ~MotionPlanner() = default;
  virtual MotionResponse plan(const MotionQuery& q) = 0;
  // Oracle planners return exactly what search() returns, letting callers reuse the
  // certification run.
  virtual bool is_oracle() const { return false; }
  virtual std::string name() const = 0;
};

class OracleMotionPlanner final : public MotionPlanner {
 public:
  explicit OracleMotionPlanner(FrontierConfig cfg = {}) : cfg_(std::move(cfg)) {}
  MotionResponse plan(const MotionQuery& q) override {
    auto r = search(q, cfg_);
    if (r.plan) return {std::move(r.plan), {}, {}};
    return {std::nullopt, "motion search: " + r.reason, {}};
  }
  bool is_oracle() const override { return true; }
  std::string name() const override { return "oracle"; }
  const FrontierConfig& config() const { return cfg_; }

 private:
  FrontierConfig cfg_;
};

// Two-waypoint plan: straight from start to target, no obstacle awareness.
class StraightLineMotionPlanner final : public MotionPlanner {
 public:
  MotionResponse plan(const MotionQuery& q) override {
    WaypointPlan p{q.robot_id, {q.start}};
    if (distance(q.start, q.target) > 1e-9) p.waypoints.push_back(q.target);
    return {p, {}, {}};
  }
  std::string name() const override { return "straight"; }
};

inline std::uint64_t query_hash(const MotionQuery& q) {
  auto mix = [](std::uint64_t h, double v) {
    return splitmix64(h ^ static_cast<std::uint64_t>(std::llround(v * 1e4) + 0x4000000000LL));
  };
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(q.robot_id) + 17);
  for (double v : {q.start.x, q.start.y, q.start.z, q.target.x, q.target.y, q.target.z}) h = mix(h, v);
  h = mix(h, q.carry ? 1.0 : 0.0);
  for (const auto& a : q.view.arm_pos) h = mix(mix(mix(h, a.x), a.y), a.z);
  return h;
}

// Wraps another planner and, for a deterministic pseudo-random fraction of queries, returns
// a plan whose final waypoint is displaced away from the target so that execution fails.
class FaultInjectingMotionPlanner final : public MotionPlanner {
 public:
  FaultInjectingMotionPlanner(MotionPlanner& inner, double fail_rate, std::uint64_t seed)
      : inner_(inner), rate_(fail_rate), seed_(seed) {}

  bool will_fault(const MotionQuery& q) const {
    CounterRng rng(seed_, {query_hash(q)});
    return rng.bernoulli(rate_);
  }

  MotionResponse plan(const MotionQuery& q) override {
    MotionResponse r = inner_.plan(q);
    if (!r.plan || !will_fault(q)) return r;
    auto& wps = r.plan->waypoints;
    const RobotSpec& robot = q.world.robots.at(q.robot_id);
    Pose off = q.target;
    const Vec3 radial = q.target - robot.base();
    const double rn = std::hypot(radial.x, radial.y);
    // Pull the endpoint 0.12 toward the base (stays reachable, misses the 0.05 tolerance).
    if (rn > 0.2) {
      off.x -= 0.12 * radial.x / rn;
      off.y -= 0.12 * radial.y / rn;
    } else {
      off.z = q.target.z + 0.12 <= q.world.tol.max_z ? q.target.z + 0.12 : q.target.z - 0.12;
    }
    if (wps.size() >= 2 && distance(wps[wps.size() - 2], off) <= 1e-9) wps.pop_back();
    wps.back() = off;
    if (wps.size() >= 2 && distance(wps[wps.size() - 2], wps.back()) <= 1e-9) wps.pop_back();
    return r;
  }
  std::string name() const override { return "faulty(" + inner_.name() + ")"; }

 private:
  MotionPlanner& inner_;
  double rate_;
  std::uint64_t seed_;
};

// Executes one robot's waypoint plan alone on the query's frozen view.
inline StepResult execute_single(const MotionQuery& q, const WaypointPlan& plan) {
  TaskStep step{{q.robot_id, q.target, q.carry}};
  WorldState s = q.view;
  s.arm_pos.at(q.robot_id) = q.start;
  return execute_step(s, q.world, step, {{q.robot_id, plan}});
}

inline json to_json_value(const MotionQuery& q) {
  return {{"robot_id", q.robot_id},
          {"start", pose_to_json(q.start)},
          {"target", pose_to_json(q.target)},
          {"carry", q.carry},
          {"world", world_document(q.world, q.view)}};
}

inline MotionQuery motion_query_from_json(const json& j) {
  MotionQuery q;
  q.robot_id = j.at("robot_id").get<int>();
  q.start = pose_from_json(j.at("start"));
  q.target = pose_from_json(j.at("target"));
  q.carry = j.at("carry").get<bool>();
  q.world = j.at("world").at("spec").get<WorldSpec>();
  q.view = j.at("world").at("state").get<WorldState>();
  return q;
}

// Wire form {robot_id, waypoints: [[x, y, z], ...]}; nullopt on any schema violation.
inline std::optional<WaypointPlan> parse_waypoint_plan(const std::string& text, std::string* error = nullptr) {
  auto fail = [&](std::string msg) {
    if (error) *error = std::move(msg);
    return std::nullopt;
  };
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return fail("waypoint plan is not valid JSON");
  if (!j.is_object() || !j.contains("robot_id") || !j.contains("waypoints")) return fail("missing robot_id or waypoints");
  if (!j["robot_id"].is_number_integer() || !j["waypoints"].is_array()) return fail("bad field types");
  WaypointPlan p;
  p.robot_id = j["robot_id"].get<int>();
  for (const auto& w : j["waypoints"]) {
    if (!w.is_array() || w.size() != 3) return fail("waypoint must be [x, y, z]");
    for (const auto& v : w)
      if (!v.is_number()) return fail("waypoint coordinates must be numbers");
    p.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
  }
  if (p.waypoints.empty()) return fail("empty waypoint list");
  return p;
}

}  // namespace mrtamp
