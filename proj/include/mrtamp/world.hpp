#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrtamp/geometry.hpp"
#include "mrtamp/outcome.hpp"

namespace mrtamp {

using json = nlohmann::json;

// Geometric conventions of the point-effector abstraction. Every world carries its own
// copy so a dataset can override them; these defaults are what the generator emits.
struct Tolerances {
  double obstacle_radius = 0.15;
  double obstacle_height = 0.30;
  double reach_radius = 0.80;
  double robot_clearance = 0.06;   // minimum arm-to-arm separation
  double box_rest_z = 0.08;
  double hover_z = 0.10;
  double carry_z = 0.17;
  double grasp_offset = 0.02;      // carried box hangs this far below the effector
  double grasp_tolerance = 0.10;   // box must be this close to the arm to be carried
  double target_tolerance = 0.05;  // arm-at-target and box-at-target threshold
  double sample_step = 0.02;       // clearance sampling and interpolation spacing
  double max_z = 0.5;
  double clearance_sentinel = 10.0;

  // Sampled clearance must exceed half the sample spacing: clearance is 1-Lipschitz in the
  // effector position, so every point between two samples then stays collision-free.
  double sweep_margin() const { return 0.5 * sample_step; }
  friend bool operator==(const Tolerances&, const Tolerances&) = default;
};

struct Cell {
  int col = 0;
  int row = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct RobotSpec {
  int id = 0;
  double base_x = 0.0;
  double base_y = 0.0;
  double reach_radius = 0.8;
  std::array<Cell, 4> home_block{};
  double arm_rest_z = 0.10;

  Vec3 base() const { return {base_x, base_y, 0.0}; }
  Vec3 rest_pose() const { return {base_x, base_y, arm_rest_z}; }
  friend bool operator==(const RobotSpec&, const RobotSpec&) = default;
};

struct ObstacleSpec {
  Cell cell;
  double radius = 0.15;
  double height = 0.30;
  friend bool operator==(const ObstacleSpec&, const ObstacleSpec&) = default;
};

struct BoxSpec {
  int id = 0;
  Cell initial;
  Cell target;
  friend bool operator==(const BoxSpec&, const BoxSpec&) = default;
};

struct WorldSpec {
  int map_cols = 2;
  int map_rows = 2;
  double cell_pitch = 0.5;
  std::vector<RobotSpec> robots;
  std::vector<ObstacleSpec> obstacles;
  std::vector<BoxSpec> boxes;
  std::uint64_t seed = 0;
  Tolerances tol;

  double width() const { return cell_pitch * map_cols; }
  double height() const { return cell_pitch * map_rows; }
  bool in_map(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < map_cols && c.row < map_rows; }
  int cell_index(Cell c) const { return c.row * map_cols + c.col; }
  Cell cell_from_index(int i) const { return {i % map_cols, i / map_cols}; }
  int cell_count() const { return map_cols * map_rows; }

  bool is_obstacle(Cell c) const {
    for (const auto& o : obstacles)
      if (o.cell == c) return true;
    return false;
  }

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

struct WorldState {
  std::vector<Pose> arm_pos;
  std::vector<std::optional<int>> carrying;
  std::vector<Pose> box_pos;
  int step_index = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

// ---------------------------------------------------------------------------
// Lattice

inline Pose cell_center(const WorldSpec& world, int col, int row) {
  if (!world.in_map({col, row}))
    throw std::out_of_range("cell_center: cell (" + std::to_string(col) + ", " + std::to_string(row) +
                            ") outside " + std::to_string(world.map_cols) + "x" +
                            std::to_string(world.map_rows) + " map");
  return {world.cell_pitch * col + 0.5 * world.cell_pitch, world.cell_pitch * row + 0.5 * world.cell_pitch, 0.0};
}

inline Pose cell_center(const WorldSpec& world, Cell c) { return cell_center(world, c.col, c.row); }

// Inverse of cell_center for any point inside the map.
inline std::optional<Cell> cell_of(const WorldSpec& world, Pose p) {
  const Cell c{static_cast<int>(std::floor(p.x / world.cell_pitch)),
               static_cast<int>(std::floor(p.y / world.cell_pitch))};
  if (!world.in_map(c)) return std::nullopt;
  return c;
}

inline bool in_bounds_xy(const WorldSpec& world, Pose p) {
  constexpr double kSlack = 1e-9;
  return p.x >= -kSlack && p.y >= -kSlack && p.x <= world.width() + kSlack && p.y <= world.height() + kSlack;
}

inline bool reachable(const WorldSpec& world, const RobotSpec& robot, Pose p) {
  if (!is_finite(p) || !in_bounds_xy(world, p)) return false;
  return distance_xy(robot.base(), p) <= robot.reach_radius + 1e-9;
}

inline Cylinder obstacle_cylinder(const WorldSpec& world, const ObstacleSpec& o) {
  const Pose c = cell_center(world, o.cell);
  return {c.x, c.y, o.radius, o.height};
}

inline Pose box_rest_pose(const WorldSpec& world, Cell c) {
  Pose p = cell_center(world, c);
  p.z = world.tol.box_rest_z;
  return p;
}

inline Pose hover_pose(const WorldSpec& world, Cell c) {
  Pose p = cell_center(world, c);
  p.z = world.tol.hover_z;
  return p;
}

// Robot whose base sits on grid joint (jc, jr), the shared corner of the 2x2 home block
// with cells (jc-1..jc, jr-1..jr).
inline RobotSpec robot_at_joint(const WorldSpec& world, int id, int jc, int jr) {
  RobotSpec r;
  r.id = id;
  r.base_x = world.cell_pitch * jc;
  r.base_y = world.cell_pitch * jr;
  r.reach_radius = world.tol.reach_radius;
  r.home_block = {Cell{jc - 1, jr - 1}, Cell{jc, jr - 1}, Cell{jc - 1, jr}, Cell{jc, jr}};
  r.arm_rest_z = world.tol.hover_z;
  return r;
}

inline WorldState initial_state(const WorldSpec& world) {
  WorldState s;
  for (const auto& r : world.robots) s.arm_pos.push_back(r.rest_pose());
  s.carrying.assign(world.robots.size(), std::nullopt);
  for (const auto& b : world.boxes) s.box_pos.push_back(box_rest_pose(world, b.initial));
  return s;
}

inline bool box_at_target(const WorldSpec& world, const WorldState& state, int box) {
  return distance_xy(state.box_pos.at(box), cell_center(world, world.boxes.at(box).target)) <=
         world.tol.target_tolerance + 1e-9;
}

inline bool all_boxes_placed(const WorldSpec& world, const WorldState& state) {
  for (std::size_t b = 0; b < world.boxes.size(); ++b)
    if (!box_at_target(world, state, static_cast<int>(b))) return false;
  return true;
}

// Box resting within grasp tolerance of the arm, nearest first; nullopt if none.
inline std::optional<int> box_in_grasp(const WorldSpec& world, const WorldState& state, int robot) {
  std::optional<int> best;
  double best_d = kInfinity;
  const Pose arm = state.arm_pos.at(robot);
  for (std::size_t b = 0; b < state.box_pos.size(); ++b) {
    bool held_by_other = false;
    for (std::size_t r = 0; r < state.carrying.size(); ++r)
      if (static_cast<int>(r) != robot && state.carrying[r] == static_cast<int>(b)) held_by_other = true;
    if (held_by_other) continue;
    const double d = distance(arm, state.box_pos[b]);
    if (d <= world.tol.grasp_tolerance + 1e-9 && d < best_d) {
      best_d = d;
      best = static_cast<int>(b);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Clearance and collision predicates

namespace detail {

// Lower bound on the distance from segment ab to the obstacle (XY projection only).
inline double obstacle_lower_bound(const Cylinder& c, Vec3 a, Vec3 b) {
  return point_segment_distance_xy({c.x, c.y, 0.0}, a, b) - c.radius;
}

inline double arm_obstacle_clearance(const WorldSpec& world, Vec3 base, Vec3 effector, double cap) {
  double best = cap;
  for (const auto& o : world.obstacles) {
    const Cylinder cyl = obstacle_cylinder(world, o);
    if (obstacle_lower_bound(cyl, base, effector) >= best) continue;
    best = std::min(best, segment_signed_distance(cyl, base, effector));
  }
  return best;
}

inline double point_obstacle_clearance(const WorldSpec& world, Vec3 p, double cap) {
  double best = cap;
  for (const auto& o : world.obstacles) {
    const Cylinder cyl = obstacle_cylinder(world, o);
    if (std::hypot(p.x - cyl.x, p.y - cyl.y) - cyl.radius >= best) continue;
    best = std::min(best, signed_distance(cyl, p));
  }
  return best;
}

}  // namespace detail

// Clearance of the effector path a->b: minimum over samples of the distance to the nearest
// obstacle surface (negative inside) and to every other robot's arm segment.
inline double segment_clearance(Pose a, Pose b, const WorldSpec& world, const WorldState& state, int ignore) {
  const double sentinel = world.tol.clearance_sentinel;
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / world.tol.sample_step - 1e-9)));
  double best = sentinel;
  for (int k = 0; k <= n; ++k) {
    const Pose p = lerp(a, b, static_cast<double>(k) / n);
    best = std::min(best, detail::point_obstacle_clearance(world, p, sentinel));
    for (std::size_t r = 0; r < world.robots.size(); ++r) {
      if (static_cast<int>(r) == ignore) continue;
      best = std::min(best, point_segment_distance(p, world.robots[r].base(), state.arm_pos[r]));
    }
  }
  return best;
}

// Clearance of robot `robot` with its effector at p (other arms as in `state`): obstacle
// distance of the arm segment and, when carrying, of the box; arm-to-arm distance minus the
// robot separation threshold. Positive means collision-free.
// Values above `cap` are reported as `cap`.
inline double pose_clearance(const WorldSpec& world, const WorldState& state, int robot, Pose p, bool carry,
                             double cap = kInfinity) {
  const double sentinel = std::min(cap, world.tol.clearance_sentinel);
  const Vec3 base = world.robots.at(robot).base();
  double best = detail::arm_obstacle_clearance(world, base, p, sentinel);
  if (carry) {
    const Pose box = p - Vec3{0.0, 0.0, world.tol.grasp_offset};
    best = std::min(best, detail::point_obstacle_clearance(world, box, sentinel));
  }
  for (std::size_t r = 0; r < world.robots.size(); ++r) {
    if (static_cast<int>(r) == robot) continue;
    const double d = segment_segment_distance(base, p, world.robots[r].base(), state.arm_pos[r]);
    best = std::min(best, d - world.tol.robot_clearance);
  }
  return std::min(best, cap);
}

// Minimum pose clearance over samples of the effector sweep a->b (endpoints included).
inline double sweep_clearance(const WorldSpec& world, const WorldState& state, int robot, Pose a, Pose b,
                              bool carry) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / world.tol.sample_step - 1e-9)));
  double best = world.tol.clearance_sentinel;
  for (int k = 0; k <= n; ++k)
    best = std::min(best, pose_clearance(world, state, robot, lerp(a, b, static_cast<double>(k) / n), carry));
  return best;
}

inline bool sweep_feasible(const WorldSpec& world, const WorldState& state, int robot, Pose a, Pose b,
                           bool carry) {
  const double margin = world.tol.sweep_margin();
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / world.tol.sample_step - 1e-9)));
  for (int k = 0; k <= n; ++k)
    if (pose_clearance(world, state, robot, lerp(a, b, static_cast<double>(k) / n), carry, 2.0 * margin) <= margin)
      return false;
  return true;
}

struct Collision {
  OutcomeKind kind = OutcomeKind::RobObsCollision;
  int robot = -1;
  int other = -1;  // second robot for RobRobCollision, obstacle index for RobObsCollision
  Pose pose;
};

// Full collision report. When `moving` is given, only robots flagged there (and pairs
// involving at least one of them) are checked.
inline std::optional<Collision> detect_collision(const WorldState& state, const WorldSpec& world,
                                                 const std::vector<bool>* moving = nullptr) {
  const std::size_t n = world.robots.size();
  auto active = [&](std::size_t r) { return moving == nullptr || (*moving)[r]; };
  for (std::size_t r = 0; r < n; ++r) {
    if (!active(r)) continue;
    const Vec3 base = world.robots[r].base();
    for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
      const Cylinder cyl = obstacle_cylinder(world, world.obstacles[i]);
      if (detail::obstacle_lower_bound(cyl, base, state.arm_pos[r]) >= 0.0) continue;
      if (segment_signed_distance(cyl, base, state.arm_pos[r]) < 0.0)
        return Collision{OutcomeKind::RobObsCollision, static_cast<int>(r), static_cast<int>(i), state.arm_pos[r]};
    }
    if (state.carrying[r]) {
      const Pose box = state.box_pos.at(*state.carrying[r]);
      for (std::size_t i = 0; i < world.obstacles.size(); ++i)
        if (signed_distance(obstacle_cylinder(world, world.obstacles[i]), box) < 0.0)
          return Collision{OutcomeKind::RobObsCollision, static_cast<int>(r), static_cast<int>(i), state.arm_pos[r]};
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = r + 1; q < n; ++q) {
      if (!active(r) && !active(q)) continue;
      const double d = segment_segment_distance(world.robots[r].base(), state.arm_pos[r], world.robots[q].base(),
                                                state.arm_pos[q]);
      if (d < world.tol.robot_clearance)
        return Collision{OutcomeKind::RobRobCollision, static_cast<int>(r), static_cast<int>(q), state.arm_pos[r]};
    }
  }
  return std::nullopt;
}

inline std::optional<FailureKind> collides(const WorldState& state, const WorldSpec& world) {
  if (auto c = detect_collision(state, world)) return c->kind;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Validation

inline int obstacles_in_window(const WorldSpec& world, int col, int row) {
  int n = 0;
  for (const auto& o : world.obstacles)
    if (o.cell.col >= col && o.cell.col <= col + 1 && o.cell.row >= row && o.cell.row <= row + 1) ++n;
  return n;
}

inline bool obstacle_window_ok(const WorldSpec& world) {
  for (int c = 0; c + 1 < world.map_cols; ++c)
    for (int r = 0; r + 1 < world.map_rows; ++r)
      if (obstacles_in_window(world, c, r) > 2) return false;
  return true;
}

inline bool cell_reachable_by_any(const WorldSpec& world, Cell c) {
  const Pose p = cell_center(world, c);
  for (const auto& r : world.robots)
    if (reachable(world, r, p)) return true;
  return false;
}

// Every violated WorldSpec invariant, in human-readable form; empty when valid.
inline std::vector<std::string> validate(const WorldSpec& world) {
  std::vector<std::string> issues;
  if (world.map_cols < 2 || world.map_cols > 8 || world.map_rows < 2 || world.map_rows > 8)
    issues.push_back("map size outside 2..8");
  for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
    const auto& o = world.obstacles[i];
    if (!world.in_map(o.cell)) issues.push_back("obstacle " + std::to_string(i) + " outside map");
    if (o.radius >= world.cell_pitch / 2) issues.push_back("obstacle " + std::to_string(i) + " radius too large");
    for (std::size_t j = 0; j < i; ++j)
      if (world.obstacles[j].cell == o.cell) issues.push_back("obstacles share a cell");
  }
  if (issues.empty() && !obstacle_window_ok(world)) issues.push_back("2x2 window holds more than two obstacles");
  for (std::size_t i = 0; i < world.robots.size(); ++i) {
    const auto& r = world.robots[i];
    if (r.id != static_cast<int>(i)) issues.push_back("robot ids must equal their index");
    if (!in_bounds_xy(world, r.base())) issues.push_back("robot " + std::to_string(i) + " base outside map");
    for (const Cell c : r.home_block) {
      if (!world.in_map(c) || distance_xy(r.base(), cell_center(world, c)) > r.reach_radius)
        issues.push_back("robot " + std::to_string(i) + " home block not within reach");
    }
  }
  for (std::size_t i = 0; i < world.boxes.size(); ++i) {
    const auto& b = world.boxes[i];
    if (b.id != static_cast<int>(i)) issues.push_back("box ids must equal their index");
    for (const Cell c : {b.initial, b.target}) {
      if (!world.in_map(c)) {
        issues.push_back("box " + std::to_string(i) + " cell outside map");
        continue;
      }
      if (world.is_obstacle(c)) issues.push_back("box " + std::to_string(i) + " cell holds an obstacle");
      if (!cell_reachable_by_any(world, c)) issues.push_back("box " + std::to_string(i) + " cell unreachable");
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// JSON

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

inline json pose_to_json(Vec3 p) { return json::array({round4(p.x), round4(p.y), round4(p.z)}); }
inline Vec3 pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("pose must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(json& j, const Cell& c) { j = json::array({c.col, c.row}); }
inline void from_json(const json& j, Cell& c) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("cell must be [col, row]");
  c = {j[0].get<int>(), j[1].get<int>()};
}

inline void to_json(json& j, const Tolerances& t) {
  j = {{"obstacle_radius", t.obstacle_radius}, {"obstacle_height", t.obstacle_height},
       {"reach_radius", t.reach_radius},       {"robot_clearance", t.robot_clearance},
       {"box_rest_z", t.box_rest_z},           {"hover_z", t.hover_z},
       {"carry_z", t.carry_z},                 {"grasp_offset", t.grasp_offset},
       {"grasp_tolerance", t.grasp_tolerance}, {"target_tolerance", t.target_tolerance},
       {"sample_step", t.sample_step},         {"max_z", t.max_z}};
}
inline void from_json(const json& j, Tolerances& t) {
  t = Tolerances{};
  auto get = [&](const char* key, double& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
  };
  get("obstacle_radius", t.obstacle_radius);
  get("obstacle_height", t.obstacle_height);
  get("reach_radius", t.reach_radius);
  get("robot_clearance", t.robot_clearance);
  get("box_rest_z", t.box_rest_z);
  get("hover_z", t.hover_z);
  get("carry_z", t.carry_z);
  get("grasp_offset", t.grasp_offset);
  get("grasp_tolerance", t.grasp_tolerance);
  get("target_tolerance", t.target_tolerance);
  get("sample_step", t.sample_step);
  get("max_z", t.max_z);
}

inline void to_json(json& j, const RobotSpec& r) {
  j = {{"id", r.id},
       {"base_xy", json::array({round4(r.base_x), round4(r.base_y)})},
       {"reach_radius", round4(r.reach_radius)},
       {"home_block", r.home_block},
       {"arm_rest_z", round4(r.arm_rest_z)}};
}
inline void from_json(const json& j, RobotSpec& r) {
  r.id = j.at("id").get<int>();
  r.base_x = j.at("base_xy").at(0).get<double>();
  r.base_y = j.at("base_xy").at(1).get<double>();
  r.reach_radius = j.at("reach_radius").get<double>();
  r.home_block = j.at("home_block").get<std::array<Cell, 4>>();
  r.arm_rest_z = j.at("arm_rest_z").get<double>();
}

inline void to_json(json& j, const ObstacleSpec& o) {
  j = {{"cell", o.cell}, {"radius", round4(o.radius)}, {"height", round4(o.height)}};
}
inline void from_json(const json& j, ObstacleSpec& o) {
  o.cell = j.at("cell").get<Cell>();
  o.radius = j.at("radius").get<double>();
  o.height = j.at("height").get<double>();
}

inline void to_json(json& j, const BoxSpec& b) { j = {{"id", b.id}, {"initial", b.initial}, {"target", b.target}}; }
inline void from_json(const json& j, BoxSpec& b) {
  b.id = j.at("id").get<int>();
  b.initial = j.at("initial").get<Cell>();
  b.target = j.at("target").get<Cell>();
}

inline void to_json(json& j, const WorldSpec& w) {
  j = {{"map_cols", w.map_cols}, {"map_rows", w.map_rows},   {"cell_pitch", round4(w.cell_pitch)},
       {"robots", w.robots},     {"obstacles", w.obstacles}, {"boxes", w.boxes},
       {"seed", w.seed}};
  if (!(w.tol == Tolerances{})) j["constants"] = w.tol;
}
inline void from_json(const json& j, WorldSpec& w) {
  w.map_cols = j.at("map_cols").get<int>();
  w.map_rows = j.at("map_rows").get<int>();
  w.cell_pitch = j.value("cell_pitch", 0.5);
  w.robots = j.at("robots").get<std::vector<RobotSpec>>();
  w.obstacles = j.at("obstacles").get<std::vector<ObstacleSpec>>();
  w.boxes = j.at("boxes").get<std::vector<BoxSpec>>();
  w.seed = j.value("seed", std::uint64_t{0});
  w.tol = j.contains("constants") ? j.at("constants").get<Tolerances>() : Tolerances{};
}

inline void to_json(json& j, const WorldState& s) {
  json arms = json::array();
  for (const auto& p : s.arm_pos) arms.push_back(pose_to_json(p));
  json boxes = json::array();
  for (const auto& p : s.box_pos) boxes.push_back(pose_to_json(p));
  json carrying = json::array();
  for (const auto& c : s.carrying) carrying.push_back(c ? json(*c) : json(nullptr));
  j = {{"arm_pos", arms}, {"carrying", carrying}, {"box_pos", boxes}, {"step_index", s.step_index}};
}
inline void from_json(const json& j, WorldState& s) {
  s = WorldState{};
  for (const auto& p : j.at("arm_pos")) s.arm_pos.push_back(pose_from_json(p));
  for (const auto& p : j.at("box_pos")) s.box_pos.push_back(pose_from_json(p));
  for (const auto& c : j.at("carrying")) s.carrying.push_back(c.is_null() ? std::nullopt : std::optional<int>(c.get<int>()));
  s.step_index = j.value("step_index", 0);
}

// Canonical world document: {"spec": ..., "state": ...}.
inline json world_document(const WorldSpec& world, const WorldState& state) {
  return {{"spec", world}, {"state", state}};
}

}  // namespace mrtamp
