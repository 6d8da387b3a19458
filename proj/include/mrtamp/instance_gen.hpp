#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrtamp/motion.hpp"
#include "mrtamp/rng.hpp"
#include "mrtamp/task_search.hpp"
#include "mrtamp/world.hpp"

namespace mrtamp {

enum class Variant { Standard, UnseenMap, UnseenLayout, Motion2x2 };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Standard: return "standard";
    case Variant::UnseenMap: return "unseen_map";
    case Variant::UnseenLayout: return "unseen_layout";
    case Variant::Motion2x2: return "motion_2x2";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  for (auto v : {Variant::Standard, Variant::UnseenMap, Variant::UnseenLayout, Variant::Motion2x2})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown variant: " + std::string(s));
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenConfig {
  Variant variant = Variant::Standard;
  int min_cols = 2, max_cols = 4;
  int min_rows = 2, max_rows = 4;
  int min_robots = 1, max_robots = 9;
  int min_boxes = 1, max_boxes = 6;
  int min_obstacles = 1, max_obstacles = 8;
  std::uint64_t seed = 0;
  int count = 0;           // instances in the dataset; 0 = unbounded
  int per_config_cap = 5;  // instances per (size, robots, boxes) configuration
  int max_attempts = 50;   // consecutive unsolvable draws before BudgetExhausted
  double sft_fraction = 0.5;
  double crossing_fraction = 0.6;  // motion_2x2: draws built to straddle an obstacle
  TaskSearchConfig search;

  // Test split defaults: 480 instances, at most 5 per configuration.
  static GenConfig test_split(std::uint64_t seed = 42) {
    GenConfig c;
    c.seed = seed;
    c.count = 480;
    c.per_config_cap = 5;
    return c;
  }
  static GenConfig train_split(std::uint64_t seed = 7) {
    GenConfig c;
    c.seed = seed;
    c.count = 3400;
    c.per_config_cap = 50;
    return c;
  }
  static GenConfig motion(std::uint64_t seed = 1) {
    GenConfig c;
    c.variant = Variant::Motion2x2;
    c.seed = seed;
    c.min_cols = c.max_cols = c.min_rows = c.max_rows = 2;
    c.min_robots = c.max_robots = 1;
    c.min_obstacles = 0;
    c.max_obstacles = 2;
    c.min_boxes = c.max_boxes = 0;
    return c;
  }
};

// One cell of the dataset grid.
struct SizeConfig {
  int cols = 2;
  int rows = 2;
  int robots = 1;
  int boxes = 1;
  friend bool operator==(const SizeConfig&, const SizeConfig&) = default;
};

inline std::vector<std::pair<int, int>> map_sizes(const GenConfig& cfg) {
  std::vector<std::pair<int, int>> out;
  switch (cfg.variant) {
    case Variant::UnseenMap: out = {{2, 5}, {8, 2}}; break;
    case Variant::UnseenLayout: out = {{3, 3}, {4, 4}}; break;
    case Variant::Motion2x2: out = {{2, 2}}; break;
    case Variant::Standard:
      for (int c = cfg.min_cols; c <= cfg.max_cols; ++c)
        for (int r = cfg.min_rows; r <= cfg.max_rows; ++r) out.push_back({c, r});
      break;
  }
  return out;
}

inline std::vector<SizeConfig> size_configs(const GenConfig& cfg) {
  std::vector<SizeConfig> out;
  for (auto [c, r] : map_sizes(cfg)) {
    const int slots = (c - 1) * (r - 1);
    for (int nr = cfg.min_robots; nr <= std::min(cfg.max_robots, slots); ++nr)
      for (int nb = cfg.min_boxes; nb <= std::min(cfg.max_boxes, c * r / 2); ++nb) out.push_back({c, r, nr, nb});
  }
  return out;
}

inline void validate(const GenConfig& cfg) {
  if (cfg.variant == Variant::Motion2x2) {
    if (cfg.min_obstacles < 0 || cfg.max_obstacles > 2 || cfg.min_obstacles > cfg.max_obstacles)
      throw ConfigError("motion_2x2 uses 0..2 obstacles");
    return;
  }
  if (cfg.min_cols < 2 || cfg.max_cols > 8 || cfg.min_rows < 2 || cfg.max_rows > 8 || cfg.min_cols > cfg.max_cols ||
      cfg.min_rows > cfg.max_rows)
    throw ConfigError("map size range outside 2..8");
  if (cfg.variant == Variant::Standard && (cfg.max_cols > 4 || cfg.max_rows > 4))
    throw ConfigError("standard variant uses 2..4 cells per side");
  if (cfg.min_robots < 1 || cfg.max_robots > 9 || cfg.min_robots > cfg.max_robots)
    throw ConfigError("robot count range outside 1..9");
  if (cfg.min_boxes < 1 || cfg.max_boxes > 6 || cfg.min_boxes > cfg.max_boxes)
    throw ConfigError("box count range outside 1..6");
  if (cfg.min_obstacles < 0 || cfg.max_obstacles > 8 || cfg.min_obstacles > cfg.max_obstacles)
    throw ConfigError("obstacle count range outside 0..8");
  if (cfg.max_attempts < 1 || cfg.per_config_cap < 1) throw ConfigError("attempts and per-config cap must be positive");
  const auto grid = size_configs(cfg);
  if (grid.empty()) throw ConfigError("no configuration satisfies the ranges");
  if (cfg.count > 0 && static_cast<long long>(cfg.count) > static_cast<long long>(grid.size()) * cfg.per_config_cap)
    throw ConfigError("count " + std::to_string(cfg.count) + " exceeds " + std::to_string(grid.size()) +
                      " configurations x cap " + std::to_string(cfg.per_config_cap));
}

struct TaskInstance {
  int id = 0;
  Variant variant = Variant::Standard;
  SizeConfig config;
  WorldSpec world;
  WorldState initial;
  TaskPlan reference_plan;
  int reference_len = 0;
  bool sft_visible = false;
  int attempts = 1;
};

struct MotionInstance {
  int id = 0;
  MotionQuery query;
  WaypointPlan reference;
  bool crossing = false;  // straight start->goal line has negative clearance
  int attempts = 1;
};

namespace detail {

constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;
constexpr std::uint64_t kVerifySalt = 0x7665726966790001ULL;
constexpr std::uint64_t kSftStream = 0x736674ULL;

inline double quantize(double v, double q) { return std::round(v / q) * q; }

inline std::vector<Cell> place_obstacles(WorldSpec& w, CounterRng& rng, int want) {
  std::vector<Cell> placed;
  for (int k = 0; k < want; ++k) {
    std::vector<Cell> candidates;
    for (int i = 0; i < w.cell_count(); ++i) {
      const Cell c = w.cell_from_index(i);
      if (w.is_obstacle(c)) continue;
      w.obstacles.push_back({c, w.tol.obstacle_radius, w.tol.obstacle_height});
      if (obstacle_window_ok(w)) candidates.push_back(c);
      w.obstacles.pop_back();
    }
    if (candidates.empty()) break;
    const Cell c = candidates[rng.uniform(candidates.size())];
    w.obstacles.push_back({c, w.tol.obstacle_radius, w.tol.obstacle_height});
    placed.push_back(c);
  }
  return placed;
}

// Single task draw; nullopt when the layout cannot host the boxes or A* fails.
inline std::optional<TaskInstance> draw_task(const GenConfig& cfg, const SizeConfig& sc, CounterRng& rng) {
  WorldSpec w;
  w.map_cols = sc.cols;
  w.map_rows = sc.rows;
  w.seed = rng.next_u64();

  std::vector<std::pair<int, int>> joints;
  for (int jc = 1; jc < sc.cols; ++jc)
    for (int jr = 1; jr < sc.rows; ++jr) joints.push_back({jc, jr});
  rng.shuffle(joints);
  joints.resize(sc.robots);
  std::sort(joints.begin(), joints.end(), [](auto a, auto b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
  for (int i = 0; i < sc.robots; ++i) {
    RobotSpec r = robot_at_joint(w, i, joints[i].first, joints[i].second);
    if (cfg.variant == Variant::UnseenLayout) {
      r.base_x += rng.uniform_int(-10, 10) * 0.01;
      r.base_y += rng.uniform_int(-10, 10) * 0.01;
      r.base_x = quantize(r.base_x, 0.01);
      r.base_y = quantize(r.base_y, 0.01);
    }
    w.robots.push_back(r);
  }

  const int cells = sc.cols * sc.rows;
  const int obs_hi = std::min(cfg.max_obstacles, cells - sc.boxes - 1);
  const int obs_lo = std::min(cfg.min_obstacles, obs_hi);
  place_obstacles(w, rng, rng.uniform_int(obs_lo, std::max(obs_lo, obs_hi)));

  const WorldIndex idx(w);
  std::vector<Cell> usable;
  for (int i = 0; i < cells; ++i) {
    const Cell c = w.cell_from_index(i);
    if (w.is_obstacle(c)) continue;
    for (int r = 0; r < sc.robots; ++r)
      if (idx.reaches(r, c)) {
        usable.push_back(c);
        break;
      }
  }
  if (static_cast<int>(usable.size()) < sc.boxes + 1) return std::nullopt;
  std::vector<Cell> starts = usable;
  rng.shuffle(starts);
  starts.resize(sc.boxes);
  std::vector<Cell> taken_targets;
  for (int b = 0; b < sc.boxes; ++b) {
    std::vector<Cell> options;
    for (Cell c : usable)
      if (c != starts[b] && std::find(taken_targets.begin(), taken_targets.end(), c) == taken_targets.end()) options.push_back(c);
    if (options.empty()) return std::nullopt;
    const Cell t = options[rng.uniform(options.size())];
    taken_targets.push_back(t);
    w.boxes.push_back({b, starts[b], t});
  }
  if (!validate(w).empty()) return std::nullopt;

  TaskInstance inst;
  inst.variant = cfg.variant;
  inst.config = sc;
  inst.world = w;
  inst.initial = initial_state(w);
  const TaskSearchResult res = plan(w, inst.initial, cfg.search);
  if (!res.solved()) return std::nullopt;
  inst.reference_plan = res.plan;
  inst.reference_len = static_cast<int>(res.plan.size());
  return inst;
}

}  // namespace detail

// Configuration order for dataset slots: a seed-shuffled permutation of the grid.
inline std::vector<SizeConfig> config_order(const GenConfig& cfg) {
  std::vector<SizeConfig> grid = size_configs(cfg);
  CounterRng rng(cfg.seed, {detail::kOrderStream, static_cast<std::uint64_t>(cfg.variant)});
  rng.shuffle(grid);
  return grid;
}

// Instance `index` of the dataset described by cfg. Pure in (cfg, index).
inline TaskInstance generate_one(const GenConfig& cfg, int index, const std::vector<SizeConfig>& order) {
  if (cfg.variant == Variant::Motion2x2) throw ConfigError("generate_one: use generate_motion for motion_2x2");
  const SizeConfig& sc = order.at(static_cast<std::size_t>(index) % order.size());
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    CounterRng rng(cfg.seed, {static_cast<std::uint64_t>(cfg.variant), static_cast<std::uint64_t>(index),
                              static_cast<std::uint64_t>(attempt)});
    if (auto inst = detail::draw_task(cfg, sc, rng)) {
      inst->id = index;
      inst->attempts = attempt + 1;
      CounterRng sft(cfg.seed, {detail::kSftStream, static_cast<std::uint64_t>(index)});
      inst->sft_visible = sft.unit() < cfg.sft_fraction;
      return *inst;
    }
  }
  throw BudgetExhausted("instance " + std::to_string(index) + ": " + std::to_string(cfg.max_attempts) +
                        " consecutive draws unsolvable (" + std::to_string(sc.cols) + "x" + std::to_string(sc.rows) +
                        ", " + std::to_string(sc.robots) + " robots, " + std::to_string(sc.boxes) + " boxes)");
}

inline TaskInstance generate_one(const GenConfig& cfg, int index) { return generate_one(cfg, index, config_order(cfg)); }

// Instances [first, first + n) of the stream, in index order.
inline std::vector<TaskInstance> generate(const GenConfig& cfg, int first = 0, int n = -1) {
  validate(cfg);
  if (n < 0) n = cfg.count - first;
  const auto order = config_order(cfg);
  std::vector<TaskInstance> out;
  for (int i = first; i < first + n; ++i) out.push_back(generate_one(cfg, i, order));
  return out;
}

// Fresh A* with a salted tie-break order. Gets the full desk budget: a different tie order
// can need an order of magnitude more expansions than the gate run.
inline TaskSearchResult reverify(const TaskInstance& inst, const TaskSearchConfig& base = {}, int max_expansions = 200000,
                                 double max_seconds = 60.0) {
  TaskSearchConfig c = base;
  c.tie_salt = splitmix64(detail::kVerifySalt ^ static_cast<std::uint64_t>(inst.id) ^ inst.world.seed) | 1;
  c.max_expansions = std::max(base.max_expansions, max_expansions);
  c.max_seconds = max_seconds;
  return plan(inst.world, inst.initial, c);
}

// ---------------------------------------------------------------------------
// Motion instances

namespace detail {

inline std::optional<MotionInstance> draw_motion(const GenConfig& cfg, CounterRng& rng) {
  WorldSpec w;
  w.map_cols = w.map_rows = 2;
  w.seed = rng.next_u64();
  w.robots.push_back(robot_at_joint(w, 0, 1, 1));
  place_obstacles(w, rng, rng.uniform_int(cfg.min_obstacles, cfg.max_obstacles));
  const RobotSpec& robot = w.robots[0];
  const WorldState rest = initial_state(w);

  auto pose_ok = [&](Pose p) {
    if (!reachable(w, robot, p) || !pose_in_workspace(w, robot, p)) return false;
    WorldState s = rest;
    s.arm_pos[0] = p;
    return pose_clearance(w, s, 0, p, false) > 0.02;
  };
  auto random_pose = [&]() {
    return Pose{quantize(rng.uniform_real(0.05, 0.95), 0.01), quantize(rng.uniform_real(0.05, 0.95), 0.01),
                quantize(rng.uniform_real(0.10, 0.25), 0.01)};
  };

  Pose start;
  Pose goal;
  const bool crossing = !w.obstacles.empty() && rng.bernoulli(cfg.crossing_fraction);
  if (crossing) {
    const Pose c = cell_center(w, w.obstacles[rng.uniform(w.obstacles.size())].cell);
    const Vec3 to_c = c - robot.base();
    const double n = std::hypot(to_c.x, to_c.y);
    const Vec3 u{to_c.x / n, to_c.y / n, 0.0};
    const Vec3 v{-u.y, u.x, 0.0};
    const double d1 = rng.uniform_real(0.18, 0.40);
    const double d2 = rng.uniform_real(0.18, 0.40);
    const double e1 = rng.uniform_real(-0.12, 0.08);
    const double e2 = rng.uniform_real(-0.12, 0.08);
    start = c + v * d1 + u * e1;
    goal = c - v * d2 + u * e2;
    start = {quantize(start.x, 0.01), quantize(start.y, 0.01), quantize(rng.uniform_real(0.10, 0.25), 0.01)};
    goal = {quantize(goal.x, 0.01), quantize(goal.y, 0.01), quantize(rng.uniform_real(0.10, 0.25), 0.01)};
  } else {
    start = random_pose();
    goal = random_pose();
  }
  if (!pose_ok(start) || !pose_ok(goal) || distance(start, goal) < 0.1) return std::nullopt;

  MotionInstance mi;
  mi.query.robot_id = 0;
  mi.query.start = start;
  mi.query.target = goal;
  mi.query.world = w;
  mi.query.view = rest;
  mi.query.view.arm_pos[0] = start;
  const MotionSearchResult r = search(mi.query, cfg.search.motion);
  if (r.status != MotionStatus::Feasible) return std::nullopt;
  mi.reference = *r.plan;
  for (const auto& o : w.obstacles)
    if (segment_signed_distance(obstacle_cylinder(w, o), start, goal) < 0.0) mi.crossing = true;
  return mi;
}

}  // namespace detail

inline MotionInstance generate_motion_one(const GenConfig& cfg, int index) {
  if (cfg.variant != Variant::Motion2x2) throw ConfigError("generate_motion requires variant motion_2x2");
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    CounterRng rng(cfg.seed, {static_cast<std::uint64_t>(Variant::Motion2x2), static_cast<std::uint64_t>(index),
                              static_cast<std::uint64_t>(attempt)});
    if (auto mi = detail::draw_motion(cfg, rng)) {
      mi->id = index;
      mi->attempts = attempt + 1;
      return *mi;
    }
  }
  throw BudgetExhausted("motion instance " + std::to_string(index) + ": no feasible draw in " +
                        std::to_string(cfg.max_attempts) + " attempts");
}

inline std::vector<MotionInstance> generate_motion(const GenConfig& cfg, int first = 0, int n = -1) {
  validate(cfg);
  if (n < 0) n = cfg.count - first;
  std::vector<MotionInstance> out;
  for (int i = first; i < first + n; ++i) out.push_back(generate_motion_one(cfg, i));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json_value(const GenConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"cols", {c.min_cols, c.max_cols}},
          {"rows", {c.min_rows, c.max_rows}},
          {"robots", {c.min_robots, c.max_robots}},
          {"boxes", {c.min_boxes, c.max_boxes}},
          {"obstacles", {c.min_obstacles, c.max_obstacles}},
          {"seed", c.seed},
          {"count", c.count},
          {"per_config_cap", c.per_config_cap},
          {"max_attempts", c.max_attempts},
          {"sft_fraction", c.sft_fraction},
          {"crossing_fraction", c.crossing_fraction},
          {"search_max_expansions", c.search.max_expansions}};
}

inline GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  if (j.contains("split")) {
    const std::string split = j.at("split").get<std::string>();
    if (split == "test") c = GenConfig::test_split();
    else if (split == "train") c = GenConfig::train_split();
    else if (split == "motion") c = GenConfig::motion();
    else throw ConfigError("unknown split: " + split);
  }
  if (j.contains("variant")) {
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (c.variant == Variant::Motion2x2 && !j.contains("split")) {
      const GenConfig m = GenConfig::motion();
      c.min_cols = m.min_cols, c.max_cols = m.max_cols, c.min_rows = m.min_rows, c.max_rows = m.max_rows;
      c.min_robots = m.min_robots, c.max_robots = m.max_robots, c.min_boxes = m.min_boxes, c.max_boxes = m.max_boxes;
      c.min_obstacles = m.min_obstacles, c.max_obstacles = m.max_obstacles;
    }
  }
  auto range = [&](const char* key, int& lo, int& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number_integer()) {
      lo = hi = v.get<int>();
    } else {
      lo = v.at(0).get<int>();
      hi = v.at(1).get<int>();
    }
  };
  range("cols", c.min_cols, c.max_cols);
  range("rows", c.min_rows, c.max_rows);
  range("robots", c.min_robots, c.max_robots);
  range("boxes", c.min_boxes, c.max_boxes);
  range("obstacles", c.min_obstacles, c.max_obstacles);
  c.seed = j.value("seed", c.seed);
  c.count = j.value("count", c.count);
  c.per_config_cap = j.value("per_config_cap", c.per_config_cap);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.sft_fraction = j.value("sft_fraction", c.sft_fraction);
  c.crossing_fraction = j.value("crossing_fraction", c.crossing_fraction);
  c.search.max_expansions = j.value("search_max_expansions", c.search.max_expansions);
  return c;
}

inline json to_json_value(const TaskInstance& t) {
  return {{"id", t.id},
          {"variant", std::string(to_string(t.variant))},
          {"config", {{"cols", t.config.cols}, {"rows", t.config.rows}, {"robots", t.config.robots}, {"boxes", t.config.boxes}}},
          {"world", world_document(t.world, t.initial)},
          {"reference_plan", to_json_value(t.reference_plan)},
          {"reference_len", t.reference_len},
          {"sft_visible", t.sft_visible},
          {"attempts", t.attempts}};
}

inline TaskInstance task_instance_from_json(const json& j) {
  TaskInstance t;
  t.id = j.at("id").get<int>();
  t.variant = variant_from_string(j.value("variant", "standard"));
  if (j.contains("config")) {
    const auto& c = j.at("config");
    t.config = {c.at("cols").get<int>(), c.at("rows").get<int>(), c.at("robots").get<int>(), c.at("boxes").get<int>()};
  }
  t.world = j.at("world").at("spec").get<WorldSpec>();
  t.initial = j.at("world").at("state").get<WorldState>();
  t.reference_plan = task_plan_from_json(j.at("reference_plan"));
  t.reference_len = j.at("reference_len").get<int>();
  t.sft_visible = j.value("sft_visible", false);
  t.attempts = j.value("attempts", 1);
  if (t.reference_len != static_cast<int>(t.reference_plan.size()))
    throw std::invalid_argument("instance " + std::to_string(t.id) + ": reference_len mismatch");
  return t;
}

inline json to_json_value(const MotionInstance& m) {
  return {{"id", m.id},
          {"variant", "motion_2x2"},
          {"query", to_json_value(m.query)},
          {"reference", to_json_value(m.reference)},
          {"crossing", m.crossing},
          {"attempts", m.attempts}};
}

inline MotionInstance motion_instance_from_json(const json& j) {
  MotionInstance m;
  m.id = j.at("id").get<int>();
  m.query = motion_query_from_json(j.at("query"));
  const json& ref = j.at("reference");
  m.reference.robot_id = ref.at("robot_id").get<int>();
  for (const auto& w : ref.at("waypoints")) m.reference.waypoints.push_back(pose_from_json(w));
  m.crossing = j.value("crossing", false);
  m.attempts = j.value("attempts", 1);
  return m;
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mrtamp
