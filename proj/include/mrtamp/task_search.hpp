#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mrtamp/execution.hpp"
#include "mrtamp/motion.hpp"
#include "mrtamp/rng.hpp"
#include "mrtamp/sim.hpp"
#include "mrtamp/world.hpp"

namespace mrtamp {

struct TaskSearchConfig {
  double alpha = 0.5;           // misalignment weight
  double beta = 0.25;           // adjacent-robot bonus
  double p_hand = 1.0;          // per handoff
  double activation_cost = 0.05;
  double min_box_term = 0.1;    // per unplaced box, keeps h > 0 off the goal
  int max_bundles = 32;         // K
  int combo_seeds = 12;
  int max_expansions = 3000;    // simulated bundles
  double max_seconds = 0.0;     // 0 = no wall-clock limit
  std::uint64_t tie_salt = 0;   // 0 = robot id / target cell order
  bool memoize = true;
  bool dominance = true;
  bool self_check = true;
  FrontierConfig motion;
};

// Static reachability facts used by the heuristic and bundle generator.
class WorldIndex {
 public:
  static constexpr int kUnreachable = 1000;

  explicit WorldIndex(const WorldSpec& world) : world_(world) {
    const int nr = static_cast<int>(world.robots.size());
    const int nc = world.cell_count();
    reach_.assign(nr, std::vector<char>(nc, 0));
    const double margin = world.tol.sweep_margin();
    for (int r = 0; r < nr; ++r) {
      const RobotSpec& robot = world.robots[r];
      for (int i = 0; i < nc; ++i) {
        const Cell c = world.cell_from_index(i);
        if (world.is_obstacle(c)) continue;
        const Pose p = hover_pose(world, c);
        if (!reachable(world, robot, p)) continue;
        if (detail::arm_obstacle_clearance(world, robot.base(), p, 1.0) <= margin) continue;
        reach_[r][i] = 1;
      }
    }
    // Robot graph: an edge wherever two robots share a reachable cell.
    hops_.assign(nr, std::vector<int>(nr, kUnreachable));
    for (int s = 0; s < nr; ++s) {
      std::deque<int> q{s};
      hops_[s][s] = 0;
      while (!q.empty()) {
        const int a = q.front();
        q.pop_front();
        for (int b = 0; b < nr; ++b) {
          if (hops_[s][b] != kUnreachable || !share_cell(a, b)) continue;
          hops_[s][b] = hops_[s][a] + 1;
          q.push_back(b);
        }
      }
    }
    handoffs_.assign(nc, std::vector<int>(nc, kUnreachable));
    for (int a = 0; a < nc; ++a)
      for (int b = 0; b < nc; ++b)
        for (int r = 0; r < nr; ++r)
          for (int s = 0; s < nr; ++s)
            if (reach_[r][a] && reach_[s][b]) handoffs_[a][b] = std::min(handoffs_[a][b], hops_[r][s]);
  }

  const WorldSpec& world() const { return world_; }
  bool reaches(int robot, Cell c) const { return world_.in_map(c) && reach_[robot][world_.cell_index(c)]; }
  // Minimum number of robot-to-robot transfers to bring a box from cell a to cell b.
  int handoffs(Cell a, Cell b) const { return handoffs_[world_.cell_index(a)][world_.cell_index(b)]; }
  int robot_hops(int a, int b) const { return hops_[a][b]; }

 private:
  bool share_cell(int a, int b) const {
    for (std::size_t i = 0; i < reach_[a].size(); ++i)
      if (reach_[a][i] && reach_[b][i]) return true;
    return false;
  }

  const WorldSpec& world_;
  std::vector<std::vector<char>> reach_;
  std::vector<std::vector<int>> hops_;
  std::vector<std::vector<int>> handoffs_;
};

inline Cell box_cell(const WorldSpec& world, const WorldState& state, int box) {
  return cell_of(world, state.box_pos.at(box)).value_or(world.boxes.at(box).initial);
}

inline bool misaligned(Cell a, Cell b) { return a.col != b.col && a.row != b.row; }

inline bool arm_adjacent(const WorldSpec& world, const WorldState& state, int box) {
  for (const auto& arm : state.arm_pos)
    if (distance(arm, state.box_pos.at(box)) <= world.tol.grasp_tolerance + 1e-9) return true;
  return false;
}

// Per-box heuristic term; 0 for a placed box.
inline double box_term(const WorldIndex& idx, const WorldState& state, int box, const TaskSearchConfig& cfg) {
  const WorldSpec& world = idx.world();
  if (box_at_target(world, state, box)) return 0.0;
  const Cell c = box_cell(world, state, box);
  const Cell t = world.boxes[box].target;
  const int manhattan = std::abs(c.col - t.col) + std::abs(c.row - t.row);
  const double v = manhattan + cfg.alpha * (misaligned(c, t) ? 1.0 : 0.0) +
                   cfg.p_hand * std::min(idx.handoffs(c, t), 10) - cfg.beta * (arm_adjacent(world, state, box) ? 1.0 : 0.0);
  return std::max(v, cfg.min_box_term);
}

inline double heuristic(const WorldIndex& idx, const WorldState& state, const TaskSearchConfig& cfg = {}) {
  double h = 0.0;
  for (std::size_t b = 0; b < idx.world().boxes.size(); ++b) h += box_term(idx, state, static_cast<int>(b), cfg);
  return h;
}

inline double heuristic(const WorldState& state, const WorldSpec& world, const TaskSearchConfig& cfg = {}) {
  return heuristic(WorldIndex(world), state, cfg);
}

// ---------------------------------------------------------------------------
// Signatures

inline std::uint64_t mix_q(std::uint64_t h, double v, double quantum) {
  return splitmix64(h ^ static_cast<std::uint64_t>(std::llround(v / quantum) + (1LL << 40)));
}

inline std::uint64_t command_signature(const RobotCommand& c) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(c.robot_id) * 2 + (c.carry ? 1 : 0));
  for (double v : {c.target.x, c.target.y, c.target.z}) h = mix_q(h, v, 1e-4);
  return h;
}

inline std::uint64_t bundle_signature(const TaskStep& step) {
  TaskStep s = step;
  sort_step(s);
  std::uint64_t h = 0x5bd1e995ULL;
  for (const auto& c : s) h = splitmix64(h ^ command_signature(c));
  return h;
}

inline std::uint64_t state_signature(const WorldState& s, double quantum = 0.05) {
  std::uint64_t h = 0x27d4eb2fULL;
  for (const auto& p : s.arm_pos) h = mix_q(mix_q(mix_q(h, p.x, quantum), p.y, quantum), p.z, quantum);
  for (const auto& p : s.box_pos) h = mix_q(mix_q(mix_q(h, p.x, quantum), p.y, quantum), p.z, quantum);
  for (const auto& c : s.carrying) h = splitmix64(h ^ static_cast<std::uint64_t>(c ? *c + 1 : 0));
  return h;
}

// ---------------------------------------------------------------------------
// Bundles

struct ScoredBundle {
  TaskStep step;
  double score = 0.0;  // heuristic decrease minus activation cost
  double h_after = 0.0;
  std::uint64_t signature = 0;
};

namespace detail {

// Symbolic effect of a bundle, assuming it executes cleanly.
inline WorldState predict(const WorldSpec& world, const WorldState& state, const TaskStep& step) {
  WorldState next = state;
  for (const auto& c : step) {
    if (c.carry) {
      if (auto b = box_in_grasp(world, state, c.robot_id)) next.box_pos[*b] = {c.target.x, c.target.y, world.tol.box_rest_z};
    }
    next.arm_pos[c.robot_id] = c.target;
  }
  next.step_index = state.step_index + 1;
  return next;
}

inline bool cell_free(const WorldSpec& world, const WorldState& state, Cell c, int ignore_box) {
  if (world.is_obstacle(c)) return false;
  for (std::size_t b = 0; b < state.box_pos.size(); ++b) {
    if (static_cast<int>(b) == ignore_box) continue;
    if (cell_of(world, state.box_pos[b]) == c) return false;
  }
  return true;
}

inline std::optional<Cell> target_cell(const WorldSpec& world, const RobotCommand& c) { return cell_of(world, c.target); }

inline bool compatible(const WorldSpec& world, const WorldState& state, const TaskStep& step, const RobotCommand& c) {
  for (const auto& o : step) {
    if (o.robot_id == c.robot_id) return false;
    if (distance(o.target, c.target) < world.tol.robot_clearance) return false;
    const auto a = target_cell(world, o);
    const auto b = target_cell(world, c);
    if (a && b && *a == *b) return false;
    if (o.carry && c.carry && box_in_grasp(world, state, o.robot_id) == box_in_grasp(world, state, c.robot_id))
      return false;
  }
  return true;
}

// Deterministic order key for equal scores: robot ids, then target cells, or a salted hash.
inline std::vector<long long> tie_key(const WorldSpec& world, const TaskStep& step, std::uint64_t salt) {
  if (salt != 0) return {static_cast<long long>(splitmix64(bundle_signature(step) ^ salt) >> 1)};
  std::vector<long long> k;
  for (const auto& c : step) k.push_back(c.robot_id);
  for (const auto& c : step) {
    const Cell cell = target_cell(world, c).value_or(Cell{-1, -1});
    k.push_back(cell.col);
    k.push_back(cell.row);
    k.push_back(std::llround(c.target.z * 1e4));
    k.push_back(c.carry ? 1 : 0);
  }
  return k;
}

}  // namespace detail

// Candidate commands for one robot in `state` (no-op excluded).
inline std::vector<RobotCommand> robot_candidates(const WorldIndex& idx, const WorldState& state, int r) {
  const WorldSpec& world = idx.world();
  std::vector<RobotCommand> out;
  const Pose arm = state.arm_pos[r];
  const auto held = box_in_grasp(world, state, r);
  if (held && !box_at_target(world, state, *held)) {
    for (int i = 0; i < world.cell_count(); ++i) {
      const Cell c = world.cell_from_index(i);
      if (!idx.reaches(r, c) || !detail::cell_free(world, state, c, *held)) continue;
      if (cell_of(world, state.box_pos[*held]) == c) continue;
      out.push_back({r, hover_pose(world, c), true});
    }
  }
  for (std::size_t b = 0; b < world.boxes.size(); ++b) {
    if (box_at_target(world, state, static_cast<int>(b))) continue;
    if (held == static_cast<int>(b)) continue;
    const Cell c = box_cell(world, state, static_cast<int>(b));
    if (!idx.reaches(r, c)) continue;
    const Pose p = state.box_pos[b];
    const Pose approach{p.x, p.y, world.tol.hover_z};
    if (distance(approach, arm) <= 1e-9) continue;
    out.push_back({r, approach, false});
  }
  const Pose rest = world.robots[r].rest_pose();
  if (distance(arm, rest) > 1e-9) out.push_back({r, rest, false});
  return out;
}

// Ranked multi-robot bundles: scored singles plus greedy combinations grown from the best
// seeds, conflict-filtered, minus any known-failed signature, truncated to K.
inline std::vector<ScoredBundle> enumerate_bundles(const WorldIndex& idx, const WorldState& state,
                                                   const std::unordered_set<std::uint64_t>& failed,
                                                   const TaskSearchConfig& cfg = {}) {
  const WorldSpec& world = idx.world();
  const double h0 = heuristic(idx, state, cfg);
  auto score_of = [&](const TaskStep& step, double& h_after) {
    h_after = heuristic(idx, detail::predict(world, state, step), cfg);
    return (h0 - h_after) - cfg.activation_cost * static_cast<double>(step.size());
  };
  auto contains_failed = [&](const TaskStep& step) {
    if (failed.count(bundle_signature(step))) return true;
    for (const auto& c : step)
      if (failed.count(command_signature(c))) return true;
    return false;
  };

  std::vector<ScoredBundle> singles;
  for (int r = 0; r < static_cast<int>(world.robots.size()); ++r) {
    for (const auto& c : robot_candidates(idx, state, r)) {
      ScoredBundle sb;
      sb.step = {c};
      sb.score = score_of(sb.step, sb.h_after);
      sb.signature = bundle_signature(sb.step);
      if (!contains_failed(sb.step)) singles.push_back(std::move(sb));
    }
  }
  auto better = [&](const ScoredBundle& a, const ScoredBundle& b) {
    if (a.score != b.score) return a.score > b.score;
    return detail::tie_key(world, a.step, cfg.tie_salt) < detail::tie_key(world, b.step, cfg.tie_salt);
  };
  std::sort(singles.begin(), singles.end(), better);

  std::vector<ScoredBundle> all = singles;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& s : singles) seen.insert(s.signature);
  const int seeds = std::min<int>(cfg.combo_seeds, static_cast<int>(singles.size()));
  for (int i = 0; i < seeds; ++i) {
    ScoredBundle cur = singles[i];
    for (const auto& s : singles) {
      const RobotCommand& c = s.step.front();
      if (!detail::compatible(world, state, cur.step, c)) continue;
      TaskStep trial = cur.step;
      trial.push_back(c);
      sort_step(trial);
      double h_after = 0.0;
      const double sc = score_of(trial, h_after);
      if (sc <= cur.score || contains_failed(trial)) continue;
      cur.step = std::move(trial);
      cur.score = sc;
      cur.h_after = h_after;
    }
    if (cur.step.size() < 2) continue;
    cur.signature = bundle_signature(cur.step);
    if (seen.insert(cur.signature).second) all.push_back(std::move(cur));
  }
  std::sort(all.begin(), all.end(), better);
  if (static_cast<int>(all.size()) > cfg.max_bundles) all.resize(cfg.max_bundles);
  return all;
}

inline std::vector<ScoredBundle> enumerate_bundles(const WorldState& state, const WorldSpec& world,
                                                   const std::unordered_set<std::uint64_t>& failed = {},
                                                   const TaskSearchConfig& cfg = {}) {
  return enumerate_bundles(WorldIndex(world), state, failed, cfg);
}

// ---------------------------------------------------------------------------
// Search

struct FailureRecord {
  TaskStep rejected;
  OutcomeKind reason = OutcomeKind::ExecutionErr;
  std::string detail;
  std::optional<TaskStep> corrected;
  std::uint64_t state_signature = 0;
  WorldState state;
  int depth = 0;  // g of the node the bundle was tried from
};

enum class SearchStatus { Solved, Unsolvable, BudgetExhausted };

inline std::string_view to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Solved: return "Solved";
    case SearchStatus::Unsolvable: return "Unsolvable";
    case SearchStatus::BudgetExhausted: return "BudgetExhausted";
  }
  return "?";
}

struct TaskSearchStats {
  int expansions = 0;  // bundles simulated (memo hits excluded)
  int nodes = 0;       // distinct states reached
  int memo_hits = 0;
  int pruned = 0;
  double seconds = 0.0;
};

struct TaskSearchResult {
  SearchStatus status = SearchStatus::Unsolvable;
  TaskPlan plan;
  std::vector<FailureRecord> ledger;
  TaskSearchStats stats;
  std::string reason;
  bool solved() const { return status == SearchStatus::Solved; }
};

class SelfCheckError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Best-first search over world snapshots. Child edges are scored with the predicted
// heuristic and only simulated (oracle motion + joint execution) when popped.
inline TaskSearchResult plan(const WorldSpec& world, const WorldState& start, const TaskSearchConfig& cfg = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  TaskSearchResult res;
  const WorldIndex idx(world);
  OracleMotionPlanner oracle_planner(cfg.motion);
  StepRunOptions step_opt;
  step_opt.certifier = cfg.motion;

  struct Node {
    WorldState state;
    int parent;
    TaskStep via;
    int g;
    std::vector<int> pending_failures;  // ledger indices awaiting a corrected sibling
    bool corrected_found = false;
  };
  std::vector<Node> nodes;
  struct Edge {
    double f;
    double h;
    std::uint64_t tie;
    int parent;
    ScoredBundle bundle;
  };
  struct EdgeOrder {
    bool operator()(const Edge& a, const Edge& b) const {
      if (a.f != b.f) return a.f > b.f;
      if (a.h != b.h) return a.h > b.h;
      return a.tie > b.tie;
    }
  };
  std::priority_queue<Edge, std::vector<Edge>, EdgeOrder> open;
  std::uint64_t seq = 0;

  struct MemoEntry {
    WorldState from;
    Outcome outcome;
    WorldState next;
  };
  std::unordered_map<std::uint64_t, std::vector<MemoEntry>> memo;
  std::unordered_map<std::uint64_t, int> best_g;  // coarse signature -> lowest g closed
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint64_t>> failed;  // coarse state -> signatures

  auto finish_plan = [&](int node) {
    TaskPlan p;
    for (int i = node; nodes[i].parent >= 0; i = nodes[i].parent) p.push_back(nodes[i].via);
    std::reverse(p.begin(), p.end());
    return p;
  };
  auto expand = [&](int ni) {
    const Node& n = nodes[ni];
    const std::uint64_t key = state_signature(n.state);
    const auto& fs = failed[key];
    for (auto& b : enumerate_bundles(idx, n.state, fs, cfg)) {
      const double g = n.g + 1;
      const std::uint64_t tie = cfg.tie_salt ? splitmix64(b.signature ^ cfg.tie_salt ^ static_cast<std::uint64_t>(ni)) : seq;
      ++seq;
      open.push({g + b.h_after, b.h_after, tie, ni, std::move(b)});
    }
  };
  auto finalize = [&](SearchStatus st, std::string reason) {
    res.status = st;
    res.reason = std::move(reason);
    res.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };

  nodes.push_back({start, -1, {}, 0, {}, false});
  res.stats.nodes = 1;
  if (all_boxes_placed(world, start)) return finalize(SearchStatus::Solved, "");
  best_g[state_signature(start)] = 0;
  expand(0);

  while (!open.empty()) {
    Edge e = open.top();
    open.pop();
    if (res.stats.expansions >= cfg.max_expansions) return finalize(SearchStatus::BudgetExhausted, "expansion budget");
    if (cfg.max_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > cfg.max_seconds)
      return finalize(SearchStatus::BudgetExhausted, "time budget");

    const WorldState& from = nodes[e.parent].state;
    const std::uint64_t from_key = state_signature(from);
    if (failed[from_key].count(e.bundle.signature)) continue;

    Outcome outcome;
    WorldState next;
    bool hit = false;
    const std::uint64_t memo_key = splitmix64(from_key ^ e.bundle.signature);
    if (cfg.memoize) {
      for (const auto& m : memo[memo_key]) {
        if (m.from == from) {
          outcome = m.outcome;
          next = m.next;
          hit = true;
          break;
        }
      }
    }
    if (hit) {
      ++res.stats.memo_hits;
    } else {
      ++res.stats.expansions;
      StepRun run = run_task_step(world, from, e.bundle.step, oracle_planner, step_opt);
      outcome = std::move(run.outcome);
      next = std::move(run.next);
      if (cfg.memoize) memo[memo_key].push_back({from, outcome, next});
    }

    if (!outcome.ok()) {
      failed[from_key].insert(e.bundle.signature);
      if (outcome.kind == OutcomeKind::UnreachableMotion && outcome.robots.size() == 1) {
        // The certifier saw the same frozen view, so any bundle with this command fails too.
        for (const auto& c : e.bundle.step)
          if (c.robot_id == outcome.robots.front()) failed[from_key].insert(command_signature(c));
      }
      if (!hit) {
        FailureRecord rec{e.bundle.step, outcome.kind, outcome.detail, std::nullopt, from_key, from, nodes[e.parent].g};
        res.ledger.push_back(std::move(rec));
        if (!nodes[e.parent].corrected_found) nodes[e.parent].pending_failures.push_back(static_cast<int>(res.ledger.size()) - 1);
      }
      continue;
    }

    Node& parent = nodes[e.parent];
    for (int li : parent.pending_failures) res.ledger[li].corrected = e.bundle.step;
    parent.pending_failures.clear();
    parent.corrected_found = true;

    const int g = parent.g + 1;
    const std::uint64_t key = state_signature(next);
    if (cfg.dominance) {
      auto it = best_g.find(key);
      if (it != best_g.end() && it->second <= g) {
        ++res.stats.pruned;
        continue;
      }
      best_g[key] = g;
    }
    nodes.push_back({std::move(next), e.parent, e.bundle.step, g, {}, false});
    ++res.stats.nodes;
    const int ni = static_cast<int>(nodes.size()) - 1;
    if (all_boxes_placed(world, nodes[ni].state)) {
      res.plan = finish_plan(ni);
      if (cfg.self_check) {
        const PlanRun replay = run_plan(world, start, res.plan, oracle_planner, {step_opt, false});
        if (!replay.outcome.ok()) throw SelfCheckError("task search: plan failed replay: " + replay.outcome.detail);
      }
      return finalize(SearchStatus::Solved, "");
    }
    expand(ni);
  }
  return finalize(SearchStatus::Unsolvable, "open set exhausted");
}

// ---------------------------------------------------------------------------
// Ledger export

inline json to_json_value(const FailureRecord& r) {
  json j = {{"rejected", to_json_value(r.rejected)},
            {"reason", std::string(to_string(r.reason))},
            {"detail", r.detail},
            {"state_signature", r.state_signature},
            {"depth", r.depth},
            {"state", r.state}};
  j["corrected"] = r.corrected ? to_json_value(*r.corrected) : json(nullptr);
  return j;
}

inline FailureRecord failure_record_from_json(const json& j) {
  FailureRecord r;
  r.rejected = task_step_from_json(j.at("rejected"));
  r.reason = outcome_kind_from_string(j.at("reason").get<std::string>());
  r.detail = j.value("detail", "");
  if (!j.at("corrected").is_null()) r.corrected = task_step_from_json(j.at("corrected"));
  r.state_signature = j.at("state_signature").get<std::uint64_t>();
  r.depth = j.value("depth", 0);
  r.state = j.at("state").get<WorldState>();
  return r;
}

inline std::string ledger_jsonl(const std::vector<FailureRecord>& ledger) {
  std::string out;
  for (const auto& r : ledger) out += to_json_value(r).dump() + "\n";
  return out;
}

inline json to_json_value(const TaskPlan& p) {
  json arr = json::array();
  for (const auto& s : p) arr.push_back(to_json_value(s));
  return arr;
}

inline TaskPlan task_plan_from_json(const json& j) {
  TaskPlan p;
  for (const auto& s : j) p.push_back(task_step_from_json(s));
  return p;
}

}  // namespace mrtamp
