// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "mrtamp/mrtamp.hpp"
#include "oracles.hpp"
#include "replan_fixture.hpp"

using namespace mrtamp;

namespace {

struct Verdict {
  bool ok = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// 1
Verdict oracle_closed_loop() {
  const auto t0 = Clock::now();
  GenConfig g;
  g.seed = 20261014;
  g.count = 50;
  g.min_cols = g.min_rows = 2;
  g.max_cols = g.max_rows = 3;
  g.min_obstacles = 0;
  g.max_obstacles = 2;
  g.per_config_cap = 5;
  const auto data = generate(g);
  EvalConfig e;
  e.mode = PlanMode::FullPlan;
  e.trials = 4;
  e.seed = 99;
  e.jobs = 1;
  const EvalReport r = evaluate(data, e);
  const double wall = since(t0);
  const bool ok = static_cast<int>(data.size()) == 50 && r.success && r.step_diff && *r.success == 1.0 &&
                  *r.step_diff == 0.0 && static_cast<int>(r.records.size()) == 200 && wall <= 600.0;
  return {ok, "instances=" + std::to_string(data.size()) + " trials=" + std::to_string(r.records.size()) +
                  " Success=" + detail::fixed(r.success) + " StepDiff=" + detail::fixed(r.step_diff) + " wall=" + num(wall, 1) + "s"};
}

// 2
Verdict generator_validity() {
  const auto dir = std::filesystem::temp_directory_path() / ("mrtamp_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const GenConfig cfg = GenConfig::test_split();
  const DatasetManifest a = build_dataset(cfg, (dir / "a.jsonl").string(), 1);
  const DatasetManifest b = build_dataset(cfg, (dir / "b.jsonl").string(), 1);
  const bool same = a.hash == b.hash && read_file((dir / "a.jsonl").string()) == read_file((dir / "b.jsonl").string());
  const auto data = load_dataset((dir / "a.jsonl").string());
  int window_bad = 0, unsolved = 0, replay_bad = 0;
  for (const auto& t : data) {
    if (!obstacle_window_ok(t.world)) ++window_bad;
    const auto r = reverify(t);
    if (!r.solved()) {
      ++unsolved;
      continue;
    }
    OracleMotionPlanner mp;
    if (run_plan(t.world, t.initial, r.plan, mp).outcome.kind != OutcomeKind::Success) ++replay_bad;
  }
  std::filesystem::remove_all(dir);
  const bool ok = data.size() == 480 && window_bad == 0 && unsolved == 0 && replay_bad == 0 && same;
  return {ok, "instances=" + std::to_string(data.size()) + " window_violations=" + std::to_string(window_bad) +
                  " reverify_unsolved=" + std::to_string(unsolved) + " reverify_replay_failures=" +
                  std::to_string(replay_bad) + " hash=" + a.hash + (same ? " (identical)" : " vs " + b.hash)};
}

// 3
Verdict motion_oracle() {
  GenConfig cfg = GenConfig::motion();
  cfg.count = 500;
  const auto qs = generate_motion(cfg);
  int feasible = 0, exec_bad = 0, infeasible = 0, disagree = 0;
  // Unfiltered siblings: same world and start, random target. The generator only keeps
  // feasible draws, so these are where Infeasible verdicts actually occur.
  int sib_feasible = 0, sib_infeasible = 0, sib_invalid = 0, sib_exec_bad = 0, sib_disagree = 0;
  for (const auto& mi : qs) {
    const auto r = search(mi.query);
    if (r.status == MotionStatus::Feasible && r.plan) {
      ++feasible;
      if (!execute_single(mi.query, *r.plan).outcome.ok()) ++exec_bad;
    } else if (r.status == MotionStatus::Infeasible) {
      ++infeasible;
      if (oracle::lattice_bfs(mi.query)) ++disagree;
    }

    CounterRng rng(cfg.seed, {0x5151ULL, static_cast<std::uint64_t>(mi.id)});
    MotionQuery q = mi.query;
    q.target = Pose{detail::quantize(rng.uniform_real(0.02, 0.98), 0.01), detail::quantize(rng.uniform_real(0.02, 0.98), 0.01),
                detail::quantize(rng.uniform_real(0.05, 0.45), 0.01)};
    const auto s = search(q);
    if (s.status == MotionStatus::Feasible && s.plan) {
      ++sib_feasible;
      if (!execute_single(q, *s.plan).outcome.ok()) ++sib_exec_bad;
    } else if (s.status == MotionStatus::Infeasible) {
      ++sib_infeasible;
      if (oracle::lattice_bfs(q)) ++sib_disagree;
    } else {
      ++sib_invalid;
    }
  }
  const double rate = qs.empty() ? 0.0 : static_cast<double>(feasible) / qs.size();
  const bool ok = qs.size() == 500 && rate >= 0.99 && exec_bad == 0 && disagree == 0 && sib_exec_bad == 0 &&
                  sib_disagree == 0;
  return {ok, "queries=" + std::to_string(qs.size()) + " feasible=" + num(rate, 3) + " exec_failures=" +
                  std::to_string(exec_bad) + " infeasible=" + std::to_string(infeasible) + " bfs_disagreements=" +
                  std::to_string(disagree) + "; unfiltered siblings feasible=" + std::to_string(sib_feasible) +
                  " infeasible=" + std::to_string(sib_infeasible) + " invalid=" + std::to_string(sib_invalid) +
                  " exec_failures=" + std::to_string(sib_exec_bad) + " bfs_disagreements=" +
                  std::to_string(sib_disagree)};
}

// 4
Verdict reward_arithmetic() {
  const Outcome ok = Outcome::success();
  const Outcome hit = Outcome::failure(OutcomeKind::RobRobCollision, "collide", 0, Pose{1, 1, 0.1}, {0, 1});
  MotionQuery q;
  q.world = fx::world(2, 2, {{1, 1}}, {{1, 1}});
  q.start = {0.95, 0.60, 0.10};
  q.target = {0.60, 0.95, 0.10};
  q.view = initial_state(q.world);
  q.view.arm_pos[0] = q.start;
  const auto sol = search(q);
  const double clean = sol.plan ? motion_reward(to_json_value(*sol.plan).dump(), q).reward.total : -99.0;
  const auto straight = motion_reward(to_json_value(WaypointPlan{0, {q.start, q.target}}).dump(), q);
  const auto junk = motion_reward("waypoints please", q);

  struct Case {
    const char* name;
    double got, want;
  };
  const Case cases[] = {
      {"s2(12/10)", task_reward_stage2(12, ok, 10, true).total, 1.0},
      {"s2(8/10)", task_reward_stage2(8, ok, 10, true).total, 1.2},
      {"s2(collision)", task_reward_stage2(5, hit, 10, true).total, 0.1},
      {"motion(clean)", clean, 1.1},
      {"motion(collides)", straight.reward.total, 0.1},
      {"motion(unparsable)", junk.reward.total + (junk.outcome.kind == OutcomeKind::ExecutionErr ? 0.0 : 9.0), 0.0},
      {"s3(N=0)", task_reward_stage3(10, ok, 10, true, 0).r_motion_penalty, 0.0},
      {"s3(N=1)", task_reward_stage3(10, ok, 10, true, 1).r_motion_penalty, -0.2},
      {"s3(N=10)", task_reward_stage3(10, ok, 10, true, 10).r_motion_penalty, -0.5},
  };
  int good = 0;
  std::string bad;
  for (const auto& c : cases) {
    if (std::abs(c.got - c.want) <= 1e-9)
      ++good;
    else
      bad += std::string(" ") + c.name + "=" + num(c.got, 6);
  }
  return {good == 9, std::to_string(good) + "/9 examples within 1e-9" + bad};
}

// 5
Verdict rollout_harness() {
  GenConfig g;
  g.seed = 33;
  g.count = 20;
  g.max_cols = g.max_rows = 3;
  g.max_obstacles = 2;
  const auto inst = generate(g);
  int buffered = 0, buffer_bad = 0, count_bad = 0, records = 0;
  for (const auto& t : inst) {
    OracleMotionPlanner base;
    FaultInjectingMotionPlanner faulty(base, 0.3, 1000 + t.id);
    TaskPlan detour = t.reference_plan;
    if (!t.world.obstacles.empty())
      detour.insert(detour.begin(), TaskStep{{0, hover_pose(t.world, t.world.obstacles[0].cell), false}});
    TaskPlan truncated(t.reference_plan.begin(), t.reference_plan.begin() + t.reference_plan.size() / 2);
    const std::vector<PlanCandidate> plans{t.reference_plan, detour, truncated, t.reference_plan};
    const RolloutBatch b = rollout(t.world, t.initial, t.reference_len, plans, faulty);
    for (const auto& r : b.records) {
      ++records;
      OracleMotionPlanner base2;
      FaultInjectingMotionPlanner again(base2, 0.3, 1000 + t.id);
      if (r.n_infeasible != oracle::brute_force_infeasible(t.world, t.initial, r.plan, again)) ++count_bad;
      for (const auto& e : r.buffer) {
        ++buffered;
        const BufferEntry back = buffer_entry_from_json(json::parse(to_json_value(e).dump()));
        if (certify(back.query) != Certificate::Feasible || execute_single(back.query, back.plan).outcome.ok())
          ++buffer_bad;
      }
    }
  }
  const bool ok = inst.size() == 20 && buffered > 0 && buffer_bad == 0 && count_bad == 0;
  return {ok, "rollouts=" + std::to_string(inst.size()) + " records=" + std::to_string(records) + " buffered=" +
                  std::to_string(buffered) + " buffer_violations=" + std::to_string(buffer_bad) +
                  " n_infeasible_mismatches=" + std::to_string(count_bad)};
}

// 6
Verdict replan_contract() {
  std::vector<std::string> problems;
  bool saw_collision = false, saw_infeasible = false;
  for (PlanMode mode : {PlanMode::ICReplan, PlanMode::NCReplan}) {
    for (fx::FirstFault f : {fx::FirstFault::Collision, fx::FirstFault::Infeasible}) {
      const std::string tag = std::string(to_string(mode)) + (f == fx::FirstFault::Collision ? "/collision" : "/infeasible");
      const auto ep = fx::run_scripted(mode, f);
      if (auto v = check_mode_contract(ep.transcript, mode)) problems.push_back(tag + ": " + *v);
      if (ep.requests.size() != 2) {
        problems.push_back(tag + ": expected 2 requests, got " + std::to_string(ep.requests.size()));
        continue;
      }
      const json& first = ep.requests[0];
      const json& second = ep.requests[1];
      if (mode == PlanMode::ICReplan) {
        const json want = json::array({{{"observation", first["observation"]}, {"response", fx::first_response(f)}}});
        if (second["context"] != want) problems.push_back(tag + ": context is not the prior exchange");
        if (second["conversation_id"] != first["conversation_id"]) problems.push_back(tag + ": conversation changed");
      } else {
        if (!second["context"].empty()) problems.push_back(tag + ": context not empty");
        if (second["conversation_id"] == first["conversation_id"]) problems.push_back(tag + ": conversation reused");
      }
      const std::string obs = second["observation"].get<std::string>();
      if (f == fx::FirstFault::Collision) {
        const bool has = obs.find("FAIL: collision predicted at [") != std::string::npos;
        saw_collision = saw_collision || has;
        if (!has) problems.push_back(tag + ": collision FAIL line missing");
      } else {
        const bool has = obs.find("FAIL: Robot 0 motion infeasible\n") != std::string::npos;
        saw_infeasible = saw_infeasible || has;
        if (!has) problems.push_back(tag + ": infeasible FAIL line missing");
      }
      if (ep.report.outcome.kind != OutcomeKind::Success || ep.report.replans != 1)
        problems.push_back(tag + ": episode did not recover in one replan");
    }
  }
  std::string detail = "episodes=4 collision_line=" + std::string(saw_collision ? "yes" : "no") +
                       " infeasible_line=" + (saw_infeasible ? "yes" : "no");
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// 7
Verdict failure_taxonomy() {
  struct Case {
    OutcomeKind want;
    WorldSpec world;
    std::string text;
    std::function<std::unique_ptr<MotionPlanner>()> motion;
  };
  auto straight = [] { return std::make_unique<StraightLineMotionPlanner>(); };
  auto oracle_mp = [] { return std::make_unique<OracleMotionPlanner>(); };

  WorldSpec rr = fx::world(4, 2, {{1, 1}, {3, 1}});
  fx::add_box(rr, {0, 0}, {0, 1});
  WorldSpec exec_err = fx::replan_world();

  std::vector<Case> cases;
  // Carry with nothing in the gripper.
  cases.push_back({OutcomeKind::ExecutionErr, exec_err, R"([{"Robot 0": "Move [0.45, 0.95, 0.10] True"}])", oracle_mp});
  cases.push_back({OutcomeKind::RobObsCollision, fx::replan_world(), fx::first_response(fx::FirstFault::Collision), straight});
  cases.push_back({OutcomeKind::RobRobCollision, rr,
                   R"([{"Robot 0": "Move [1.25, 0.50, 0.10] False", "Robot 1": "Move [0.75, 0.50, 0.10] False"}])",
                   straight});
  cases.push_back({OutcomeKind::FarFromTarget, fx::replan_world(), R"([{"Robot 0": "Move [0.45, 0.95, 0.10] False"}])",
                   [] {
                     // inner planner outlives the wrapper through the holder
                     struct Holder final : MotionPlanner {
                       OracleMotionPlanner inner;
                       FaultInjectingMotionPlanner f{inner, 1.0, 7};
                       MotionResponse plan(const MotionQuery& q) override { return f.plan(q); }
                       std::string name() const override { return f.name(); }
                     };
                     return std::unique_ptr<MotionPlanner>(new Holder);
                   }});
  cases.push_back({OutcomeKind::UnreachableMotion, fx::replan_world(), fx::first_response(fx::FirstFault::Infeasible), oracle_mp});
  cases.push_back({OutcomeKind::TaskIncomplete, fx::replan_world(), R"([{"Robot 0": "Move [0.45, 0.95, 0.10] False"}])", oracle_mp});

  int good = 0;
  std::string detail;
  for (const auto& c : cases) {
    const std::string text = c.text;
    ScriptedPlanner planner([text](const PlanRequest&, int) { return text; });
    auto mp = c.motion();
    const auto rep = run_episode(c.world, initial_state(c.world), planner, PlanMode::FullPlan, *mp, EpisodeOptions{});
    const bool hit = rep.outcome.kind == c.want;
    good += hit ? 1 : 0;
    detail += std::string(" ") + std::string(to_string(c.want)) + (hit ? "=ok" : "->" + std::string(to_string(rep.outcome.kind)));
  }
  return {good == 6, std::to_string(good) + "/6 classified:" + detail};
}

// 8
Verdict latency() {
  GenConfig g;
  g.seed = 8;
  g.count = 30;
  g.min_cols = g.max_cols = g.min_rows = g.max_rows = 3;
  g.min_obstacles = g.max_obstacles = 2;
  g.per_config_cap = 2;
  const auto data = generate(g);
  EvalConfig e;
  e.trials = 1;
  e.jobs = 1;
  const EvalReport r = evaluate(data, e);
  const double gen = r.mean_gen_seconds.value_or(1e9), sim = r.mean_sim_seconds.value_or(1e9);
  const bool ok = !data.empty() && gen + sim <= 5.0 && gen > sim && r.success && *r.success == 1.0;
  return {ok, "instances=" + std::to_string(data.size()) + " mean_solve=" + num(gen) + "s mean_simulate=" + num(sim) +
                  "s total=" + num(gen + sim) + "s"};
}

}  // namespace

int main() {
  const std::pair<const char*, Verdict (*)()> criteria[] = {
      {"oracle-closed-loop", oracle_closed_loop}, {"generator-validity", generator_validity},
      {"motion-oracle", motion_oracle},           {"reward-arithmetic", reward_arithmetic},
      {"rollout-harness", rollout_harness},       {"replan-contract", replan_contract},
      {"failure-taxonomy", failure_taxonomy},     {"latency", latency},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = fn();
    } catch (const std::exception& ex) {
      v = {false, std::string("exception: ") + ex.what()};
    }
    if (!v.ok) ++failed;
    std::printf("%s [%d] %s: %s (%.1fs)\n", v.ok ? "PASS" : "FAIL", n, name, v.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
