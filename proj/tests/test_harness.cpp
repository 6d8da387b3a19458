#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "mrtamp/harness.hpp"

using namespace mrtamp;
namespace fs = std::filesystem;

namespace {

GenConfig small(std::uint64_t seed, int count) {
  GenConfig c;
  c.seed = seed;
  c.count = count;
  c.max_cols = c.max_rows = 3;
  c.max_obstacles = 2;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mrtamp_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int count_lines(const std::string& path) {
  std::ifstream f(path);
  return static_cast<int>(std::count(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>(), '\n'));
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

}  // namespace

TEST(Dataset, ManifestHashStableAndResumable) {
  const auto dir = scratch("dataset");
  const GenConfig cfg = small(42, 16);
  const auto a = (dir / "a.jsonl").string();
  const auto b = (dir / "b.jsonl").string();
  const DatasetManifest ma = build_dataset(cfg, a);
  EXPECT_EQ(ma.count, 16);
  EXPECT_EQ(count_lines(a), 16);
  EXPECT_EQ(ma.hash, hex64(fnv1a64(slurp(a))));
  const json mf = json::parse(slurp(manifest_path(a)));
  EXPECT_EQ(mf["hash"], ma.hash);
  EXPECT_EQ(mf["count"], 16);

  // Interrupted after 5 lines plus a torn sixth line, then resumed with more workers.
  const DatasetManifest part = build_dataset(cfg, b, 1, 5);
  EXPECT_EQ(part.count, 5);
  EXPECT_FALSE(fs::exists(manifest_path(b)));
  { std::ofstream(b, std::ios::app) << "{\"id\": 5, \"vari"; }
  const DatasetManifest mb = build_dataset(cfg, b, 3);
  EXPECT_EQ(mb.resumed_from, 5);
  EXPECT_EQ(mb.hash, ma.hash);
  EXPECT_EQ(slurp(a), slurp(b));

  const auto loaded = load_dataset(a);
  ASSERT_EQ(loaded.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(loaded[i].id, i);
  { std::ofstream(a, std::ios::app) << "\n"; }
  EXPECT_THROW(load_dataset(a), std::runtime_error);
}

TEST(Dataset, SplitPresets) {
  const GenConfig test = GenConfig::test_split();
  EXPECT_EQ(test.count, 480);
  EXPECT_EQ(test.seed, 42u);
  const GenConfig train = GenConfig::train_split();
  EXPECT_EQ(train.count, 3400);
  EXPECT_EQ(train.per_config_cap, 50);
  EXPECT_NO_THROW(validate(train));
  EXPECT_LE(train.count, static_cast<int>(size_configs(train).size()) * train.per_config_cap);
  // First train lines: the cap holds on a prefix as well.
  const auto dir = scratch("train");
  GenConfig head = train;
  const auto path = (dir / "train.jsonl").string();
  build_dataset(head, path, 4, 24);
  EXPECT_EQ(count_lines(path), 24);
}

TEST(Evaluate, OracleClosesTheLoop) {
  const auto data = generate(small(50, 8));
  EvalConfig cfg;
  cfg.jobs = 2;
  const EvalReport r = evaluate(data, cfg);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(*r.success, 1.0);
  ASSERT_TRUE(r.step_diff);
  EXPECT_EQ(*r.step_diff, 0.0);
  EXPECT_EQ(r.records.size(), 32u);
  std::set<std::uint64_t> seeds;
  for (const auto& t : r.records) seeds.insert(t.trial_seed);
  EXPECT_EQ(seeds.size(), 32u);
  double sum = *r.success;
  for (const auto& [k, v] : r.histogram) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-3);
  EXPECT_EQ(r.histogram.size(), 6u);
}

TEST(Evaluate, StraightLineMotionFailsMostlyOnObstacles) {
  // Obstacle-dense: 4x4 maps with 4-8 obstacles and at most two robots.
  GenConfig c;
  c.seed = 61;
  c.count = 30;
  c.min_cols = c.max_cols = c.min_rows = c.max_rows = 4;
  c.max_robots = 2;
  c.max_boxes = 3;
  c.min_obstacles = 4;
  c.max_obstacles = 8;
  const auto data = generate(c);
  EvalConfig cfg;
  cfg.motion = "straight";
  cfg.trials = 1;
  cfg.jobs = 4;
  const EvalReport r = evaluate(data, cfg);
  ASSERT_TRUE(r.success);
  EXPECT_LT(*r.success, 1.0);
  OutcomeKind top = OutcomeKind::Success;
  double best = -1;
  for (const auto& [k, v] : r.histogram)
    if (v > best) best = v, top = k;
  EXPECT_EQ(top, OutcomeKind::RobObsCollision);
  for (const auto& [k, v] : r.histogram)
    if (k != OutcomeKind::RobObsCollision) {
      EXPECT_LT(v, best) << to_string(k);
    }
  std::cout << "straight-line motion: Success " << *r.success << ", RobObsCollision " << r.histogram.at(OutcomeKind::RobObsCollision)
            << "\n";
}

TEST(Evaluate, EmptyDatasetHasAbsentMetrics) {
  const EvalReport r = evaluate({}, EvalConfig{});
  EXPECT_EQ(r.instances, 0);
  EXPECT_FALSE(r.success);
  EXPECT_FALSE(r.step_diff);
  EXPECT_TRUE(r.histogram.empty());
  const json j = to_json_value(r);
  EXPECT_TRUE(j["success"].is_null());
  EXPECT_TRUE(j["step_diff"].is_null());

  const auto dir = scratch("empty_report");
  write_report({r}, dir.string());
  EXPECT_EQ(count_lines((dir / "results.csv").string()), 2);
  write_report({}, (dir / "none").string());
  EXPECT_EQ(slurp(dir / "none" / "results.csv"), "planner,motion,mode,instances,trials,Success,StepDiff,gen_seconds,sim_seconds\n");
  EXPECT_EQ(count_lines((dir / "none" / "failures.csv").string()), 1);
}

TEST(Evaluate, PerEpisodeErrorsDoNotAbort) {
  const auto data = generate(small(52, 3));
  EvalConfig cfg;
  cfg.planner = "cmd:exit 0";
  cfg.trials = 2;
  const EvalReport r = evaluate(data, cfg);
  ASSERT_EQ(r.records.size(), 6u);
  for (const auto& t : r.records) {
    EXPECT_EQ(t.kind, OutcomeKind::ExecutionErr);
    EXPECT_FALSE(t.error.empty());
  }
  EXPECT_EQ(*r.success, 0.0);
  EXPECT_FALSE(r.step_diff);
  EXPECT_EQ(r.histogram.at(OutcomeKind::ExecutionErr), 1.0);
}

TEST(Evaluate, MetricsRecomputeFromRawLogAndIgnoreOrder) {
  GenConfig c = small(53, 10);
  c.min_cols = c.min_rows = 3;
  c.min_obstacles = 1;
  const auto data = generate(c);
  EvalConfig cfg;
  cfg.motion = "faulty:0.3:5";
  cfg.mode = PlanMode::NCReplan;
  cfg.trials = 3;
  const EvalReport r = evaluate(data, cfg);

  // Hand recomputation from the JSON trial log.
  const json j = json::parse(to_json_value(r).dump());
  int ok = 0, n = 0;
  long diff = 0;
  std::map<std::string, int> fails;
  for (const auto& t : j["records"]) {
    ++n;
    if (t["kind"] == "Success") {
      ++ok;
      diff += t["plan_len"].get<int>() - t["reference_len"].get<int>();
    } else {
      ++fails[t["kind"].get<std::string>()];
    }
  }
  EXPECT_EQ(n, 30);
  EXPECT_EQ(j["success"].get<double>(), static_cast<double>(ok) / n);
  if (ok) {
    EXPECT_EQ(j["step_diff"].get<double>(), static_cast<double>(diff) / ok);
  }
  for (const auto& [k, v] : fails) EXPECT_EQ(j["histogram"][k].get<double>(), static_cast<double>(v) / n);
  const EvalReport back = eval_report_from_json(j);
  EXPECT_EQ(back.success, r.success);
  EXPECT_EQ(back.step_diff, r.step_diff);
  EXPECT_EQ(back.histogram, r.histogram);

  auto shuffled = data;
  std::mt19937 g(3);
  std::shuffle(shuffled.begin(), shuffled.end(), g);
  cfg.jobs = 3;
  const EvalReport p = evaluate(shuffled, cfg);
  EXPECT_EQ(p.success, r.success);
  EXPECT_EQ(p.step_diff, r.step_diff);
  EXPECT_EQ(p.histogram, r.histogram);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(p.records[i].kind, r.records[i].kind);
    EXPECT_EQ(p.records[i].plan_len, r.records[i].plan_len);
  }
}

TEST(Report, ColumnsAndBars) {
  const auto data = generate(small(54, 4));
  EvalConfig a;
  a.trials = 1;
  EvalConfig b = a;
  b.motion = "straight";
  const std::vector<EvalReport> reps{evaluate(data, a), evaluate(data, b)};
  const auto dir = scratch("report");
  const auto files = write_report(reps, dir.string());
  std::ifstream f(dir / "results.csv");
  std::string header, row;
  std::getline(f, header);
  EXPECT_EQ(header, "planner,motion,mode,instances,trials,Success,StepDiff,gen_seconds,sim_seconds");
  std::getline(f, row);
  EXPECT_EQ(row.rfind("oracle,oracle,FullPlan,4,1,1.00,0.00,", 0), 0u) << row;
  std::getline(f, row);
  EXPECT_EQ(row.rfind("oracle,straight,FullPlan,4,1,", 0), 0u) << row;
  EXPECT_EQ(slurp(dir / "failures.csv").rfind("planner,motion,mode,ExecutionErr,RobObsCollision,RobRobCollision,"
                                                             "FarFromTarget,UnreachableMotion,TaskIncomplete\n", 0),
            0u);
  const std::string svg = slurp(dir / "failures_1.svg");
  std::size_t bars = 0;
  for (auto p = svg.find("class=\"bar\""); p != std::string::npos; p = svg.find("class=\"bar\"", p + 1)) ++bars;
  EXPECT_EQ(bars, 6u);
  for (auto k : kFailureKinds) EXPECT_NE(svg.find(">" + std::string(to_string(k)) + "<"), std::string::npos);
  EXPECT_NE(slurp(dir / "summary.md").find("| oracle | oracle | FullPlan | 4 | 1 | 1.00 | 0.00 |"), std::string::npos);
}

TEST(Specs, PlannerSpecStrings) {
  EXPECT_EQ(make_motion_planner("oracle")->name(), "oracle");
  EXPECT_EQ(make_motion_planner("straight")->name(), "straight");
  EXPECT_EQ(make_motion_planner("faulty:0.3:9")->name(), "faulty:0.3");
  EXPECT_THROW(make_motion_planner("faulty:2"), ConfigError);
  EXPECT_THROW(make_motion_planner("rrt"), ConfigError);
  EXPECT_THROW(make_task_planner("gpt"), ConfigError);
  EXPECT_THROW(make_task_planner("http://nohost"), ConfigError);
  EXPECT_EQ(make_task_planner("oracle")->name(), "oracle");
}

namespace {

// Instance on the observation-example map, scored against the example plan text.
TaskInstance example_instance() {
  TaskInstance t;
  t.id = 77;
  t.world = fx::world(6, 4);
  fx::add_robot(t.world, 0.25, 0.75);
  fx::add_robot(t.world, 2.75, 0.75);
  fx::add_box(t.world, {1, 3}, {1, 2});
  fx::add_box(t.world, {4, 3}, {4, 2});
  t.world.obstacles.push_back({{2, 1}, 0.15, 0.30});
  t.initial = initial_state(t.world);
  t.reference_len = 4;
  return t;
}

}  // namespace

TEST(Service, ScoreEndpointContract) {
  auto data = generate(small(55, 3));
  data.push_back(example_instance());
  const RewardService svc(data);
  const auto& t = data[0];

  const json good{{"instance_id", t.id}, {"plan_text", render_plan(t.reference_plan)}};
  const ServiceReply ok = svc.score(good.dump());
  EXPECT_EQ(ok.status, 200);
  EXPECT_NEAR(ok.body["total"].get<double>(), 1.1, 1e-9);

  const ServiceReply ex =
      svc.score(json{{"instance_id", 77}, {"plan_text", R"([{"Robot 0": "Move [0.75, 1.25, 0.09] True"}])"}}.dump());
  EXPECT_EQ(ex.status, 200);
  EXPECT_EQ(ex.body["r_format"].get<double>(), 0.1);

  for (int stage : {2, 3}) {
    const ServiceReply junk = svc.score(json{{"instance_id", t.id}, {"plan_text", "robot zero go left"}, {"stage", stage}}.dump());
    EXPECT_EQ(junk.status, 200);
    EXPECT_EQ(junk.body["total"].get<double>(), 0.0);
    EXPECT_TRUE(junk.body.contains("format_error"));
  }
  EXPECT_EQ(svc.score(json{{"instance_id", 999}, {"plan_text", "[]"}}.dump()).status, 404);
  EXPECT_EQ(svc.score("{oops").status, 400);
  EXPECT_EQ(svc.score(json{{"instance_id", t.id}}.dump()).status, 400);
  EXPECT_EQ(svc.score(json{{"instance_id", t.id}, {"plan_text", "[]"}, {"stage", 4}}.dump()).status, 400);
  EXPECT_EQ(svc.get_instance(999).status, 404);
  EXPECT_EQ(svc.get_instance(t.id).body["reference_len"], t.reference_len);

  const json s3{{"instance_id", t.id}, {"plan_text", render_plan(t.reference_plan)}, {"stage", 3}, {"motion", "faulty:0.5:1"}};
  EXPECT_EQ(svc.score(s3.dump()).body.dump(), svc.score(s3.dump()).body.dump());
}

TEST(Service, HttpEndpoints) {
  const auto data = generate(small(56, 2));
  const RewardService svc(data);
  httplib::Server srv;
  svc.mount(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  {
    httplib::Client c("127.0.0.1", port);
    auto inst = c.Get("/instance/" + std::to_string(data[1].id));
    ASSERT_TRUE(inst);
    EXPECT_EQ(inst->status, 200);
    EXPECT_EQ(json::parse(inst->body)["id"], data[1].id);
    EXPECT_EQ(c.Get("/instance/12345")->status, 404);

    const json body{{"instance_id", data[1].id}, {"plan_text", "[{}]"}};
    auto a = c.Post("/score", body.dump(), "application/json");
    auto b = c.Post("/score", body.dump(), "application/json");
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->status, 200);
    EXPECT_EQ(a->body, b->body);
    EXPECT_EQ(json::parse(a->body)["format_error"].get<std::string>().find("empty step") != std::string::npos, true);

    const json roll{{"instance_id", data[0].id},
                    {"plans", {render_plan(data[0].reference_plan), "nonsense"}},
                    {"motion", "faulty:0.3:2"}};
    auto r = c.Post("/rollout", roll.dump(), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    const json rj = json::parse(r->body);
    ASSERT_EQ(rj["records"].size(), 2u);
    EXPECT_EQ(rj["records"][1]["reward"]["total"], 0.0);
    EXPECT_EQ(c.Post("/rollout", json{{"instance_id", data[0].id}, {"plans", json::array()}}.dump(), "application/json")->status, 400);
  }
  srv.stop();
  th.join();
}
