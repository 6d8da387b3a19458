#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "mrtamp/mrtamp.hpp"

using namespace mrtamp;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kBudgetExhausted = 3;

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// A world document ({"spec", "state"}) file, or line `id` of a dataset file.
std::pair<WorldSpec, WorldState> load_world(const std::string& world_path, const std::string& dataset, int id) {
  if (!world_path.empty()) {
    const json j = read_json_file(world_path);
    const json& doc = j.contains("world") ? j.at("world") : j;
    return {doc.at("spec").get<WorldSpec>(), doc.at("state").get<WorldState>()};
  }
  if (dataset.empty()) throw ConfigError("need --world or --dataset");
  for (const auto& t : load_dataset(dataset))
    if (t.id == id) return {t.world, t.initial};
  throw ConfigError("no instance " + std::to_string(id) + " in " + dataset);
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrtamp: multi-robot task and motion planning workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config_path;
  int jobs = 1;
  app.add_option("--seed", seed, "RNG seed")->each([&](const std::string&) { seed_given = true; });
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a dataset as JSON-Lines plus manifest");
  std::string split = "test", gen_out;
  int gen_count = -1;
  gen->add_option("--split", split, "test | train | motion")->check(CLI::IsMember({"test", "train", "motion"}));
  gen->add_option("--count", gen_count, "override instance count");
  gen->add_option("--out", gen_out, "output .jsonl path")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "task-level A* on one instance");
  std::string world_path, dataset_path, solve_out;
  int inst_id = 0, max_exp = -1;
  solve->add_option("--world", world_path, "world document JSON");
  solve->add_option("--dataset", dataset_path, "dataset .jsonl");
  solve->add_option("--id", inst_id, "instance id within the dataset");
  solve->add_option("--max-expansions", max_exp, "search budget");
  solve->add_option("--out", solve_out, "write result JSON here");

  // motion
  auto* motion = app.add_subcommand("motion", "frontier search on one motion query");
  std::string query_path, motion_out;
  motion->add_option("--query", query_path, "motion query JSON or motion dataset .jsonl")->required();
  motion->add_option("--id", inst_id, "line id when --query is a dataset");
  motion->add_option("--out", motion_out, "write result JSON here");

  // eval
  auto* eval = app.add_subcommand("eval", "batch evaluation over a dataset");
  EvalConfig ecfg;
  std::string mode = "FullPlan", eval_out, transcripts;
  eval->add_option("--dataset", dataset_path, "dataset .jsonl")->required();
  eval->add_option("--planner", ecfg.planner, "oracle | env | cmd:<command> | http://host:port/path");
  eval->add_option("--motion", ecfg.motion, "oracle | straight | faulty:<rate>[:<seed>]");
  eval->add_option("--mode", mode, "FullPlan | ICReplan | NCReplan")->check(CLI::IsMember({"FullPlan", "ICReplan", "NCReplan"}));
  eval->add_option("--trials", ecfg.trials, "trials per instance")->check(CLI::PositiveNumber);
  eval->add_option("--max-replans", ecfg.max_replans, "replan budget");
  eval->add_option("--limit", gen_count, "evaluate only the first N instances");
  eval->add_option("--out", eval_out, "write report JSON here");
  eval->add_option("--transcripts", transcripts, "directory for per-conversation JSON-Lines");

  // rollout
  auto* roll = app.add_subcommand("rollout", "score candidate plans with the motion-aware reward");
  std::string plans_path, roll_motion = "oracle", roll_out;
  roll->add_option("--dataset", dataset_path, "dataset .jsonl")->required();
  roll->add_option("--id", inst_id, "instance id")->required();
  roll->add_option("--plans", plans_path, "file with one plan text per line")->required();
  roll->add_option("--motion", roll_motion, "motion planner spec");
  roll->add_option("--out", roll_out, "write result JSON here");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP reward service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--dataset", dataset_path, "dataset .jsonl")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks one)");

  // report
  auto* rep = app.add_subcommand("report", "markdown, CSV and SVG from eval reports");
  std::vector<std::string> rep_in;
  std::string rep_out;
  rep->add_option("--in", rep_in, "eval report JSON files");
  rep->add_option("--out", rep_out, "output directory")->required();

  // planner
  auto* plan_srv = app.add_subcommand("planner", "oracle task planner speaking the wire protocol");
  int plan_port = -1;
  plan_srv->add_option("--http", plan_port, "serve POST /plan on this port instead of stdio");

  CLI11_PARSE(app, argc, argv);

  try {
    const json file_cfg = config_path.empty() ? json::object() : read_json_file(config_path);

    if (*gen) {
      GenConfig cfg = split == "train" ? GenConfig::train_split() : split == "motion" ? GenConfig::motion() : GenConfig::test_split();
      if (!file_cfg.empty()) {
        json merged = to_json_value(cfg);
        merged.update(file_cfg);
        cfg = gen_config_from_json(merged);
      }
      if (seed_given) cfg.seed = seed;
      if (gen_count >= 0) cfg.count = gen_count;
      const DatasetManifest m = build_dataset(cfg, gen_out, jobs);
      std::cout << to_json_value(m).dump(2) << "\n";
      return kOk;
    }

    if (*solve) {
      auto [world, state] = load_world(world_path, dataset_path, inst_id);
      TaskSearchConfig scfg;
      if (max_exp > 0) scfg.max_expansions = max_exp;
      if (seed_given) scfg.tie_salt = seed;
      const TaskSearchResult r = plan(world, state, scfg);
      json out{{"status", std::string(to_string(r.status))},
               {"plan_text", render_plan(r.plan)},
               {"length", r.plan.size()},
               {"expansions", r.stats.expansions},
               {"seconds", r.stats.seconds},
               {"ledger_size", r.ledger.size()}};
      if (!r.reason.empty()) out["reason"] = r.reason;
      emit(out, solve_out);
      if (r.status == SearchStatus::BudgetExhausted) return kBudgetExhausted;
      return r.solved() ? kOk : 1;
    }

    if (*motion) {
      MotionQuery q;
      if (query_path.size() > 6 && query_path.substr(query_path.size() - 6) == ".jsonl") {
        std::ifstream f(query_path);
        std::string line;
        bool found = false;
        while (std::getline(f, line)) {
          if (line.empty()) continue;
          const MotionInstance m = motion_instance_from_json(json::parse(line));
          if (m.id == inst_id) {
            q = m.query;
            found = true;
            break;
          }
        }
        if (!found) throw ConfigError("no motion instance " + std::to_string(inst_id));
      } else {
        q = motion_query_from_json(read_json_file(query_path));
      }
      const MotionSearchResult s = search(q);
      json out{{"status", std::string(to_string(s.status))}, {"expansions", s.expansions}};
      if (!s.reason.empty()) out["reason"] = s.reason;
      if (s.plan) {
        out["plan"] = to_json_value(*s.plan);
        out["execution"] = to_json_value(execute_single(q, *s.plan).outcome);
      }
      emit(out, motion_out);
      return kOk;
    }

    if (*eval) {
      if (file_cfg.contains("planner")) ecfg.planner = file_cfg["planner"];
      if (file_cfg.contains("motion")) ecfg.motion = file_cfg["motion"];
      if (file_cfg.contains("mode")) mode = file_cfg["mode"];
      if (file_cfg.contains("trials")) ecfg.trials = file_cfg["trials"];
      if (file_cfg.contains("max_replans")) ecfg.max_replans = file_cfg["max_replans"];
      ecfg.mode = plan_mode_from_string(mode);
      ecfg.seed = seed;
      ecfg.jobs = jobs;
      auto data = load_dataset(dataset_path);
      if (gen_count >= 0 && gen_count < static_cast<int>(data.size())) data.resize(static_cast<std::size_t>(gen_count));
      Transcript tr;
      const EvalReport r = evaluate(data, ecfg, transcripts.empty() ? nullptr : &tr);
      if (!transcripts.empty()) {
        std::filesystem::create_directories(transcripts);
        tr.write_dir(transcripts);
      }
      json out = to_json_value(r);
      emit(out, eval_out);
      if (!eval_out.empty()) {
        out.erase("records");
        std::cout << out.dump(2) << "\n";
      }
      return kOk;
    }

    if (*roll) {
      const auto data = load_dataset(dataset_path);
      const TaskInstance* t = nullptr;
      for (const auto& d : data)
        if (d.id == inst_id) t = &d;
      if (!t) throw ConfigError("no instance " + std::to_string(inst_id));
      std::vector<PlanCandidate> plans;
      std::ifstream f(plans_path);
      if (!f) throw ConfigError("cannot read " + plans_path);
      std::string line;
      while (std::getline(f, line))
        if (!line.empty()) plans.emplace_back(line);
      auto mp = make_motion_planner(roll_motion, seed);
      const RolloutBatch b = rollout(t->world, t->initial, t->reference_len, plans, *mp);
      json recs = json::array(), buf = json::array();
      for (const auto& r : b.records) recs.push_back(to_json_value(r));
      for (const auto& e : b.buffer) buf.push_back(to_json_value(e));
      emit({{"instance_id", t->id}, {"records", recs}, {"buffer", buf}}, roll_out);
      return kOk;
    }

    if (*serve) {
      const RewardService svc(load_dataset(dataset_path));
      httplib::Server srv;
      svc.mount(srv);
      if (port == 0) port = srv.bind_to_any_port(host);
      else if (!srv.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
      std::cerr << "serving " << svc.size() << " instances on http://" << host << ":" << port << "\n";
      srv.listen_after_bind();
      return kOk;
    }

    if (*rep) {
      std::vector<EvalReport> reports;
      for (const auto& p : rep_in) reports.push_back(eval_report_from_json(read_json_file(p)));
      for (const auto& f : write_report(reports, rep_out)) std::cout << f << "\n";
      return kOk;
    }

    if (*plan_srv) {
      OracleTaskPlanner oracle;
      auto handler = [&](const json& m) { return oracle.respond(m); };
      if (plan_port >= 0) {
        httplib::Server srv;
        mount_planner_http(srv, handler);
        int p = plan_port;
        if (p == 0) p = srv.bind_to_any_port("127.0.0.1");
        else if (!srv.bind_to_port("127.0.0.1", p)) throw std::runtime_error("cannot bind port " + std::to_string(p));
        std::cerr << "planner on http://127.0.0.1:" << p << "/plan\n";
        srv.listen_after_bind();
      } else {
        serve_stdio(std::cin, std::cout, handler);
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const BudgetExhausted& e) {
    std::cerr << "budget exhausted: " << e.what() << "\n";
    return kBudgetExhausted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
