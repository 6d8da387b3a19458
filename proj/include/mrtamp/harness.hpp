#pragma once

// Dataset files, batch evaluation, report emission and the HTTP reward service.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "mrtamp/instance_gen.hpp"
#include "mrtamp/protocol.hpp"
#include "mrtamp/rewards.hpp"

namespace mrtamp {

// ---------------------------------------------------------------------------
// Planner construction from short spec strings

// oracle | straight | faulty:<rate>[:<seed>]  (faulty wraps the oracle)
class OwnedFaultyPlanner : public MotionPlanner {
 public:
  OwnedFaultyPlanner(double rate, std::uint64_t seed) : faulty_(inner_, rate, seed), rate_(rate) {}
  MotionResponse plan(const MotionQuery& q) override { return faulty_.plan(q); }
  std::string name() const override {
    std::ostringstream os;
    os << "faulty:" << rate_;
    return os.str();
  }

 private:
  OracleMotionPlanner inner_;
  FaultInjectingMotionPlanner faulty_;
  double rate_;
};

inline std::unique_ptr<MotionPlanner> make_motion_planner(const std::string& spec, std::uint64_t seed = 0) {
  if (spec == "oracle") return std::make_unique<OracleMotionPlanner>();
  if (spec == "straight") return std::make_unique<StraightLineMotionPlanner>();
  if (spec.rfind("faulty:", 0) == 0) {
    const std::string rest = spec.substr(7);
    const auto colon = rest.find(':');
    double rate = 0.0;
    try {
      rate = std::stod(rest.substr(0, colon));
      if (colon != std::string::npos) seed = std::stoull(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad motion planner spec: " + spec);
    }
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("fault rate must be in [0, 1]: " + spec);
    return std::make_unique<OwnedFaultyPlanner>(rate, seed);
  }
  throw ConfigError("unknown motion planner: " + spec + " (oracle, straight, faulty:<rate>[:<seed>])");
}

// oracle | env | cmd:<shell command> | http://host:port[/path]
inline std::unique_ptr<PlannerHandle> make_task_planner(const std::string& spec, double timeout_s = 120.0) {
  if (spec == "oracle") return std::make_unique<OracleTaskPlanner>();
  if (spec == "env") return SubprocessPlanner::from_env(timeout_s);
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessPlanner>(spec.substr(4), timeout_s);
  if (spec.rfind("http://", 0) == 0) {
    const std::string rest = spec.substr(7);
    const auto slash = rest.find('/');
    const std::string hostport = rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/plan" : rest.substr(slash);
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) throw ConfigError("http planner needs host:port: " + spec);
    int port = 0;
    try {
      port = std::stoi(hostport.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in " + spec);
    }
    return std::make_unique<HttpPlanner>(hostport.substr(0, colon), port, path, timeout_s);
  }
  throw ConfigError("unknown task planner: " + spec + " (oracle, env, cmd:<command>, http://host:port/path)");
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetManifest {
  json config;
  std::string file;
  int count = 0;
  std::string hash;  // FNV-1a 64 of the file bytes
  int resumed_from = 0;
};

inline json to_json_value(const DatasetManifest& m) {
  return {{"config", m.config}, {"file", m.file}, {"count", m.count}, {"hash", m.hash}, {"format", "mrtamp-dataset-1"}};
}

inline std::string manifest_path(const std::string& data_path) { return data_path + ".manifest.json"; }

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

namespace detail {

// Number of complete, parseable lines at the start of an existing file. Truncates anything after.
inline int usable_prefix(const std::string& path, bool motion) {
  if (!std::filesystem::exists(path)) return 0;
  const std::string data = read_file(path);
  std::size_t pos = 0, keep = 0;
  int n = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    try {
      const json j = json::parse(data.substr(pos, nl - pos));
      const int id = motion ? motion_instance_from_json(j).id : task_instance_from_json(j).id;
      if (id != n) break;
    } catch (const std::exception&) {
      break;
    }
    ++n;
    pos = keep = nl + 1;
  }
  std::filesystem::resize_file(path, keep);
  return n;
}

}  // namespace detail

// Streams instances [k, count) to out_path, where k is the number of valid lines already there.
// `stop_after` (>= 0) ends the run early after that many new lines, used to simulate interruption.
inline DatasetManifest build_dataset(const GenConfig& cfg, const std::string& out_path, int jobs = 1,
                                     int stop_after = -1) {
  validate(cfg);
  const bool motion = cfg.variant == Variant::Motion2x2;
  DatasetManifest m;
  m.config = to_json_value(cfg);
  m.file = std::filesystem::path(out_path).filename().string();
  const int start = detail::usable_prefix(out_path, motion);
  m.resumed_from = start;
  const auto order = motion ? std::vector<SizeConfig>{} : config_order(cfg);
  std::ofstream out(out_path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  jobs = std::max(1, jobs);
  int end = cfg.count;
  if (stop_after >= 0) end = std::min(end, start + stop_after);
  auto line = [&](int i) {
    return motion ? to_json_value(generate_motion_one(cfg, i)).dump() : to_json_value(generate_one(cfg, i, order)).dump();
  };
  for (int i = start; i < end;) {
    const int block = std::min(end - i, jobs * 4);
    std::vector<std::future<std::string>> fut;
    for (int k = 0; k < block; ++k) fut.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, line, i + k));
    for (auto& f : fut) out << f.get() << "\n";
    out.flush();
    i += block;
  }
  out.close();
  m.count = end;
  m.hash = file_hash(out_path);
  if (end == cfg.count) {
    std::ofstream mf(manifest_path(out_path), std::ios::binary);
    mf << to_json_value(m).dump(2) << "\n";
  }
  return m;
}

inline std::vector<TaskInstance> load_dataset(const std::string& path, bool check_manifest = true) {
  if (check_manifest && std::filesystem::exists(manifest_path(path))) {
    const json mf = json::parse(read_file(manifest_path(path)));
    const std::string want = mf.at("hash").get<std::string>();
    const std::string got = file_hash(path);
    if (want != got) throw std::runtime_error(path + ": hash " + got + " does not match manifest " + want);
  }
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(task_instance_from_json(json::parse(line)));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct TrialRecord {
  int instance_id = 0;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  OutcomeKind kind = OutcomeKind::ExecutionErr;
  std::string detail;
  int plan_len = 0;
  int reference_len = 0;
  int replans = 0;
  double gen_seconds = 0.0;
  double sim_seconds = 0.0;
  std::string error;
};

struct EvalConfig {
  PlanMode mode = PlanMode::FullPlan;
  int trials = 4;
  std::uint64_t seed = 0;
  int max_replans = 6;
  int jobs = 1;
  std::string planner = "oracle";
  std::string motion = "oracle";
};

struct EvalReport {
  std::string planner;
  std::string motion;
  PlanMode mode = PlanMode::FullPlan;
  int instances = 0;
  int trials = 4;
  std::vector<TrialRecord> records;  // sorted by (instance_id, trial)
  std::optional<double> success;
  std::optional<double> step_diff;
  std::map<OutcomeKind, double> histogram;  // failure fractions of all trials, empty when no trials
  std::optional<double> mean_gen_seconds;
  std::optional<double> mean_sim_seconds;
};

inline std::uint64_t trial_seed(std::uint64_t base, int instance_id, int trial) {
  return splitmix64(base ^ splitmix64((static_cast<std::uint64_t>(instance_id) << 8) | static_cast<std::uint64_t>(trial)));
}

// Recomputes every aggregate from the raw trial records.
inline void compute_metrics(EvalReport& r) {
  std::sort(r.records.begin(), r.records.end(),
            [](const TrialRecord& a, const TrialRecord& b) { return std::tie(a.instance_id, a.trial) < std::tie(b.instance_id, b.trial); });
  r.success.reset();
  r.step_diff.reset();
  r.histogram.clear();
  r.mean_gen_seconds.reset();
  r.mean_sim_seconds.reset();
  if (r.records.empty()) return;
  const double n = static_cast<double>(r.records.size());
  int ok = 0;
  long diff = 0;
  double gen = 0, sim = 0;
  for (auto k : kFailureKinds) r.histogram[k] = 0.0;
  for (const auto& t : r.records) {
    gen += t.gen_seconds;
    sim += t.sim_seconds;
    if (t.kind == OutcomeKind::Success) {
      ++ok;
      diff += t.plan_len - t.reference_len;
    } else {
      r.histogram[t.kind] += 1.0;
    }
  }
  for (auto& [k, v] : r.histogram) v /= n;
  r.success = ok / n;
  if (ok > 0) r.step_diff = static_cast<double>(diff) / ok;
  r.mean_gen_seconds = gen / n;
  r.mean_sim_seconds = sim / n;
}

using TaskPlannerFactory = std::function<std::unique_ptr<PlannerHandle>()>;
using MotionPlannerFactory = std::function<std::unique_ptr<MotionPlanner>(std::uint64_t trial_seed)>;

inline TrialRecord run_trial(const TaskInstance& t, int trial, const TaskPlannerFactory& make_planner,
                             const MotionPlannerFactory& make_motion, const EvalConfig& cfg, Transcript* transcript) {
  TrialRecord rec;
  rec.instance_id = t.id;
  rec.trial = trial;
  rec.trial_seed = trial_seed(cfg.seed, t.id, trial);
  rec.reference_len = t.reference_len;
  EpisodeOptions opt;
  opt.max_replans = cfg.max_replans;
  opt.instance_id = t.id;
  opt.trial = trial;
  opt.trial_seed = rec.trial_seed;
  opt.transcript = transcript;
  try {
    auto planner = make_planner();
    auto motion = make_motion(rec.trial_seed);
    const EpisodeReport ep = run_episode(t.world, t.initial, *planner, cfg.mode, *motion, opt);
    rec.kind = ep.outcome.kind;
    rec.detail = ep.outcome.detail;
    rec.plan_len = ep.plan_len;
    rec.replans = ep.replans;
    rec.gen_seconds = ep.gen_seconds;
    rec.sim_seconds = ep.sim_seconds;
  } catch (const std::exception& e) {
    rec.kind = OutcomeKind::ExecutionErr;
    rec.detail = e.what();
    rec.error = e.what();
  }
  return rec;
}

inline EvalReport evaluate(const std::vector<TaskInstance>& dataset, const TaskPlannerFactory& make_planner,
                           const MotionPlannerFactory& make_motion, const EvalConfig& cfg, Transcript* transcript = nullptr) {
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  EvalReport rep;
  rep.planner = cfg.planner;
  rep.motion = cfg.motion;
  rep.mode = cfg.mode;
  rep.instances = static_cast<int>(dataset.size());
  rep.trials = cfg.trials;
  const int total = rep.instances * cfg.trials;
  rep.records.resize(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < total; i = next++)
      rep.records[static_cast<std::size_t>(i)] =
          run_trial(dataset[static_cast<std::size_t>(i / cfg.trials)], i % cfg.trials, make_planner, make_motion, cfg, transcript);
  };
  const int jobs = std::max(1, std::min(cfg.jobs, std::max(total, 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  compute_metrics(rep);
  return rep;
}

inline EvalReport evaluate(const std::vector<TaskInstance>& dataset, const EvalConfig& cfg, Transcript* transcript = nullptr) {
  make_motion_planner(cfg.motion);  // reject bad specs before any episode runs
  const std::string ps = cfg.planner, ms = cfg.motion;
  return evaluate(
      dataset, [ps] { return make_task_planner(ps); }, [ms](std::uint64_t s) { return make_motion_planner(ms, s); }, cfg,
      transcript);
}

inline json to_json_value(const TrialRecord& t) {
  json j{{"instance_id", t.instance_id}, {"trial", t.trial},          {"trial_seed", t.trial_seed},
         {"kind", std::string(to_string(t.kind))}, {"detail", t.detail}, {"plan_len", t.plan_len},
         {"reference_len", t.reference_len}, {"replans", t.replans},  {"gen_seconds", t.gen_seconds},
         {"sim_seconds", t.sim_seconds}};
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

inline TrialRecord trial_record_from_json(const json& j) {
  TrialRecord t;
  t.instance_id = j.at("instance_id").get<int>();
  t.trial = j.at("trial").get<int>();
  t.trial_seed = j.value("trial_seed", std::uint64_t{0});
  t.kind = outcome_kind_from_string(j.at("kind").get<std::string>());
  t.detail = j.value("detail", "");
  t.plan_len = j.at("plan_len").get<int>();
  t.reference_len = j.at("reference_len").get<int>();
  t.replans = j.value("replans", 0);
  t.gen_seconds = j.value("gen_seconds", 0.0);
  t.sim_seconds = j.value("sim_seconds", 0.0);
  t.error = j.value("error", "");
  return t;
}

inline json to_json_value(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json hist = json::object();
  for (const auto& [k, v] : r.histogram) hist[std::string(to_string(k))] = v;
  json recs = json::array();
  for (const auto& t : r.records) recs.push_back(to_json_value(t));
  return {{"planner", r.planner},
          {"motion", r.motion},
          {"mode", to_string(r.mode)},
          {"instances", r.instances},
          {"trials", r.trials},
          {"success", opt(r.success)},
          {"step_diff", opt(r.step_diff)},
          {"histogram", hist},
          {"mean_gen_seconds", opt(r.mean_gen_seconds)},
          {"mean_sim_seconds", opt(r.mean_sim_seconds)},
          {"records", recs}};
}

// Aggregates are recomputed from the records, never trusted from the file.
inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  r.planner = j.value("planner", "");
  r.motion = j.value("motion", "");
  r.mode = plan_mode_from_string(j.value("mode", "FullPlan"));
  r.instances = j.value("instances", 0);
  r.trials = j.value("trials", 4);
  for (const auto& t : j.value("records", json::array())) r.records.push_back(trial_record_from_json(t));
  compute_metrics(r);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string fixed(const std::optional<double>& v, int prec = 2) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, std::abs(*v) < 0.5 * std::pow(10.0, -prec) ? 0.0 : *v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

}  // namespace detail

inline std::string failure_svg(const EvalReport& r) {
  const int w = 640, h = 320, left = 50, bottom = 250, bar_w = 70, gap = 20;
  double top_val = 0.0;
  for (const auto& [k, v] : r.histogram) top_val = std::max(top_val, v);
  if (top_val <= 0.0) top_val = 1.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
     << "\">\n";
  os << "<title>" << detail::xml_escape(r.planner + " / " + r.motion + " / " + to_string(r.mode)) << "</title>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << w - 10 << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  int i = 0;
  for (auto k : kFailureKinds) {
    const double v = r.histogram.count(k) ? r.histogram.at(k) : 0.0;
    const double bh = 200.0 * v / top_val;
    const int x = left + gap + i * (bar_w + gap);
    char buf[256];
    std::snprintf(buf, sizeof buf, "<rect class=\"bar\" x=\"%d\" y=\"%.1f\" width=\"%d\" height=\"%.1f\" fill=\"%s\"/>\n", x,
                  bottom - bh, bar_w, bh, is_motion_level(k) ? "#4c72b0" : "#dd8452");
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.3f</text>\n",
                  x + bar_w / 2, bottom - bh - 4, v);
    os << buf;
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << bottom + 16 << "\" font-size=\"9\" text-anchor=\"middle\">"
       << to_string(k) << "</text>\n";
    ++i;
  }
  os << "</svg>\n";
  return os.str();
}

// summary.md, results.csv (Success/StepDiff per planner-motion pair), failures.csv and one
// failures_<k>.svg per report.
inline std::vector<std::string> write_report(const std::vector<EvalReport>& reports, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& body) {
    const std::string p = (std::filesystem::path(out_dir) / name).string();
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p);
    f << body;
    files.push_back(p);
  };
  std::ostringstream res, fail, md;
  res << "planner,motion,mode,instances,trials,Success,StepDiff,gen_seconds,sim_seconds\n";
  fail << "planner,motion,mode";
  for (auto k : kFailureKinds) fail << "," << to_string(k);
  fail << "\n";
  md << "# Evaluation summary\n\n";
  md << "| planner | motion | mode | instances | trials | Success | StepDiff | gen s | sim s |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string head = detail::csv_field(r.planner) + "," + detail::csv_field(r.motion) + "," + to_string(r.mode);
    res << head << "," << r.instances << "," << r.trials << "," << detail::fixed(r.success) << ","
        << detail::fixed(r.step_diff) << "," << detail::fixed(r.mean_gen_seconds, 4) << ","
        << detail::fixed(r.mean_sim_seconds, 4) << "\n";
    fail << head;
    for (auto k : kFailureKinds)
      fail << "," << (r.histogram.empty() ? "" : detail::fixed(r.histogram.count(k) ? r.histogram.at(k) : 0.0, 3));
    fail << "\n";
    auto cell = [](const std::optional<double>& v, int p = 2) { return v ? detail::fixed(v, p) : std::string("n/a"); };
    md << "| " << r.planner << " | " << r.motion << " | " << to_string(r.mode) << " | " << r.instances << " | " << r.trials
       << " | " << cell(r.success) << " | " << cell(r.step_diff) << " | " << cell(r.mean_gen_seconds, 4) << " | "
       << cell(r.mean_sim_seconds, 4) << " |\n";
  }
  if (reports.empty()) md << "\nNo evaluations recorded.\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].histogram.empty()) continue;
    const std::string name = "failures_" + std::to_string(i) + ".svg";
    put(name, failure_svg(reports[i]));
    md << "\n![failures " << i << "](" << name << ")\n";
  }
  put("results.csv", res.str());
  put("failures.csv", fail.str());
  put("summary.md", md.str());
  return files;
}

// ---------------------------------------------------------------------------
// Reward service

struct ServiceReply {
  int status = 200;
  json body;
};

// Stateless request handlers over a fixed instance set. Each request builds its own planners.
class RewardService {
 public:
  explicit RewardService(std::vector<TaskInstance> instances, RewardConfig cfg = {}) : cfg_(cfg) {
    for (auto& t : instances) {
      const int id = t.id;
      by_id_.emplace(id, std::move(t));
    }
  }

  ServiceReply get_instance(int id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return {404, {{"error", "unknown instance " + std::to_string(id)}}};
    const auto& t = it->second;
    return {200,
            {{"id", t.id},
             {"world", world_document(t.world, t.initial)},
             {"reference_len", t.reference_len},
             {"observation", render_observation(t.initial, t.world)}}};
  }

  ServiceReply score(const std::string& body) const {
    json req;
    if (auto bad = parse_body(body, req)) return *bad;
    if (!req.contains("plan_text") || !req["plan_text"].is_string()) return {400, {{"error", "plan_text (string) required"}}};
    const int stage = req.value("stage", 2);
    if (stage != 2 && stage != 3) return {400, {{"error", "stage must be 2 or 3"}}};
    const TaskInstance* t = nullptr;
    if (auto miss = lookup(req, t)) return *miss;
    std::unique_ptr<MotionPlanner> motion;
    try {
      motion = make_motion_planner(req.value("motion", "oracle"), req.value("seed", std::uint64_t{0}));
    } catch (const ConfigError& e) {
      return {400, {{"error", e.what()}}};
    }
    const std::string text = req["plan_text"].get<std::string>();
    RewardBreakdown r;
    Outcome outcome;
    int n_infeasible = 0;
    if (stage == 3) {
      const RolloutRecord rec = rollout_one(t->world, t->initial, t->reference_len, text, 0, *motion, cfg_);
      r = rec.reward;
      outcome = rec.outcome;
      n_infeasible = rec.n_infeasible;
    } else {
      const PlanParse p = parse_plan(text);
      if (!p.ok()) {
        outcome = format_error_outcome(*p.error);
        r = task_reward_stage2(0, outcome, t->reference_len, false, cfg_);
        r.format_error = p.error->what();
      } else {
        const PlanRun run = run_plan(t->world, t->initial, *p.plan, *motion);
        outcome = run.outcome;
        r = task_reward_stage2(static_cast<int>(p.plan->size()), outcome, t->reference_len, true, cfg_);
      }
    }
    json out = to_json_value(r);
    out["instance_id"] = t->id;
    out["stage"] = stage;
    out["outcome"] = to_json_value(outcome);
    if (stage == 3) out["n_infeasible"] = n_infeasible;
    return {200, out};
  }

  ServiceReply rollout_plans(const std::string& body) const {
    json req;
    if (auto bad = parse_body(body, req)) return *bad;
    const TaskInstance* t = nullptr;
    if (auto miss = lookup(req, t)) return *miss;
    if (!req.contains("plans") || !req["plans"].is_array() || req["plans"].empty())
      return {400, {{"error", "plans (non-empty array of strings) required"}}};
    std::vector<PlanCandidate> plans;
    for (const auto& p : req["plans"]) {
      if (!p.is_string()) return {400, {{"error", "plans must be strings"}}};
      plans.emplace_back(p.get<std::string>());
    }
    std::unique_ptr<MotionPlanner> motion;
    try {
      motion = make_motion_planner(req.value("motion", "oracle"), req.value("seed", std::uint64_t{0}));
    } catch (const ConfigError& e) {
      return {400, {{"error", e.what()}}};
    }
    const RolloutBatch b = rollout(t->world, t->initial, t->reference_len, plans, *motion, cfg_);
    json recs = json::array(), buf = json::array();
    for (const auto& r : b.records) recs.push_back(to_json_value(r));
    for (const auto& e : b.buffer) buf.push_back(to_json_value(e));
    return {200, {{"instance_id", t->id}, {"records", recs}, {"buffer", buf}}};
  }

  void mount(httplib::Server& srv) const {
    auto send = [](httplib::Response& res, const ServiceReply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    srv.Get(R"(/instance/(-?\d+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_instance(std::stoi(req.matches[1])));
    });
    srv.Post("/score", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, guarded([&] { return score(req.body); })); });
    srv.Post("/rollout", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, guarded([&] { return rollout_plans(req.body); }));
    });
  }

  std::size_t size() const { return by_id_.size(); }

 private:
  template <class F>
  static ServiceReply guarded(F&& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return {500, {{"error", e.what()}}};
    }
  }

  static std::optional<ServiceReply> parse_body(const std::string& body, json& out) {
    try {
      out = json::parse(body);
    } catch (const json::exception& e) {
      return ServiceReply{400, {{"error", std::string("invalid JSON body: ") + e.what()}}};
    }
    if (!out.is_object()) return ServiceReply{400, {{"error", "body must be an object"}}};
    return std::nullopt;
  }

  std::optional<ServiceReply> lookup(const json& req, const TaskInstance*& t) const {
    if (!req.contains("instance_id") || !req["instance_id"].is_number_integer())
      return ServiceReply{400, {{"error", "instance_id (integer) required"}}};
    const auto it = by_id_.find(req["instance_id"].get<int>());
    if (it == by_id_.end()) return ServiceReply{404, {{"error", "unknown instance " + req["instance_id"].dump()}}};
    t = &it->second;
    return std::nullopt;
  }

  std::map<int, TaskInstance> by_id_;
  RewardConfig cfg_;
};

}  // namespace mrtamp
