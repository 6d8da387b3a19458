#pragma once

// Planner wire protocol and the FullPlan / ICReplan / NCReplan episode drivers.
//
// Messages are single-line JSON objects.
//
//   plan_request  {"type":"plan_request", "mode":"FullPlan"|"ICReplan"|"NCReplan",
//                  "conversation_id":str, "round":int, "observation":str,
//                  "context":[{"observation":str, "response":str}, ...],
//                  "instance_id":int, "trial_seed":int}
//   plan_response {"type":"plan_response", "conversation_id":str, "text":str}
//   error         {"type":"error", "conversation_id":str, "message":str}
//
// "round" counts requests within one conversation. In ICReplan the context holds every
// earlier exchange of the conversation; FullPlan and NCReplan requests carry an empty context.
// Transports: child-process stdio (one message per line each way) or HTTP POST /plan with
// the same bodies. MRTAMP_PLANNER_CMD names the child command for the stdio transport.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>

#include "mrtamp/execution.hpp"
#include "mrtamp/plan_text.hpp"
#include "mrtamp/rewards.hpp"
#include "mrtamp/task_search.hpp"

namespace mrtamp {

enum class PlanMode { FullPlan, ICReplan, NCReplan };

inline std::string to_string(PlanMode m) {
  switch (m) {
    case PlanMode::FullPlan: return "FullPlan";
    case PlanMode::ICReplan: return "ICReplan";
    case PlanMode::NCReplan: return "NCReplan";
  }
  return "?";
}

inline PlanMode plan_mode_from_string(std::string_view s) {
  if (s == "FullPlan") return PlanMode::FullPlan;
  if (s == "ICReplan") return PlanMode::ICReplan;
  if (s == "NCReplan") return PlanMode::NCReplan;
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

class PlannerTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Exchange {
  std::string observation;
  std::string response;
};

struct PlanRequest {
  PlanMode mode = PlanMode::FullPlan;
  std::string conversation_id;
  int round = 0;
  std::string observation;
  std::vector<Exchange> context;
  int instance_id = -1;
  std::uint64_t trial_seed = 0;
};

inline json to_json_value(const PlanRequest& r) {
  json ctx = json::array();
  for (const auto& e : r.context) ctx.push_back({{"observation", e.observation}, {"response", e.response}});
  return {{"type", "plan_request"},       {"mode", to_string(r.mode)},   {"conversation_id", r.conversation_id},
          {"round", r.round},             {"observation", r.observation}, {"context", ctx},
          {"instance_id", r.instance_id}, {"trial_seed", r.trial_seed}};
}

inline PlanRequest plan_request_from_json(const json& j) {
  if (!j.is_object() || j.value("type", "") != "plan_request") throw ProtocolError("expected a plan_request message");
  PlanRequest r;
  try {
    r.mode = plan_mode_from_string(j.at("mode").get<std::string>());
    r.conversation_id = j.at("conversation_id").get<std::string>();
    r.observation = j.at("observation").get<std::string>();
    r.round = j.value("round", 0);
    r.instance_id = j.value("instance_id", -1);
    r.trial_seed = j.value("trial_seed", std::uint64_t{0});
    for (const auto& e : j.value("context", json::array()))
      r.context.push_back({e.at("observation").get<std::string>(), e.at("response").get<std::string>()});
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad plan_request: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(std::string("bad plan_request: ") + e.what());
  }
  return r;
}

inline json plan_response(const std::string& conversation_id, const std::string& text) {
  return {{"type", "plan_response"}, {"conversation_id", conversation_id}, {"text", text}};
}

inline json error_message(const std::string& conversation_id, const std::string& message) {
  return {{"type", "error"}, {"conversation_id", conversation_id}, {"message", message}};
}

// ---------------------------------------------------------------------------
// Transcripts

// Per-conversation log of every message sent and received, in order.
class Transcript {
 public:
  Transcript() = default;
  Transcript(const Transcript& o) {
    std::lock_guard lock(o.mu_);
    order_ = o.order_;
    lines_ = o.lines_;
  }
  Transcript& operator=(const Transcript& o) {
    if (this == &o) return *this;
    std::scoped_lock lock(mu_, o.mu_);
    order_ = o.order_;
    lines_ = o.lines_;
    return *this;
  }
  void record(const std::string& conversation_id, const std::string& dir, const json& msg) {
    std::lock_guard lock(mu_);
    if (!lines_.count(conversation_id)) order_.push_back(conversation_id);
    lines_[conversation_id].push_back({{"dir", dir}, {"message", msg}});
  }
  std::vector<std::string> conversations() const {
    std::lock_guard lock(mu_);
    return order_;
  }
  std::vector<json> lines(const std::string& conversation_id) const {
    std::lock_guard lock(mu_);
    auto it = lines_.find(conversation_id);
    return it == lines_.end() ? std::vector<json>{} : it->second;
  }
  std::vector<json> requests() const {
    std::lock_guard lock(mu_);
    std::vector<json> out;
    for (const auto& id : order_)
      for (const auto& l : lines_.at(id))
        if (l["dir"] == "send") out.push_back(l["message"]);
    return out;
  }
  std::string jsonl(const std::string& conversation_id) const {
    std::string out;
    for (const auto& l : lines(conversation_id)) out += l.dump() + "\n";
    return out;
  }
  // One <conversation_id>.jsonl file per conversation.
  void write_dir(const std::string& dir) const {
    for (const auto& id : conversations()) {
      std::ofstream f(dir + "/" + id + ".jsonl", std::ios::binary);
      if (!f) throw std::runtime_error("cannot write transcript in " + dir);
      f << jsonl(id);
    }
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<json>> lines_;
};

// Checks the context contract on the wire: ICReplan request k of a conversation carries the k-1
// earlier exchanges verbatim, FullPlan and NCReplan requests carry none and NCReplan never
// sends a second request on one conversation. Returns the first violation.
inline std::optional<std::string> check_mode_contract(const Transcript& t, PlanMode mode) {
  for (const auto& id : t.conversations()) {
    std::vector<Exchange> seen;
    std::optional<std::string> pending;
    int requests = 0;
    for (const auto& line : t.lines(id)) {
      const json& m = line["message"];
      if (line["dir"] == "send") {
        const PlanRequest r = plan_request_from_json(m);
        if (r.mode != mode) return id + ": request mode " + to_string(r.mode);
        if (r.round != requests) return id + ": round " + std::to_string(r.round) + " out of order";
        if (mode == PlanMode::ICReplan) {
          if (r.context.size() != seen.size())
            return id + ": request " + std::to_string(requests) + " carries " + std::to_string(r.context.size()) +
                   " prior exchanges, expected " + std::to_string(seen.size());
          for (std::size_t k = 0; k < seen.size(); ++k)
            if (r.context[k].observation != seen[k].observation || r.context[k].response != seen[k].response)
              return id + ": prior exchange " + std::to_string(k) + " altered";
        } else {
          if (!r.context.empty()) return id + ": context must be empty in " + to_string(mode);
          if (requests > 0) return id + ": conversation reused in " + to_string(mode);
        }
        pending = r.observation;
        ++requests;
      } else if (m.value("type", "") == "plan_response") {
        if (!pending) return id + ": response without request";
        seen.push_back({*pending, m.value("text", "")});
        pending.reset();
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Planner handles

class PlannerHandle {
 public:
  virtual ~PlannerHandle() = default;
  // Sends one request message and returns the planner's reply message.
  virtual json exchange(const json& request) = 0;
  virtual std::string name() const = 0;
};

// Reference task planner: reads only the observation text, reconstructs the world and runs A*.
class OracleTaskPlanner : public PlannerHandle {
 public:
  explicit OracleTaskPlanner(TaskSearchConfig cfg = {}) : cfg_(cfg) {}
  json exchange(const json& request) override { return respond(request); }
  std::string name() const override { return "oracle"; }

  json respond(const json& request) const {
    std::string conv = request.is_object() ? request.value("conversation_id", "") : "";
    try {
      const PlanRequest r = plan_request_from_json(request);
      const auto [world, state] = world_from_observation(parse_observation(r.observation));
      const TaskSearchResult res = plan(world, state, cfg_);
      if (!res.solved()) return plan_response(conv, "no plan found: " + res.reason);
      return plan_response(conv, render_plan(res.plan));
    } catch (const std::exception& e) {
      return error_message(conv, e.what());
    }
  }

 private:
  TaskSearchConfig cfg_;
};

// Returns canned or computed text per request; used for fault-injection fixtures.
class ScriptedPlanner : public PlannerHandle {
 public:
  using Fn = std::function<std::string(const PlanRequest&, int call)>;
  explicit ScriptedPlanner(Fn fn, std::string name = "scripted") : fn_(std::move(fn)), name_(std::move(name)) {}
  json exchange(const json& request) override {
    const PlanRequest r = plan_request_from_json(request);
    return plan_response(r.conversation_id, fn_(r, calls_++));
  }
  std::string name() const override { return name_; }
  int calls() const { return calls_; }

 private:
  Fn fn_;
  std::string name_;
  int calls_ = 0;
};

// Child process speaking NDJSON on stdin/stdout.
class SubprocessPlanner : public PlannerHandle {
 public:
  explicit SubprocessPlanner(std::string command, double timeout_s = 120.0)
      : command_(std::move(command)), timeout_s_(timeout_s) {
    int in[2], out[2];
    if (pipe2(in, O_CLOEXEC) != 0 || pipe2(out, O_CLOEXEC) != 0) throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      dup2(in[0], 0);
      dup2(out[1], 1);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in[0]);
    close(out[1]);
    to_child_ = in[1];
    from_child_ = out[0];
    signal(SIGPIPE, SIG_IGN);
  }

  static std::unique_ptr<SubprocessPlanner> from_env(double timeout_s = 120.0) {
    const char* cmd = std::getenv("MRTAMP_PLANNER_CMD");
    if (!cmd || !*cmd) throw std::runtime_error("MRTAMP_PLANNER_CMD is not set");
    return std::make_unique<SubprocessPlanner>(cmd, timeout_s);
  }

  SubprocessPlanner(const SubprocessPlanner&) = delete;
  SubprocessPlanner& operator=(const SubprocessPlanner&) = delete;

  ~SubprocessPlanner() override {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }

  json exchange(const json& request) override {
    const std::string line = request.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = write(to_child_, line.data() + off, line.size() - off);
      if (n <= 0) throw ProtocolError("planner process closed its input");
      off += static_cast<std::size_t>(n);
    }
    const std::string reply = read_line();
    try {
      return json::parse(reply);
    } catch (const json::exception& e) {
      throw ProtocolError("planner sent invalid JSON: " + reply.substr(0, 200));
    }
  }

  std::string name() const override { return "subprocess:" + command_; }

 private:
  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s_);
    for (;;) {
      const auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw PlannerTimeout("planner did not answer within " + std::to_string(timeout_s_) + " s");
      pollfd p{from_child_, POLLIN, 0};
      const int rc = poll(&p, 1, static_cast<int>(left.count()));
      if (rc == 0) continue;
      if (rc < 0) throw ProtocolError("poll failed");
      char tmp[65536];
      const ssize_t n = read(from_child_, tmp, sizeof tmp);
      if (n <= 0) throw ProtocolError("planner process exited");
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  double timeout_s_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buf_;
};

// POST <path> with the request body, reply body is the response message.
class HttpPlanner : public PlannerHandle {
 public:
  HttpPlanner(std::string host, int port, std::string path = "/plan", double timeout_s = 120.0)
      : host_(std::move(host)), port_(port), path_(std::move(path)), client_(host_, port_) {
    const auto sec = static_cast<time_t>(timeout_s);
    const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
    client_.set_read_timeout(sec, usec);
    client_.set_connection_timeout(5, 0);
  }

  json exchange(const json& request) override {
    auto res = client_.Post(path_, request.dump(), "application/json");
    if (!res) {
      if (res.error() == httplib::Error::Read) throw PlannerTimeout("planner HTTP read timed out");
      throw ProtocolError("planner HTTP request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) throw ProtocolError("planner HTTP status " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception&) {
      throw ProtocolError("planner sent invalid JSON over HTTP");
    }
  }

  std::string name() const override { return "http://" + host_ + ":" + std::to_string(port_) + path_; }

 private:
  std::string host_;
  int port_;
  std::string path_;
  httplib::Client client_;
};

using MessageHandler = std::function<json(const json&)>;

// Serves a handler over NDJSON lines until EOF. Unparseable lines get an error message back.
inline void serve_stdio(std::istream& in, std::ostream& out, const MessageHandler& handler) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json reply;
    try {
      reply = handler(json::parse(line));
    } catch (const json::exception& e) {
      reply = error_message("", std::string("invalid JSON: ") + e.what());
    } catch (const std::exception& e) {
      reply = error_message("", e.what());
    }
    out << reply.dump() << "\n" << std::flush;
  }
}

inline void mount_planner_http(httplib::Server& srv, MessageHandler handler, const std::string& path = "/plan") {
  srv.Post(path, [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    json reply;
    try {
      reply = handler(json::parse(req.body));
    } catch (const json::exception& e) {
      res.status = 400;
      reply = error_message("", std::string("invalid JSON: ") + e.what());
    }
    res.set_content(reply.dump(), "application/json");
  });
}

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeOptions {
  int max_replans = 6;
  int instance_id = -1;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  StepRunOptions step;
  Transcript* transcript = nullptr;
  RewardConfig reward;
};

struct EpisodeRound {
  std::string conversation_id;
  int round = 0;
  std::string response;
  bool well_formed = false;
  int steps_executed = 0;  // steps of this response that succeeded
  Outcome outcome;         // how the round ended
};

struct EpisodeReport {
  Outcome outcome;
  TaskPlan executed;       // successful steps across all rounds
  int plan_len = 0;        // executed.size()
  int steps_attempted = 0;
  int replans = 0;
  int format_errors = 0;
  double gen_seconds = 0.0;
  double sim_seconds = 0.0;
  double r_format = 0.0;   // format term of the final response
  std::vector<EpisodeRound> rounds;
  WorldState final_state;
  std::string error;       // transport failure, if any
};

inline std::string conversation_name(const EpisodeOptions& opt, int k) {
  return "ep" + std::to_string(opt.instance_id) + "-t" + std::to_string(opt.trial) + "-c" + std::to_string(k);
}

inline EpisodeReport run_episode(const WorldSpec& world, const WorldState& initial, PlannerHandle& planner, PlanMode mode,
                                 MotionPlanner& motion, const EpisodeOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  EpisodeReport rep;
  WorldState state = initial;
  int conv_index = 0;
  std::string conv = conversation_name(opt, conv_index);
  std::vector<Exchange> context;
  int round = 0;
  std::optional<Feedback> feedback;

  for (;;) {
    PlanRequest req;
    req.mode = mode;
    req.conversation_id = conv;
    req.round = round;
    req.observation = render_observation(state, world, feedback);
    if (mode == PlanMode::ICReplan) req.context = context;
    req.instance_id = opt.instance_id;
    req.trial_seed = opt.trial_seed;
    const json msg = to_json_value(req);
    if (opt.transcript) opt.transcript->record(conv, "send", msg);

    const auto g0 = clock::now();
    json reply;
    try {
      reply = planner.exchange(msg);
    } catch (...) {
      rep.gen_seconds += std::chrono::duration<double>(clock::now() - g0).count();
      throw;
    }
    rep.gen_seconds += std::chrono::duration<double>(clock::now() - g0).count();
    if (opt.transcript) opt.transcript->record(conv, "recv", reply);
    if (!reply.is_object()) throw ProtocolError("planner reply is not an object");
    const std::string type = reply.value("type", "");
    if (type == "error") throw ProtocolError("planner error: " + reply.value("message", ""));
    if (type != "plan_response") throw ProtocolError("unexpected message type '" + type + "'");
    if (reply.value("conversation_id", conv) != conv) throw ProtocolError("reply for another conversation");
    if (!reply.contains("text") || !reply["text"].is_string()) throw ProtocolError("plan_response without text");
    const std::string text = reply["text"].get<std::string>();

    EpisodeRound er;
    er.conversation_id = conv;
    er.round = round;
    er.response = text;
    const auto s0 = clock::now();
    const PlanParse parsed = parse_plan(text);
    er.well_formed = parsed.ok();
    TaskStep last_step;
    if (!parsed.ok()) {
      ++rep.format_errors;
      er.outcome = format_error_outcome(*parsed.error);
    } else {
      std::vector<Outcome> trace;
      for (const auto& step : *parsed.plan) {
        ++rep.steps_attempted;
        last_step = step;
        StepRun sr = run_task_step(world, state, step, motion, opt.step);
        trace.push_back(sr.outcome);
        if (!sr.outcome.ok()) break;
        state = std::move(sr.next);
        rep.executed.push_back(step);
        ++er.steps_executed;
      }
      if (trace.empty()) trace.push_back(Outcome::success(state.step_index));
      er.outcome = classify_episode(trace, state, world);
    }
    rep.sim_seconds += std::chrono::duration<double>(clock::now() - s0).count();
    rep.r_format = er.well_formed ? opt.reward.format : 0.0;
    rep.outcome = er.outcome;
    rep.rounds.push_back(er);

    if (er.outcome.ok() || mode == PlanMode::FullPlan || rep.replans >= opt.max_replans) break;

    ++rep.replans;
    feedback = Feedback{last_step, er.outcome};
    if (mode == PlanMode::ICReplan) {
      context.push_back({req.observation, text});
      ++round;
    } else {
      conv = conversation_name(opt, ++conv_index);
      round = 0;
    }
  }
  rep.plan_len = static_cast<int>(rep.executed.size());
  rep.final_state = state;
  return rep;
}

inline json to_json_value(const EpisodeReport& r) {
  json rounds = json::array();
  for (const auto& er : r.rounds)
    rounds.push_back({{"conversation_id", er.conversation_id},
                      {"round", er.round},
                      {"well_formed", er.well_formed},
                      {"steps_executed", er.steps_executed},
                      {"outcome", to_json_value(er.outcome)}});
  json j{{"outcome", to_json_value(r.outcome)}, {"plan_len", r.plan_len},       {"steps_attempted", r.steps_attempted},
         {"replans", r.replans},                {"format_errors", r.format_errors}, {"gen_seconds", r.gen_seconds},
         {"sim_seconds", r.sim_seconds},        {"r_format", r.r_format},        {"rounds", rounds},
         {"executed_plan", render_plan(r.executed)}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace mrtamp
