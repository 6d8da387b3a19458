#pragma once

// Text boundary to external planners.
//
// Plan grammar (whitespace = [ \t\r\n]*, allowed between JSON tokens only):
//   plan    = "[" [ step { "," step } ] "]"
//   step    = "{" entry { "," entry } "}"
//   entry   = '"Robot ' int '"' ":" '"' command '"'
//   command = "Move" sp+ "[" num "," num "," num "]" sp+ ( "True" | "False" )
//   num     = [ "-" ] digit+ [ "." digit+ ]          (blanks allowed around "," and inside [ ])
// Text outside the last top-level bracketed block, and everything up to the last think
// marker, is ignored.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mrtamp/sim.hpp"
#include "mrtamp/world.hpp"

namespace mrtamp {

struct FormatError {
  std::size_t position = 0;  // byte offset into the original text
  std::string message;

  std::string what() const { return message + " at position " + std::to_string(position); }
};

struct PlanParse {
  std::optional<TaskPlan> plan;
  std::optional<FormatError> error;
  bool ok() const { return plan.has_value(); }
};

class FormatException : public std::runtime_error {
 public:
  explicit FormatException(FormatError e) : std::runtime_error(e.what()), error(std::move(e)) {}
  FormatError error;
};

// Shortest decimal with at least two fractional digits that reads back to the same double.
inline std::string fmt_num(double v) {
  if (v == 0.0) v = 0.0;  // no "-0.00"
  char buf[400];
  for (int prec = 2; prec <= 340; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string vec2(Vec3 p) { return "[" + fmt2(p.x) + ", " + fmt2(p.y) + ", " + fmt2(p.z) + "]"; }

inline std::string render_command(const RobotCommand& c) {
  return "Move [" + fmt_num(c.target.x) + ", " + fmt_num(c.target.y) + ", " + fmt_num(c.target.z) + "] " +
         (c.carry ? "True" : "False");
}

inline std::string render_step(const TaskStep& step) {
  std::string out = "{";
  for (std::size_t i = 0; i < step.size(); ++i) {
    if (i) out += ", ";
    out += "\"Robot " + std::to_string(step[i].robot_id) + "\": \"" + render_command(step[i]) + "\"";
  }
  return out + "}";
}

inline std::string render_plan(const TaskPlan& plan) {
  std::string out = "[";
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i) out += ", ";
    out += render_step(plan[i]);
  }
  return out + "]";
}

namespace detail {

class PlanParser {
 public:
  PlanParser(std::string_view text, std::size_t offset) : s_(text), base_(offset) {}

  TaskPlan parse_plan() {
    TaskPlan plan;
    ws();
    expect('[', "expected '[' opening the step list");
    ws();
    if (peek() == ']') {
      ++i_;
      return finish(plan);
    }
    for (;;) {
      ws();
      plan.push_back(parse_step());
      ws();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      expect(']', "expected ',' or ']' after step");
      return finish(plan);
    }
  }

  TaskStep parse_step() {
    TaskStep step;
    expect('{', "expected '{' opening a step");
    ws();
    if (peek() == '}') error("empty step");
    for (;;) {
      ws();
      const std::size_t at = i_;
      RobotCommand c = parse_entry();
      for (const auto& prev : step)
        if (prev.robot_id == c.robot_id) error("Robot " + std::to_string(c.robot_id) + " appears twice in one step", at);
      step.push_back(c);
      ws();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      expect('}', "expected ',' or '}' after robot entry");
      return step;
    }
  }

  // "Move [x, y, z] Bool" with the surrounding quotes already consumed.
  void parse_command(RobotCommand& c) {
    literal("Move", "expected 'Move'");
    if (peek() != ' ') error("expected blank after 'Move'");
    blanks();
    expect('[', "expected '[' opening the target vector");
    double v[3];
    int n = 0;
    for (;;) {
      blanks();
      const std::size_t at = i_;
      if (peek() == ']') error("target vector needs 3 coordinates, got " + std::to_string(n), at);
      const double x = number();
      if (n == 3) error("target vector needs 3 coordinates, got more", at);
      v[n++] = x;
      blanks();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      if (peek() == ']') {
        if (n != 3) error("target vector needs 3 coordinates, got " + std::to_string(n));
        ++i_;
        break;
      }
      error("expected ',' or ']' in target vector");
    }
    c.target = {v[0], v[1], v[2]};
    if (peek() != ' ') error("expected blank before carry flag");
    blanks();
    if (s_.substr(i_, 4) == "True") {
      c.carry = true;
      i_ += 4;
    } else if (s_.substr(i_, 5) == "False") {
      c.carry = false;
      i_ += 5;
    } else {
      error("carry flag must be True or False");
    }
  }

  bool at_end() const { return i_ >= s_.size(); }
  std::size_t pos() const { return i_; }
  [[noreturn]] void error(std::string msg) { error(std::move(msg), i_); }
  [[noreturn]] void error(std::string msg, std::size_t at) { throw FormatException({base_ + at, std::move(msg)}); }

 private:
  TaskPlan finish(TaskPlan& plan) {
    ws();
    if (!at_end()) error("trailing characters after step list");
    return plan;
  }

  RobotCommand parse_entry() {
    RobotCommand c;
    expect('"', "expected '\"Robot <k>\"'");
    literal("Robot ", "expected 'Robot <k>' key");
    c.robot_id = integer();
    expect('"', "expected closing quote after robot key");
    ws();
    expect(':', "expected ':' after robot key");
    ws();
    expect('"', "expected quoted command");
    parse_command(c);
    expect('"', "expected closing quote after command");
    return c;
  }

  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }
  void ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\n' || s_[i_] == '\r')) ++i_;
  }
  void blanks() {
    while (i_ < s_.size() && s_[i_] == ' ') ++i_;
  }
  void expect(char c, const char* msg) {
    if (peek() != c) error(msg);
    ++i_;
  }
  void literal(std::string_view lit, const char* msg) {
    if (s_.substr(i_, lit.size()) != lit) error(msg);
    i_ += lit.size();
  }
  int integer() {
    const std::size_t start = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    if (i_ == start) error("expected robot index");
    int v = 0;
    auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + i_, v);
    if (ec != std::errc{}) error("robot index out of range", start);
    return v;
  }
  double number() {
    const std::size_t start = i_;
    if (peek() == '-') ++i_;
    const std::size_t digits = i_;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    if (i_ == digits) error("expected number", start);
    if (peek() == '.') {
      ++i_;
      const std::size_t frac = i_;
      while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
      if (i_ == frac) error("expected digits after '.'", start);
    }
    return std::strtod(std::string(s_.substr(start, i_ - start)).c_str(), nullptr);
  }

  std::string_view s_;
  std::size_t base_;
  std::size_t i_ = 0;
};

// End of the last think marker (<think>, </think>, <think >), or 0.
inline std::size_t after_think(std::string_view text) {
  static const std::regex re(R"(<\s*/?\s*think\s*>)", std::regex::icase);
  std::size_t end = 0;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
    end = static_cast<std::size_t>(it->position() + it->length());
  return end;
}

// [begin, end) of the last top-level bracketed block (quotes respected); nullopt if none.
struct Block {
  std::size_t begin;
  std::size_t end;
};
inline std::optional<Block> last_block(std::string_view text, std::size_t from, std::optional<std::size_t>* unclosed) {
  std::optional<Block> best;
  int depth = 0;
  bool in_str = false;
  std::size_t open = 0;
  for (std::size_t i = from; i < text.size(); ++i) {
    const char c = text[i];
    if (depth > 0 && c == '"') in_str = !in_str;
    if (in_str) continue;
    if (c == '[') {
      if (depth == 0) open = i;
      ++depth;
    } else if (c == ']' && depth > 0) {
      if (--depth == 0) best = Block{open, i + 1};
    }
  }
  if (depth > 0 && unclosed) *unclosed = open;
  return best;
}

}  // namespace detail

inline PlanParse parse_plan(std::string_view text) {
  PlanParse out;
  const std::size_t from = detail::after_think(text);
  std::optional<std::size_t> unclosed;
  const auto block = detail::last_block(text, from, &unclosed);
  if (!block) {
    out.error = FormatError{unclosed.value_or(from), unclosed ? "unterminated step list" : "no bracketed step list"};
    return out;
  }
  try {
    detail::PlanParser p(text.substr(block->begin, block->end - block->begin), block->begin);
    out.plan = p.parse_plan();
  } catch (const FormatException& e) {
    out.error = e.error;
  }
  return out;
}

inline TaskPlan parse_plan_or_throw(std::string_view text) {
  PlanParse r = parse_plan(text);
  if (!r.ok()) throw FormatException(*r.error);
  return *r.plan;
}

// A single command string, e.g. "Move [0.75, 1.25, 0.09] True".
inline RobotCommand parse_command(std::string_view text, int robot_id = 0) {
  detail::PlanParser p(text, 0);
  RobotCommand c;
  c.robot_id = robot_id;
  p.parse_command(c);
  if (!p.at_end()) p.error("trailing characters after command");
  return c;
}

// ---------------------------------------------------------------------------
// Failure feedback

inline std::string fail_line(const Outcome& o) {
  auto robot = [&](std::size_t i) { return o.robots.size() > i ? std::to_string(o.robots[i]) : std::string("?"); };
  const std::string pose = o.at_pose ? vec2(*o.at_pose) : std::string("[?, ?, ?]");
  switch (o.kind) {
    case OutcomeKind::Success: return "OK";
    case OutcomeKind::RobObsCollision: return "FAIL: collision predicted at " + pose;
    case OutcomeKind::RobRobCollision:
      return "FAIL: Robot " + robot(0) + " and Robot " + robot(1) + " collision predicted at " + pose;
    case OutcomeKind::UnreachableMotion: return "FAIL: Robot " + robot(0) + " motion infeasible";
    case OutcomeKind::FarFromTarget: return "FAIL: Robot " + robot(0) + " far from target at " + pose;
    case OutcomeKind::TaskIncomplete: {
      const auto sp = o.detail.find(' ');
      std::string obj = o.detail.rfind("Object ", 0) == 0 ? o.detail.substr(0, o.detail.find(' ', sp + 1)) : "Object ?";
      return "FAIL: task incomplete, " + obj + " not at target";
    }
    case OutcomeKind::ExecutionErr:
      if (o.robots.empty()) return "FAIL: plan format error: " + o.detail;
      return "FAIL: Robot " + robot(0) + " execution error: " + o.detail;
  }
  return "FAIL";
}

inline Outcome format_error_outcome(const FormatError& e) {
  return Outcome::failure(OutcomeKind::ExecutionErr, e.what());
}

// ---------------------------------------------------------------------------
// Observation

struct Feedback {
  TaskStep previous_step;
  Outcome outcome;
  friend bool operator==(const Feedback& a, const Feedback& b) {
    return a.previous_step == b.previous_step && a.outcome.kind == b.outcome.kind;
  }
};

struct Observation {
  struct Object {
    Pose pos;
    Pose target;
  };
  struct Robot {
    Pose base;
    Pose arm;
    double reach = 0.8;
    std::optional<int> carrying;
  };
  struct Obstacle {
    Pose center;
    double radius = 0.15;
    double height = 0.30;
  };
  int map_cols = 0;
  int map_rows = 0;
  double pitch = 0.5;
  std::vector<Object> objects;
  std::vector<Robot> robots;
  std::vector<Obstacle> obstacles;
  std::optional<std::string> previous_plan;  // feedback section, verbatim
  std::optional<std::string> fail;
};

inline std::string render_observation(const WorldState& state, const WorldSpec& world,
                                      const std::optional<Feedback>& feedback = std::nullopt) {
  std::ostringstream os;
  const std::string in = "    ";
  os << "<observation>\n";
  os << "Map: " << world.map_cols << "x" << world.map_rows << " cells, pitch=" << fmt2(world.cell_pitch) << "\n";
  os << "Object positions:\n";
  for (std::size_t b = 0; b < world.boxes.size(); ++b)
    os << in << "Object " << b << ": " << vec2(state.box_pos.at(b)) << ", target="
       << vec2(box_rest_pose(world, world.boxes[b].target)) << "\n";
  os << "Robot states:\n";
  for (std::size_t r = 0; r < world.robots.size(); ++r) {
    const auto& rs = world.robots[r];
    os << in << "Robot " << r << ": base=" << vec2(rs.base()) << ", arm=" << vec2(state.arm_pos.at(r))
       << ", reach=" << fmt2(rs.reach_radius) << ", carrying=";
    if (state.carrying.at(r)) os << "Object " << *state.carrying[r];
    else os << "None";
    os << "\n";
  }
  os << "Obstacles:\n";
  if (world.obstacles.empty()) os << in << "None\n";
  for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
    const auto& o = world.obstacles[i];
    os << in << "Obstacle " << i << ": " << vec2(cell_center(world, o.cell)) << ", radius=" << fmt2(o.radius)
       << ", height=" << fmt2(o.height) << "\n";
  }
  if (feedback) {
    os << "Execution feedback:\n";
    os << in << "Previous plan: " << render_step(feedback->previous_step) << "\n";
    os << in << fail_line(feedback->outcome) << "\n";
  }
  os << "</observation>";
  return os.str();
}

class ObservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Pose parse_vec(const std::string& s) {
  double x, y, z;
  if (std::sscanf(s.c_str(), "[%lf, %lf, %lf]", &x, &y, &z) != 3) throw ObservationError("bad vector: " + s);
  return {x, y, z};
}

}  // namespace detail

// Inverse of render_observation, reading the last observation block in the text.
inline Observation parse_observation(std::string_view text) {
  const std::string s(text);
  const auto open = s.rfind("<observation>");
  const auto close = s.find("</observation>", open == std::string::npos ? 0 : open);
  if (open == std::string::npos || close == std::string::npos) throw ObservationError("no observation block");
  std::istringstream is(s.substr(open + 13, close - open - 13));
  Observation obs;
  std::string line, section;
  static const std::regex map_re(R"(Map: (\d+)x(\d+) cells, pitch=([0-9.]+))");
  static const std::regex obj_re(R"(Object (\d+): (\[[^\]]*\]), target=(\[[^\]]*\]))");
  static const std::regex rob_re(
      R"(Robot (\d+): base=(\[[^\]]*\]), arm=(\[[^\]]*\]), reach=([0-9.]+), carrying=(None|Object (\d+)))");
  static const std::regex obs_re(R"(Obstacle (\d+): (\[[^\]]*\]), radius=([0-9.]+), height=([0-9.]+))");
  std::smatch m;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] != ' ') {
      if (std::regex_match(line, m, map_re)) {
        obs.map_cols = std::stoi(m[1]);
        obs.map_rows = std::stoi(m[2]);
        obs.pitch = std::stod(m[3]);
        continue;
      }
      section = line;
      continue;
    }
    const std::string body = line.substr(line.find_first_not_of(' '));
    if (section == "Object positions:") {
      if (!std::regex_match(body, m, obj_re)) throw ObservationError("bad object line: " + body);
      obs.objects.push_back({detail::parse_vec(m[2]), detail::parse_vec(m[3])});
    } else if (section == "Robot states:") {
      if (!std::regex_match(body, m, rob_re)) throw ObservationError("bad robot line: " + body);
      Observation::Robot r{detail::parse_vec(m[2]), detail::parse_vec(m[3]), std::stod(m[4]), std::nullopt};
      if (m[6].matched) r.carrying = std::stoi(m[6]);
      obs.robots.push_back(r);
    } else if (section == "Obstacles:") {
      if (body == "None") continue;
      if (!std::regex_match(body, m, obs_re)) throw ObservationError("bad obstacle line: " + body);
      obs.obstacles.push_back({detail::parse_vec(m[2]), std::stod(m[3]), std::stod(m[4])});
    } else if (section == "Execution feedback:") {
      if (body.rfind("Previous plan: ", 0) == 0) obs.previous_plan = body.substr(15);
      else obs.fail = body;
    } else {
      throw ObservationError("line outside any section: " + line);
    }
  }
  if (obs.map_cols <= 0 || obs.map_rows <= 0) throw ObservationError("missing Map line");
  return obs;
}

// World and state described by an observation. Home blocks are rebuilt from the base cell.
inline std::pair<WorldSpec, WorldState> world_from_observation(const Observation& obs) {
  WorldSpec w;
  w.map_cols = obs.map_cols;
  w.map_rows = obs.map_rows;
  w.cell_pitch = obs.pitch;
  WorldState s;
  for (std::size_t i = 0; i < obs.robots.size(); ++i) {
    const auto& r = obs.robots[i];
    RobotSpec rs;
    rs.id = static_cast<int>(i);
    rs.base_x = r.base.x;
    rs.base_y = r.base.y;
    rs.reach_radius = r.reach;
    const int jc = static_cast<int>(std::lround(r.base.x / w.cell_pitch));
    const int jr = static_cast<int>(std::lround(r.base.y / w.cell_pitch));
    rs.home_block = {Cell{jc - 1, jr - 1}, Cell{jc, jr - 1}, Cell{jc - 1, jr}, Cell{jc, jr}};
    rs.arm_rest_z = w.tol.hover_z;
    w.robots.push_back(rs);
    s.arm_pos.push_back(r.arm);
    s.carrying.push_back(r.carrying);
  }
  for (const auto& o : obs.obstacles) {
    const auto c = cell_of(w, o.center);
    if (!c) throw ObservationError("obstacle outside map");
    w.obstacles.push_back({*c, o.radius, o.height});
  }
  for (std::size_t b = 0; b < obs.objects.size(); ++b) {
    const auto from = cell_of(w, obs.objects[b].pos);
    const auto to = cell_of(w, obs.objects[b].target);
    if (!from || !to) throw ObservationError("object outside map");
    w.boxes.push_back({static_cast<int>(b), *from, *to});
    s.box_pos.push_back(obs.objects[b].pos);
  }
  return {w, s};
}

}  // namespace mrtamp
