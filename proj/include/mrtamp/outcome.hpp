#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mrtamp/geometry.hpp"

namespace mrtamp {

// Closed outcome taxonomy: Success plus four motion-level and two task-level failures.
enum class OutcomeKind {
  Success,
  ExecutionErr,
  RobObsCollision,
  RobRobCollision,
  FarFromTarget,
  UnreachableMotion,
  TaskIncomplete,
};
using FailureKind = OutcomeKind;

inline constexpr std::array<OutcomeKind, 6> kFailureKinds = {
    OutcomeKind::ExecutionErr,  OutcomeKind::RobObsCollision,   OutcomeKind::RobRobCollision,
    OutcomeKind::FarFromTarget, OutcomeKind::UnreachableMotion, OutcomeKind::TaskIncomplete,
};

inline std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Success: return "Success";
    case OutcomeKind::ExecutionErr: return "ExecutionErr";
    case OutcomeKind::RobObsCollision: return "RobObsCollision";
    case OutcomeKind::RobRobCollision: return "RobRobCollision";
    case OutcomeKind::FarFromTarget: return "FarFromTarget";
    case OutcomeKind::UnreachableMotion: return "UnreachableMotion";
    case OutcomeKind::TaskIncomplete: return "TaskIncomplete";
  }
  return "?";
}

inline OutcomeKind outcome_kind_from_string(std::string_view s) {
  for (auto k : {OutcomeKind::Success, OutcomeKind::ExecutionErr, OutcomeKind::RobObsCollision,
                 OutcomeKind::RobRobCollision, OutcomeKind::FarFromTarget,
                 OutcomeKind::UnreachableMotion, OutcomeKind::TaskIncomplete}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown outcome kind: " + std::string(s));
}

inline bool is_motion_level(OutcomeKind k) {
  return k == OutcomeKind::ExecutionErr || k == OutcomeKind::RobObsCollision ||
         k == OutcomeKind::RobRobCollision || k == OutcomeKind::FarFromTarget;
}

struct Outcome {
  OutcomeKind kind = OutcomeKind::Success;
  std::string detail;
  int at_step = -1;
  std::optional<Pose> at_pose;
  std::vector<int> robots;  // robots implicated in the failure, ascending

  bool ok() const { return kind == OutcomeKind::Success; }

  static Outcome success(int step = -1) {
    Outcome o;
    o.at_step = step;
    return o;
  }
  static Outcome failure(OutcomeKind kind, std::string detail, int step = -1,
                         std::optional<Pose> pose = std::nullopt, std::vector<int> robots = {}) {
    Outcome o;
    o.kind = kind;
    o.detail = std::move(detail);
    o.at_step = step;
    o.at_pose = pose;
    o.robots = std::move(robots);
    return o;
  }
};

}  // namespace mrtamp
