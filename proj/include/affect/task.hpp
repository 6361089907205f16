#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "affect/errors.hpp"

namespace affect {

// EXPR: 8-way expression classification (neutral, anger, disgust, fear,
// happiness, sadness, surprise, other). AU: 12 binary action units.
// VA: valence and arousal in [-1, 1].
enum class Task { Expr, Au, Va };

inline constexpr std::size_t kExprClasses = 8;
inline constexpr std::size_t kActionUnits = 12;
inline constexpr std::size_t kAffectDims = 2;

inline constexpr float kExprInvalid = -1.0f;
inline constexpr float kAuInvalid = -1.0f;
inline constexpr float kVaInvalid = -5.0f;

/// Width of the model head for a task.
constexpr std::size_t output_width(Task t) noexcept {
  switch (t) {
    case Task::Expr: return kExprClasses;
    case Task::Au: return kActionUnits;
    case Task::Va: return kAffectDims;
  }
  return 0;
}

/// Number of label columns stored per frame.
constexpr std::size_t label_width(Task t) noexcept {
  return t == Task::Expr ? 1 : output_width(t);
}

constexpr float invalid_label(Task t) noexcept {
  return t == Task::Va ? kVaInvalid : kExprInvalid;
}

inline std::string_view task_name(Task t) noexcept {
  switch (t) {
    case Task::Expr: return "expr";
    case Task::Au: return "au";
    case Task::Va: return "va";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "expr") return Task::Expr;
  if (s == "au") return Task::Au;
  if (s == "va") return Task::Va;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected expr, au or va)");
}

}  // namespace affect
