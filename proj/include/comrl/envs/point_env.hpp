#pragma once

#include "comrl/ndmath/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace comrl::envs {

enum class TaskFamily { PointVel, PointDir, PointRandParams };

std::string_view to_string(TaskFamily f);
/// Throws ConfigError on an unknown name.
TaskFamily parse_family(std::string_view name);

inline constexpr std::size_t kStateDim = 4;   // position (2), velocity (2)
inline constexpr std::size_t kActionDim = 2;
inline constexpr double kDt = 0.1;
inline constexpr int kDefaultHorizon = 64;

inline constexpr double kVelGoalMax = 3.0;
inline constexpr double kMassMin = 0.5;
inline constexpr double kMassMax = 2.0;
inline constexpr double kFrictionMax = 0.5;

struct TaskSpec {
  TaskFamily family = TaskFamily::PointVel;
  /// Target speed (PointVel) or target angle in radians (PointDir).
  double goal = 0.0;
  double mass = 1.0;
  double friction = 0.0;
  int task_id = 0;

  bool operator==(const TaskSpec&) const = default;
};

/// Throws ConfigError when the goal or dynamics are outside the family range.
void validate(const TaskSpec& task);

/// Task goal mapped to roughly [-1, 1]; 0 for families without a goal.
double standardized_goal(const TaskSpec& task);

struct EnvState {
  std::array<double, 2> position{};
  std::array<double, 2> velocity{};
  int t = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool terminal = false;
};

struct TaskSplit {
  std::vector<TaskSpec> train;
  std::vector<TaskSpec> test;
};

/// i.i.d. draws from the family distribution. Train ids are 0..n_train-1,
/// test ids continue from n_train.
TaskSplit sample_tasks(TaskFamily family, int n_train, int n_test, std::uint64_t seed);

/// Position ~ N(0, 0.01 I), zero velocity.
EnvState reset(const TaskSpec& task, nd::Rng& rng);
EnvState reset(const TaskSpec& task, std::uint64_t seed);

/// Deterministic point-mass step with per-component action clipping.
StepResult step(const EnvState& state, std::array<double, 2> action, const TaskSpec& task,
                int horizon = kDefaultHorizon);

std::array<double, kStateDim> observe(const EnvState& s);

}  // namespace comrl::envs
