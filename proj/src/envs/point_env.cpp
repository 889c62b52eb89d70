#include "comrl/envs/point_env.hpp"

#include "comrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace comrl::envs {

std::string_view to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::PointVel: return "PointVel";
    case TaskFamily::PointDir: return "PointDir";
    case TaskFamily::PointRandParams: return "PointRandParams";
  }
  return "?";
}

TaskFamily parse_family(std::string_view name) {
  if (name == "PointVel") return TaskFamily::PointVel;
  if (name == "PointDir") return TaskFamily::PointDir;
  if (name == "PointRandParams") return TaskFamily::PointRandParams;
  throw ConfigError("unknown task family '" + std::string(name) + "'");
}

void validate(const TaskSpec& task) {
  if (!(task.mass > 0.0) || !std::isfinite(task.mass)) throw ConfigError("task mass must be > 0");
  if (!(task.friction >= 0.0 && task.friction < 1.0)) throw ConfigError("task friction must be in [0, 1)");
  switch (task.family) {
    case TaskFamily::PointVel:
      if (!(task.goal >= 0.0 && task.goal <= kVelGoalMax)) throw ConfigError("PointVel goal outside [0, 3]");
      break;
    case TaskFamily::PointDir:
      if (!(task.goal >= 0.0 && task.goal < 2.0 * std::numbers::pi)) throw ConfigError("PointDir goal outside [0, 2pi)");
      break;
    case TaskFamily::PointRandParams:
      break;
  }
}

double standardized_goal(const TaskSpec& task) {
  switch (task.family) {
    case TaskFamily::PointVel: return (task.goal - 0.5 * kVelGoalMax) / (0.5 * kVelGoalMax);
    case TaskFamily::PointDir: return (task.goal - std::numbers::pi) / std::numbers::pi;
    case TaskFamily::PointRandParams: return 0.0;
  }
  return 0.0;
}

namespace {

TaskSpec draw_task(TaskFamily family, int id, nd::Rng& rng) {
  TaskSpec t;
  t.family = family;
  t.task_id = id;
  switch (family) {
    case TaskFamily::PointVel:
      t.goal = rng.uniform(0.0, kVelGoalMax);
      break;
    case TaskFamily::PointDir:
      t.goal = rng.uniform(0.0, 2.0 * std::numbers::pi);
      break;
    case TaskFamily::PointRandParams:
      t.mass = rng.uniform(kMassMin, kMassMax);
      t.friction = rng.uniform(0.0, kFrictionMax);
      break;
  }
  return t;
}

}  // namespace

TaskSplit sample_tasks(TaskFamily family, int n_train, int n_test, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw ConfigError("sample_tasks needs n_train, n_test >= 1");
  nd::Rng rng = nd::Rng::named(seed, "tasks");
  TaskSplit split;
  for (int i = 0; i < n_train; ++i) split.train.push_back(draw_task(family, i, rng));
  for (int i = 0; i < n_test; ++i) split.test.push_back(draw_task(family, n_train + i, rng));
  return split;
}

EnvState reset(const TaskSpec&, nd::Rng& rng) {
  EnvState s;
  s.position = {rng.normal(0.0, 0.1), rng.normal(0.0, 0.1)};
  s.velocity = {0.0, 0.0};
  s.t = 0;
  return s;
}

EnvState reset(const TaskSpec& task, std::uint64_t seed) {
  nd::Rng rng = nd::Rng::named(seed, "reset");
  return reset(task, rng);
}

StepResult step(const EnvState& state, std::array<double, 2> action, const TaskSpec& task, int horizon) {
  if (state.t >= horizon) throw std::logic_error("step called on a terminal state");
  StepResult out;
  EnvState& n = out.next;
  for (int i = 0; i < 2; ++i) {
    const double a = std::clamp(action[i], -1.0, 1.0);
    n.velocity[i] = (1.0 - task.friction) * state.velocity[i] + (kDt / task.mass) * a;
    n.position[i] = state.position[i] + kDt * n.velocity[i];
  }
  n.t = state.t + 1;
  const auto& v = n.velocity;
  switch (task.family) {
    case TaskFamily::PointVel:
      out.reward = -std::abs(std::hypot(v[0], v[1]) - task.goal);
      break;
    case TaskFamily::PointDir:
      out.reward = v[0] * std::cos(task.goal) + v[1] * std::sin(task.goal);
      break;
    case TaskFamily::PointRandParams:
      out.reward = v[0];
      break;
  }
  out.terminal = n.t == horizon;
  return out;
}

std::array<double, kStateDim> observe(const EnvState& s) {
  return {s.position[0], s.position[1], s.velocity[0], s.velocity[1]};
}

}  // namespace comrl::envs
