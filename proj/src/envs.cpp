#include "vinslab/envs.hpp"

#include <algorithm>
#include <cmath>

#include "vinslab/errors.hpp"
#include "vinslab/rng.hpp"

namespace vinslab {

namespace {

std::atomic<std::uint64_t> g_step_calls{0};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Eigen::Vector2d xy(const State& s, int offset) { return s.segment<2>(offset); }

const std::vector<Action>& grid_moves() {
  static const std::vector<Action> moves = [] {
    std::vector<Action> m(4, Action(2));
    m[0] << 1, 0;
    m[1] << -1, 0;
    m[2] << 0, 1;
    m[3] << 0, -1;
    return m;
  }();
  return moves;
}

void require_state(const EnvSpec& spec, const State& state) {
  if (state.size() != spec.state_dim) throw ShapeError("state has the wrong dimension for " + spec.name);
}

}  // namespace

EnvSpec make_grid() { return EnvSpec{}; }

EnvSpec make_reach() {
  EnvSpec s;
  s.kind = EnvKind::reach;
  s.name = "reach";
  s.state_dim = 4;
  s.action_dim = 2;
  s.horizon = 60;
  s.action_bound = 0.08;
  s.goal_tolerance = 0.05;
  s.y_low = 0.3;
  s.y_high = 0.7;
  s.start_dy = 0.02;
  return s;
}

EnvSpec make_push() {
  EnvSpec s;
  s.kind = EnvKind::push;
  s.name = "push";
  s.state_dim = 6;
  s.action_dim = 2;
  s.horizon = 100;
  s.action_bound = 0.08;
  s.goal_tolerance = 0.05;
  s.y_low = 0.3;
  s.y_high = 0.7;
  s.start_dy = 0.0;
  s.push_goal_low = 0.45;
  s.push_goal_high = 0.55;
  return s;
}

EnvSpec make_env(std::string_view name) {
  if (name == "grid") return make_grid();
  if (name == "reach") return make_reach();
  if (name == "push") return make_push();
  throw ConfigError("unknown environment: " + std::string(name));
}

void validate(const EnvSpec& spec) {
  if (spec.horizon < 1) throw ConfigError("horizon must be at least 1");
  if (!(spec.action_bound > 0)) throw ConfigError("action bound must be positive");
  if (spec.kind == EnvKind::grid) {
    if (spec.grid_width < 1 || spec.grid_height < 1) throw ConfigError("grid must be non-empty");
    auto inside = [&](Cell c) { return c.x >= 0 && c.x < spec.grid_width && c.y >= 0 && c.y < spec.grid_height; };
    if (!inside(spec.start) || !inside(spec.goal)) throw ConfigError("grid start and goal must lie inside the grid");
    if (spec.start == spec.goal) throw ConfigError("grid start must differ from goal");
  } else if (!(spec.goal_tolerance > 0)) {
    throw ConfigError("goal tolerance must be positive");
  }
}

State reset(const EnvSpec& spec, std::uint64_t seed) {
  State s(spec.state_dim);
  if (spec.kind == EnvKind::grid) {
    s << spec.start.x, spec.start.y;
    return s;
  }
  Rng rng = make_stream(seed, 0x5eed);
  const double px = uniform(rng, 0.0, spec.start_band);
  const double py = uniform(rng, spec.y_low, spec.y_high);
  if (spec.kind == EnvKind::reach) {
    const double gx = uniform(rng, spec.goal_band, 1.0);
    const double gy = clamp01(py + uniform(rng, -spec.start_dy, spec.start_dy));
    s << px, py, gx, gy;
    return s;
  }
  const double bx = uniform(rng, spec.box_low, spec.box_high);
  const double by = clamp01(py + uniform(rng, -spec.start_dy, spec.start_dy));
  const double gx = uniform(rng, spec.push_goal_low, spec.push_goal_high);
  const double gy = clamp01(by + uniform(rng, -spec.start_dy, spec.start_dy));
  s << px, py, bx, by, gx, gy;
  return s;
}

Action clamp_action(const EnvSpec& spec, const Action& action) {
  return action.cwiseMax(-spec.action_bound).cwiseMin(spec.action_bound);
}

Action nearest_move(const Action& action) {
  const auto& moves = grid_moves();
  std::size_t best = 0;
  double best_score = -2.0;
  const double norm = action.norm();
  for (std::size_t i = 0; i < moves.size(); ++i) {
    const double score = norm > 0 ? moves[i].dot(action) / norm : 0.0;
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return moves[best];
}

StepResult transition(const EnvSpec& spec, const State& state, const Action& action) {
  require_state(spec, state);
  if (action.size() != spec.action_dim) throw ShapeError("action has the wrong dimension for " + spec.name);
  if (!action.allFinite()) throw InvalidArgument("non-finite action");
  const Action a = clamp_action(spec, action);
  StepResult out;
  out.reward = -1.0;
  out.next_state = state;
  switch (spec.kind) {
    case EnvKind::grid: {
      if (a.isZero(0.0)) break;
      const Action move = nearest_move(a);
      out.next_state(0) = std::clamp(state(0) + move(0), 0.0, spec.grid_width - 1.0);
      out.next_state(1) = std::clamp(state(1) + move(1), 0.0, spec.grid_height - 1.0);
      break;
    }
    case EnvKind::reach:
      out.next_state(0) = clamp01(state(0) + a(0));
      out.next_state(1) = clamp01(state(1) + a(1));
      break;
    case EnvKind::push: {
      const Eigen::Vector2d p = xy(state, 0);
      const Eigen::Vector2d b = xy(state, 2);
      const Eigen::Vector2d p_next(clamp01(p(0) + a(0)), clamp01(p(1) + a(1)));
      out.next_state.segment<2>(0) = p_next;
      const double gap = (b - p).norm();
      if (gap > 0.0 && gap <= spec.contact_radius) {
        const Eigen::Vector2d dir = (b - p) / gap;
        const double along = std::max(0.0, (p_next - p).dot(dir));
        out.next_state(2) = clamp01(b(0) + along * dir(0));
        out.next_state(3) = clamp01(b(1) + along * dir(1));
      }
      break;
    }
  }
  out.reached_goal = is_goal(spec, out.next_state);
  return out;
}

StepResult step(const EnvSpec& spec, const State& state, const Action& action) {
  g_step_calls.fetch_add(1, std::memory_order_relaxed);
  return transition(spec, state, action);
}

std::uint64_t env_step_calls() { return g_step_calls.load(std::memory_order_relaxed); }

bool is_goal(const EnvSpec& spec, const State& state) {
  require_state(spec, state);
  switch (spec.kind) {
    case EnvKind::grid:
      return std::lround(state(0)) == spec.goal.x && std::lround(state(1)) == spec.goal.y;
    case EnvKind::reach:
      return (xy(state, 0) - xy(state, 2)).norm() <= spec.goal_tolerance;
    case EnvKind::push:
      return (xy(state, 2) - xy(state, 4)).norm() <= spec.goal_tolerance;
  }
  return false;
}

std::optional<std::vector<Action>> enumerate_actions(const EnvSpec& spec) {
  if (spec.kind == EnvKind::grid) return grid_moves();
  return std::nullopt;
}

int value_dim(const EnvSpec& spec) { return spec.state_dim; }

int model_dim(const EnvSpec& spec) {
  switch (spec.kind) {
    case EnvKind::grid: return 2;
    case EnvKind::reach: return 2;
    case EnvKind::push: return 4;
  }
  return spec.state_dim;
}

Eigen::VectorXd value_input(const EnvSpec& spec, const State& state) {
  require_state(spec, state);
  if (spec.kind == EnvKind::grid) {
    return Eigen::Vector2d(state(0) / spec.grid_width, state(1) / spec.grid_height);
  }
  return state;
}

Eigen::VectorXd model_input(const EnvSpec& spec, const State& state) {
  return value_input(spec, state).head(model_dim(spec));
}

ReducedState reduced_state(const EnvSpec& spec, const State& state) {
  ReducedState r;
  r.value_input = value_input(spec, state);
  r.model_input = r.value_input.head(model_dim(spec));
  return r;
}

Eigen::VectorXd complete_value_input(const EnvSpec& spec, const Eigen::VectorXd& model_state,
                                     const State& goal_source) {
  const int m = model_dim(spec);
  if (model_state.size() != m) throw ShapeError("model state has the wrong dimension");
  Eigen::VectorXd v = value_input(spec, goal_source);
  v.head(m) = model_state;
  return v;
}

Eigen::VectorXd value_lower(const EnvSpec& spec) { return Eigen::VectorXd::Zero(value_dim(spec)); }

Eigen::VectorXd value_upper(const EnvSpec& spec) {
  if (spec.kind == EnvKind::grid) {
    return Eigen::Vector2d((spec.grid_width - 1.0) / spec.grid_width, (spec.grid_height - 1.0) / spec.grid_height);
  }
  return Eigen::VectorXd::Ones(value_dim(spec));
}

std::vector<bool> perturb_mask(const EnvSpec& spec) {
  std::vector<bool> mask(value_dim(spec), false);
  // Only the agent is perturbed; box and goal coordinates stay put.
  mask[0] = mask[1] = true;
  return mask;
}

std::vector<bool> state_mask(const EnvSpec& spec) {
  std::vector<bool> mask(value_dim(spec), false);
  for (int i = 0; i < model_dim(spec); ++i) mask[i] = true;
  return mask;
}

}  // namespace vinslab
