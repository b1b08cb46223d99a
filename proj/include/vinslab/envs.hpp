#pragma once

// Deterministic sparse-reward environments. Every step costs -1; reaching the
// goal ends the episode. Goal-conditioned tasks carry the goal in the trailing
// state coordinates.

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vinslab {

using State = Eigen::VectorXd;
using Action = Eigen::VectorXd;

enum class EnvKind { grid, reach, push };

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct EnvSpec {
  EnvKind kind = EnvKind::grid;
  std::string name = "grid";
  int state_dim = 2;
  int action_dim = 2;
  int horizon = 30;
  double action_bound = 1.0;    // per coordinate
  double goal_tolerance = 0.05;  // point envs

  // grid
  int grid_width = 9;
  int grid_height = 6;
  Cell start{0, 2};
  Cell goal{8, 2};

  // point envs: start bands. Agent (reach) or agent/box (push) start with
  // x <= start_band; reach goals have x >= goal_band. The y offsets between
  // start, box and goal are bounded by start_dy so demonstrations stay on a
  // thin set of the state space.
  double start_band = 0.1;
  double goal_band = 0.9;
  double y_low = 0.2;
  double y_high = 0.8;
  double start_dy = 0.04;

  // push
  double contact_radius = 0.06;
  double box_low = 0.25;
  double box_high = 0.35;
  double push_goal_low = 0.75;
  double push_goal_high = 0.85;
};

EnvSpec make_grid();
EnvSpec make_reach();
EnvSpec make_push();
/// "grid", "reach" or "push"; throws ConfigError otherwise.
EnvSpec make_env(std::string_view name);
/// Throws ConfigError when an EnvSpec breaks its invariants (T >= 1,
/// a_max > 0, grid start != goal and inside the grid).
void validate(const EnvSpec& spec);

struct StepResult {
  State next_state;
  double reward = -1.0;
  bool reached_goal = false;
};

State reset(const EnvSpec& spec, std::uint64_t seed);

/// Pure transition function. Actions are clamped to the action bound; grid
/// actions are snapped to the nearest unit move (a zero action stays put).
/// Throws InvalidArgument on non-finite actions.
StepResult transition(const EnvSpec& spec, const State& state, const Action& action);

/// transition() plus a process-wide interaction counter.
StepResult step(const EnvSpec& spec, const State& state, const Action& action);
std::uint64_t env_step_calls();

/// Environment handle that counts its own step calls.
class CountingEnv {
 public:
  explicit CountingEnv(EnvSpec spec) : spec_(std::move(spec)) {}
  StepResult step(const State& state, const Action& action) {
    ++count_;
    return vinslab::step(spec_, state, action);
  }
  State reset(std::uint64_t seed) const { return vinslab::reset(spec_, seed); }
  const EnvSpec& spec() const { return spec_; }
  std::uint64_t count() const { return count_; }

 private:
  EnvSpec spec_;
  std::uint64_t count_ = 0;
};

bool is_goal(const EnvSpec& spec, const State& state);

/// The four grid moves in fixed order right, left, up, down; absent for
/// continuous environments.
std::optional<std::vector<Action>> enumerate_actions(const EnvSpec& spec);

Action clamp_action(const EnvSpec& spec, const Action& action);
/// Nearest grid move by cosine similarity; ties resolve to the earlier move.
Action nearest_move(const Action& action);

struct ReducedState {
  Eigen::VectorXd model_input;  // goal excluded
  Eigen::VectorXd value_input;  // goal included
};

ReducedState reduced_state(const EnvSpec& spec, const State& state);
Eigen::VectorXd value_input(const EnvSpec& spec, const State& state);
Eigen::VectorXd model_input(const EnvSpec& spec, const State& state);
int value_dim(const EnvSpec& spec);
int model_dim(const EnvSpec& spec);

/// Value input for a (predicted) model-space state, taking the goal from
/// `goal_source`.
Eigen::VectorXd complete_value_input(const EnvSpec& spec, const Eigen::VectorXd& model_state,
                                     const State& goal_source);

/// Box bounds of the value-input coordinates.
Eigen::VectorXd value_lower(const EnvSpec& spec);
Eigen::VectorXd value_upper(const EnvSpec& spec);

/// Value-input coordinates that negative sampling perturbs.
std::vector<bool> perturb_mask(const EnvSpec& spec);
/// Value-input coordinates that are not goal coordinates.
std::vector<bool> state_mask(const EnvSpec& spec);

}  // namespace vinslab
