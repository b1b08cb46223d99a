#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vinslab/envs.hpp"
#include "vinslab/rng.hpp"

namespace vinslab {

struct Transition {
  State s;
  Action a;
  double r = -1.0;
  State next;
  bool reached_goal = false;
  int episode = 0;
  int t = 0;

  friend bool operator==(const Transition& a, const Transition& b);
};

struct Trajectory {
  std::vector<Transition> steps;
  bool success = false;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Successful expert trajectories plus the per-coordinate standard deviation
/// (sigma) of their value-input states.
struct DemoDataset {
  std::string env_name;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Trajectory> trajectories;
  std::vector<Transition> transitions;  // flattened, trajectory order
  Eigen::VectorXd sigma;

  std::size_t size() const { return trajectories.size(); }
  /// Every visited state: each transition's s, plus each trajectory's final s'.
  std::vector<State> states() const;
};

/// Flattens, checks that every trajectory is non-empty, chained and
/// successful, and computes sigma. Throws SchemaError otherwise.
DemoDataset make_dataset(const EnvSpec& spec, std::vector<Trajectory> trajectories);

Eigen::VectorXd state_sigma(const EnvSpec& spec, const std::vector<State>& states);

/// Scripted expert. Grid: a breadth-first shortest-path move, ties broken
/// uniformly at random. Reach: the clamped straight line to the goal. Push:
/// walk behind the box, then push it along the box-to-goal direction.
/// Throws InvalidArgument at terminal states.
Action expert_action(const EnvSpec& spec, const State& state, Rng& rng);

/// Breadth-first distance (in moves) from a cell to the grid goal.
int grid_distance_to_goal(const EnvSpec& spec, Cell cell);

/// Rolls the expert until n successful trajectories are stored; failures are
/// discarded. Throws CollectionError after 100 * n attempts.
DemoDataset collect_demos(const EnvSpec& spec, int n, std::uint64_t seed);

/// (s + l (s' - s), a, l r, s') for l ~ Uniform[0, 1].
Transition augment_interpolate(const Transition& tr, Rng& rng);
Transition augment_interpolate(const Transition& tr, double fraction);

std::vector<Transition> augment_all(const std::vector<Transition>& transitions, Rng& rng);

/// Uniform draws with replacement, optionally interpolation-augmented.
std::vector<Transition> sample_transitions(const std::vector<Transition>& pool, int count, Rng& rng,
                                           bool augment);

// Text format: a header "# vinslab-demos env=<name> d=<d> k=<k>", then one
// record per transition: episode,t,s...,a...,r,s'...,done
void save_dataset(const DemoDataset& ds, const std::filesystem::path& path);
/// Parse errors carry the line number; a header that disagrees with `spec`,
/// an empty file, or broken trajectories raise SchemaError.
DemoDataset load_dataset(const std::filesystem::path& path, const EnvSpec& spec);

/// Column-per-sample view of transitions in the reduced representations.
struct Batch {
  Eigen::MatrixXd value_s;     // value_dim x N
  Eigen::MatrixXd value_next;  // value_dim x N
  Eigen::MatrixXd model_s;     // model_dim x N
  Eigen::MatrixXd model_next;  // model_dim x N
  Eigen::MatrixXd actions;     // k x N
  Eigen::VectorXd rewards;
  Eigen::VectorXd continuation;  // 0 where the transition reached the goal, else 1

  Eigen::Index size() const { return rewards.size(); }
};

Batch make_batch(const EnvSpec& spec, const std::vector<Transition>& transitions);

}  // namespace vinslab
