#pragma once

// Fitted value iteration with environment interaction, started from a value
// function and model trained on demonstrations. No negative sampling here.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <vector>

#include "vinslab/demos.hpp"
#include "vinslab/envs.hpp"
#include "vinslab/eval.hpp"
#include "vinslab/vins.hpp"

namespace vinslab {

/// Transition store seeded with demonstrations. When full, the oldest
/// collected transition is evicted; demonstrations stay.
class ReplayBuffer {
 public:
  ReplayBuffer(const std::vector<Transition>& demos, std::size_t capacity);

  void add(Transition tr);
  std::size_t size() const { return demos_.size() + collected_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t demo_count() const { return demos_.size(); }
  const Transition& at(std::size_t i) const;
  std::vector<Transition> sample(int count, Rng& rng) const;

  /// Environment step calls made on behalf of this buffer.
  std::uint64_t env_steps() const { return env_steps_; }
  void count_step() { ++env_steps_; }

 private:
  std::vector<Transition> demos_;
  std::deque<Transition> collected_;
  std::size_t capacity_;
  std::uint64_t env_steps_ = 0;
};

struct RlConfig {
  int stages = 100;
  int samples_per_stage = 500;  // n_1
  int inner_iterations = 500;   // n_inner
  std::size_t capacity = 100000;
  double search_radius = 0.08;  // around the zero action; the action bound covers the whole box
  int shoot_count = 100;
  int eval_trials = 100;
  int eval_groups = 10;  // the curve's stddev is taken across groups of trials
  int eval_every = 2;    // stages between curve points
  std::uint64_t step_budget = 20000;  // stop once reached; 0 means stages only
  double stop_at = 2.0;  // stop after the first evaluation at or above this rate
  int jobs = 1;
};

RlConfig default_rl_config(const EnvSpec& spec);

struct CurvePoint {
  std::uint64_t env_steps = 0;
  double success_rate = 0.0;
  double stddev = 0.0;
};

/// Rolls episodes from fresh resets with the zero-anchored induced policy
/// until at least n1 new transitions are stored. Failed episodes are kept.
void collect_rollouts(const EnvSpec& spec, const VinsState& vins, const VinsConfig& cfg, const RlConfig& rl,
                      ReplayBuffer& buffer, int n1, Rng& rng);

struct RlResult {
  VinsState state;
  std::vector<CurvePoint> curve;  // first point at zero interaction
  std::uint64_t env_steps = 0;
};

/// Per stage: collect, then `inner_iterations` TD-only value updates with the
/// target and model updates, then evaluate.
RlResult train_vins_rl(const EnvSpec& spec, const VinsState& init, const DemoDataset& ds, const VinsConfig& cfg,
                       const RlConfig& rl, std::uint64_t seed);

/// Interaction count at the first curve point with success >= threshold;
/// infinity when never reached.
double steps_to_threshold(const std::vector<CurvePoint>& curve, double threshold);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace vinslab
