#pragma once

// Measurements: success rates, distance-to-demonstration rollout profiles,
// conservative-extrapolation audits and value heatmaps.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vinslab/demos.hpp"
#include "vinslab/envs.hpp"
#include "vinslab/rng.hpp"
#include "vinslab/vins.hpp"

namespace vinslab {

/// A policy must be safe to call from several threads at once; all of its
/// randomness comes from the caller's rng.
using Policy = std::function<Action(const State&, Rng&)>;

Policy expert_policy(const EnvSpec& spec);
Policy zero_policy(const EnvSpec& spec);
Policy bc_policy(const EnvSpec& spec, const BCPolicy& bc);
/// Induced policy; `anchor` null means the zero-action anchor.
Policy vins_policy(const EnvSpec& spec, const VinsState& vins, const VinsConfig& cfg, const BCPolicy* anchor);

struct Episode {
  std::vector<State> states;  // s_0 ... s_n
  bool success = false;
};

/// Rolls `policy` for at most the horizon using the pure transition function,
/// so evaluation never counts as interaction.
Episode run_episode(const EnvSpec& spec, const Policy& policy, State start, Rng& rng);

struct EvalReport {
  double mean = 0.0;
  double stddev = 0.0;  // across seed-level rates
  std::vector<double> seed_rates;
  int trials = 0;  // per seed
  int seeds = 0;
  std::uint64_t base_seed = 0;
};

/// Seed i runs `n_trials` episodes from reset states; `start_shift` (if set)
/// displaces each start before the rollout. Seeds run on up to `jobs` threads;
/// results do not depend on `jobs`.
EvalReport success_rate(const EnvSpec& spec, const Policy& policy, int n_trials, int n_seeds,
                        std::uint64_t base_seed, int jobs = 1,
                        const std::function<State(const State&, Rng&)>& start_shift = {});

/// Exact nearest-neighbour search over the non-goal value coordinates of all
/// demonstration states.
class DemoIndex {
 public:
  DemoIndex(const EnvSpec& spec, const DemoDataset& ds);
  /// Distance in value-input units from the state's non-goal coordinates to U.
  double distance(const State& state) const;
  double distance_value(const Eigen::VectorXd& value_in) const;
  /// Index of the nearest demonstration state (first on ties).
  Eigen::Index nearest_value(const Eigen::VectorXd& value_in) const;
  /// Value input of the nearest demonstration state, goal taken from `value_in`.
  Eigen::VectorXd project_value(const Eigen::VectorXd& value_in) const;
  Eigen::Index size() const { return points_.cols(); }

 private:
  EnvSpec spec_;
  std::vector<int> coords_;
  Eigen::MatrixXd points_;  // non-goal value coordinates, one column per state
};

double distance_to_demo(const EnvSpec& spec, const State& state, const DemoDataset& ds);

struct StepStats {
  int step = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

struct DistanceProfile {
  std::vector<StepStats> steps;              // index t = distance of s_t
  std::vector<std::vector<double>> distances;  // [rollout][t], padded with the final state
  std::vector<bool> success;
};

/// Nearest-rank quantile of a non-empty sample.
double quantile(std::vector<double> values, double q);

DistanceProfile distance_profile(const EnvSpec& spec, const std::vector<Episode>& episodes, const DemoIndex& index);

/// Demonstration start state displaced on the perturbed coordinates by
/// uniform noise of infinity-norm at most perturb0 (grid: whole cells),
/// clamped to the state bounds.
State displace_start(const EnvSpec& spec, const State& start, double perturb0, Rng& rng);

DistanceProfile rollout_distance_profile(const EnvSpec& spec, const Policy& policy, const DemoDataset& ds,
                                         int n_rollouts, double perturb0, std::uint64_t seed);

struct AuditResult {
  double fraction = 0.0;
  double mean_margin = 0.0;  // mean of (V(proj) - V(probe)) / ||probe - proj||
  int probes = 0;
};

/// Probes s~ = perturb(s) from random demonstration states; counts
/// V(s~) < V(nearest demonstration state). Grid probes are rounded to cells
/// and redrawn until they leave U.
AuditResult conservative_audit(const EnvSpec& spec, const BatchValueFn& value, const DemoDataset& ds,
                               const Perturbation& perturbation, int n_probes, std::uint64_t seed);

/// Two value-input axes swept over [lo, hi] with `nx` x `ny` points; the other
/// coordinates come from `base`.
struct Lattice {
  std::vector<int> axes;
  double x_lo = 0.0, x_hi = 1.0;
  double y_lo = 0.0, y_hi = 1.0;
  int nx = 2, ny = 2;
  Eigen::VectorXd base;

  double x_at(int i) const { return nx == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (nx - 1); }
  double y_at(int j) const { return ny == 1 ? y_lo : y_lo + (y_hi - y_lo) * j / (ny - 1); }
};

/// One lattice point per grid cell.
Lattice grid_lattice(const EnvSpec& spec);
/// Agent-position slice of a point environment at a fixed goal (and box).
Lattice point_slice(const EnvSpec& spec, const State& fixed, int resolution);

struct HeatmapGrid {
  Lattice lattice;
  Eigen::MatrixXd values;  // ny x nx, row j is y_at(j)
  std::vector<std::pair<int, int>> demo_cells;  // (i, j) lattice points nearest to demo states
};

HeatmapGrid value_heatmap(const EnvSpec& spec, const BatchValueFn& value, const Lattice& lattice,
                          const DemoDataset& ds);

void write_heatmap_csv(const HeatmapGrid& grid, const std::filesystem::path& path);
HeatmapGrid read_heatmap_csv(const std::filesystem::path& path);
/// Plain graymap; values mapped affinely to [0, 255], a constant grid to 0.
void write_heatmap_pgm(const HeatmapGrid& grid, const std::filesystem::path& path);
std::vector<int> graymap_levels(const Eigen::MatrixXd& values);
void write_demo_cells(const HeatmapGrid& grid, const std::filesystem::path& path);

void write_success_csv(const EvalReport& report, const std::filesystem::path& path);
void write_profile_csv(const DistanceProfile& profile, const std::filesystem::path& path);
void write_audit_csv(const AuditResult& audit, const std::filesystem::path& path);

}  // namespace vinslab
