#pragma once

// End-to-end studies shared by the `reproduce` command and the acceptance
// suite. Each takes a resolved configuration for its environment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vinslab/bc.hpp"
#include "vinslab/config.hpp"
#include "vinslab/demos.hpp"
#include "vinslab/eval.hpp"
#include "vinslab/vins.hpp"
#include "vinslab/vins_rl.hpp"

namespace vinslab {

BatchValueFn value_fn(const NetworkParams& value);

/// Mean |V(s) + remaining moves| over the demonstration states of a grid.
double grid_oracle_mae(const EnvSpec& spec, const NetworkParams& value, const DemoDataset& ds);

struct SelfCorrection {
  int rollouts = 0;
  int corrected = 0;  // back on a demonstration state within `within` steps, then reached the goal
  DistanceProfile profile;

  double fraction() const { return rollouts == 0 ? 0.0 : static_cast<double>(corrected) / rollouts; }
};

/// Rollouts from demonstration states displaced by up to `perturb0` (grid:
/// whole cells) and redrawn until they start off the demonstrations.
SelfCorrection self_correction(const EnvSpec& spec, const Policy& policy, const DemoDataset& ds, int n_rollouts,
                               double perturb0, int within, std::uint64_t seed);

/// True when the 95th-percentile distance never rises from step `from` on.
bool p95_nonincreasing_from(const DistanceProfile& profile, int from);

struct GridSeedResult {
  std::uint64_t seed = 0;
  double td_mae = 0.0;
  double full_mae = 0.0;
  AuditResult td_audit;
  AuditResult full_audit;
  SelfCorrection correction;
};

/// Demonstrations, then TD-only (mu = 0) and full training on the same data,
/// audits of both and a self-correction check of the full policy. Heatmaps
/// and CSVs go to `out` when it is non-empty.
GridSeedResult grid_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out = {});

struct ShiftSeedResult {
  std::uint64_t seed = 0;
  double bc_clean = 0.0;
  double vins_clean = 0.0;
  double bc_shifted = 0.0;
  double vins_shifted = 0.0;
};

/// BC against the BC-anchored induced policy on clean and displaced starts.
ShiftSeedResult shift_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out = {},
                                 int jobs = 1);

struct RlSeedResult {
  std::uint64_t seed = 0;
  double vins_steps = 0.0;    // infinity when the threshold was never reached
  double random_steps = 0.0;
  std::vector<CurvePoint> vins_curve;
  std::vector<CurvePoint> random_curve;
};

/// The same interaction loop started from a demonstration-trained state and
/// from a fresh initialisation.
RlSeedResult rl_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out = {},
                           int jobs = 1);

double mean_of(const std::vector<double>& xs);
/// Median; infinities sort last.
double median_of(std::vector<double> xs);

/// Runs every study with `reproduce.*` seed counts and writes summary.txt
/// plus per-study artifacts under `out`. Returns the summary text.
std::string reproduce_all(const RunConfig& cfg, const std::filesystem::path& out, int jobs);

/// `cfg` with `env` set to `name` and every auto key resolved for it.
RunConfig config_for(const RunConfig& cfg, const std::string& name);

}  // namespace vinslab
