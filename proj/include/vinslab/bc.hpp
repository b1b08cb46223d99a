#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vinslab/demos.hpp"
#include "vinslab/envs.hpp"
#include "vinslab/tensor.hpp"

namespace vinslab {

struct BCConfig {
  int hidden_width = 64;
  int hidden_layers = 3;
  int iterations = 5000;
  int batch = 128;
  double learning_rate = 3e-4;
};

/// Maps value-input states (goal included) to actions. The network output is
/// in units of the action bound: action = action_scale * net(s).
struct BCPolicy {
  NetworkParams params;
  double action_scale = 1.0;
  std::vector<double> loss_curve;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

BCPolicy init_bc(const EnvSpec& spec, const BCConfig& cfg, std::uint64_t seed);

/// Unclamped policy output for a batch of value inputs.
Eigen::MatrixXd bc_outputs(const BCPolicy& policy, const Eigen::MatrixXd& value_s);

/// mean_j ||pi(s_j) - a_j||^2. Throws InvalidArgument on an empty batch.
double bc_loss(const BCPolicy& policy, const Batch& batch);
LossAndGradient bc_loss_and_gradient(const BCPolicy& policy, const Batch& batch);

/// Minibatch Adam on bc_loss. Throws NumericError naming the iteration if the
/// loss stops being finite.
BCPolicy train_bc(const EnvSpec& spec, const DemoDataset& ds, const BCConfig& cfg, std::uint64_t seed);

/// Policy output clamped to the action bound; grid outputs snap to the
/// nearest move.
Action bc_act(const EnvSpec& spec, const BCPolicy& policy, const State& state);

/// policy.net and manifest.txt under `dir`; loading a missing file raises
/// DependencyError naming the path.
void save_bc(const BCPolicy& policy, const std::filesystem::path& dir);
BCPolicy load_bc(const std::filesystem::path& dir);

}  // namespace vinslab
