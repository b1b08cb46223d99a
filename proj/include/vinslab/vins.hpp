#pragma once

// Value iteration on demonstrations with negative sampling: a value network
// fitted by TD on demonstration transitions plus a penalty that pushes the
// values of perturbed states below their source state's value, a learned
// dynamics model, and the greedy policy they induce.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "vinslab/bc.hpp"
#include "vinslab/demos.hpp"
#include "vinslab/envs.hpp"
#include "vinslab/rng.hpp"
#include "vinslab/tensor.hpp"

namespace vinslab {

enum class ModelKind {
  learned,  // M_theta
  exact,    // the environment's transition function
};

struct VinsConfig {
  double lambda = 25.0;        // value drop per unit distance off the demonstrations
  double mu = 1.0;             // weight of the negative-sampling loss
  double tau = 0.05;           // target network mixing rate
  double perturb_scale = 0.25;  // rho: perturbation variance is rho * sigma^2
  double shoot_radius = 0.04;   // alpha
  int shoot_count = 100;        // k
  int batch = 128;
  int iterations = 20000;
  double value_lr = 3e-4;
  double model_lr = 3e-4;
  double discount = 1.0;
  int value_hidden = 64;
  int model_hidden = 128;
  int model_layers = 2;
  bool augment = true;
  ModelKind model = ModelKind::learned;
};

/// Environment-calibrated defaults: lambda = 2 / (action bound in value
/// units), alpha = half the action bound; the grid plans with its exact
/// transition function. Push doubles lambda, discounts by 0.98 and fits its
/// model at a higher rate.
VinsConfig default_vins_config(const EnvSpec& spec);

struct VinsState {
  NetworkParams value;
  NetworkParams target;
  NetworkParams model;
  AdamState<double> value_opt;
  AdamState<double> model_opt;
  double action_scale = 1.0;
  std::int64_t iteration = 0;
  std::vector<double> td_curve;
  std::vector<double> ns_curve;
  std::vector<double> model_curve;
};

/// target starts equal to value.
VinsState init_vins(const EnvSpec& spec, const VinsConfig& cfg, std::uint64_t seed);

/// mean_j (r_j + discount * c_j * V_target(s'_j) - V(s_j))^2 with c_j = 0 at
/// goal-reaching transitions. The target is held constant.
LossAndGradient td_loss(const Batch& batch, const NetworkParams& value, const NetworkParams& target,
                        double discount = 1.0);

/// s + z, z_i ~ N(0, scale * sigma_i^2) on masked coordinates, clamped to
/// [lower, upper].
Eigen::VectorXd perturb_state(const Eigen::VectorXd& s, const Eigen::VectorXd& sigma, double scale, Rng& rng,
                              const std::vector<bool>& mask, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper);

/// Perturbation settings derived from a dataset. Masked coordinates on which
/// the demonstrations never vary (sigma_i ~ 0) borrow the largest masked
/// sigma, so a demonstration set lying on a line still yields off-line
/// negatives.
struct Perturbation {
  Eigen::VectorXd sigma;
  double scale = 0.25;
  std::vector<bool> mask;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd apply(const Eigen::VectorXd& s, Rng& rng) const {
    return perturb_state(s, sigma, scale, rng, mask, lower, upper);
  }
  Eigen::MatrixXd apply_columns(const Eigen::MatrixXd& s, Rng& rng) const;
};

Perturbation make_perturbation(const EnvSpec& spec, const Eigen::VectorXd& dataset_sigma, double scale);

/// mean_j (V_target(s_j) - lambda ||s_j - s~_j|| - V(s~_j))^2 for given
/// negatives s~ (columns of `perturbed`). Gradient flows through V(s~) only.
LossAndGradient ns_loss(const Eigen::MatrixXd& value_s, const Eigen::MatrixXd& perturbed,
                        const NetworkParams& value, const NetworkParams& target, double lambda);
/// Draws the negatives from `perturbation` first.
LossAndGradient ns_loss(const Batch& batch, const NetworkParams& value, const NetworkParams& target,
                        double lambda, const Perturbation& perturbation, Rng& rng);
/// Number of ns_loss evaluations in this process.
std::uint64_t ns_loss_calls();

/// M(s, a) = s + net(s, a / action_scale), over model-space columns.
Eigen::MatrixXd predict_next(const NetworkParams& model, const Eigen::MatrixXd& model_s,
                             const Eigen::MatrixXd& actions, double action_scale);

/// mean_j ||M(s_j, a_j) - s'_j||_2 (not squared); zero subgradient at exact fits.
LossAndGradient model_loss(const Batch& batch, const NetworkParams& model, double action_scale);

/// target + tau (online - target); tau must lie in (0, 1].
NetworkParams polyak_update(const NetworkParams& target, const NetworkParams& online, double tau);

/// One gradient step on the value (TD, plus mu * NS when use_negatives), one
/// on the model (when the config learns it), then the target update. The
/// model batch holds raw transitions: interpolated ones do not satisfy
/// s' = M(s, a).
void vins_update(VinsState& state, const Batch& batch, const Batch& model_batch, const VinsConfig& cfg,
                 const Perturbation& perturbation, bool use_negatives, Rng& rng);

/// Trains from demonstrations only; never calls the environment.
VinsState train_vins(const EnvSpec& spec, const DemoDataset& ds, const VinsConfig& cfg, std::uint64_t seed);

/// value.net, target.net, model.net and manifest.txt (action scale,
/// iteration count and the configuration) under `dir`.
void save_vins(const VinsState& state, const VinsConfig& cfg, const std::filesystem::path& dir);
/// Optimiser moments are not stored; they restart at zero with the learning
/// rates in `cfg`. Missing files raise DependencyError naming the path.
VinsState load_vins(const std::filesystem::path& dir, const VinsConfig& cfg);

/// Values for a batch of value-input columns.
using BatchValueFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Enumerated actions for discrete environments; otherwise `count` draws of
/// base + radius * xi, xi ~ Uniform[-1, 1]^k, clamped to the action bound.
std::vector<Action> candidate_actions(const EnvSpec& spec, const Action& base, double radius, int count, Rng& rng);

/// Value inputs of the predicted successors of `state` under each candidate.
/// A null model uses the exact transition function.
Eigen::MatrixXd successor_value_inputs(const EnvSpec& spec, const State& state, const std::vector<Action>& candidates,
                                       const NetworkParams* model, double action_scale);

/// argmax over candidates of value(successor); ties go to the lowest index.
Action induced_action(const EnvSpec& spec, const State& state, const BatchValueFn& value, const NetworkParams* model,
                      double action_scale, const Action& base, double radius, int count, Rng& rng);

/// The self-correcting policy. `anchor` selects the search centre: the BC
/// action when given, the zero action otherwise.
Action induced_action(const EnvSpec& spec, const State& state, const VinsState& vins, const VinsConfig& cfg,
                      const BCPolicy* anchor, Rng& rng);

}  // namespace vinslab
