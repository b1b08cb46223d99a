#include "vinslab/bc.hpp"

#include <cmath>
#include <string>

#include "vinslab/errors.hpp"
#include "vinslab/tensor_io.hpp"
#include "vinslab/text.hpp"
#include "vinslab/rng.hpp"

namespace vinslab {

BCPolicy init_bc(const EnvSpec& spec, const BCConfig& cfg, std::uint64_t seed) {
  std::vector<int> sizes{value_dim(spec)};
  for (int i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden_width);
  sizes.push_back(spec.action_dim);
  BCPolicy policy;
  policy.params = init_params(sizes, {}, seed);
  policy.action_scale = spec.action_bound;
  return policy;
}

Eigen::MatrixXd bc_outputs(const BCPolicy& policy, const Eigen::MatrixXd& value_s) {
  return policy.action_scale * forward(policy.params, value_s);
}

LossAndGradient bc_loss_and_gradient(const BCPolicy& policy, const Batch& batch) {
  const auto n = batch.size();
  if (n == 0) throw InvalidArgument("bc_loss: empty batch");
  ForwardTrace<double> trace;
  const Eigen::MatrixXd out = policy.action_scale * forward(policy.params, batch.value_s, &trace);
  const Eigen::MatrixXd err = out - batch.actions;
  LossAndGradient r;
  r.loss = err.squaredNorm() / static_cast<double>(n);
  r.grad = backward_from_trace(policy.params, trace, Eigen::MatrixXd((2.0 * policy.action_scale / n) * err));
  return r;
}

double bc_loss(const BCPolicy& policy, const Batch& batch) {
  if (batch.size() == 0) throw InvalidArgument("bc_loss: empty batch");
  return (bc_outputs(policy, batch.value_s) - batch.actions).squaredNorm() / static_cast<double>(batch.size());
}

BCPolicy train_bc(const EnvSpec& spec, const DemoDataset& ds, const BCConfig& cfg, std::uint64_t seed) {
  if (ds.transitions.empty()) throw InvalidArgument("train_bc: empty dataset");
  BCPolicy policy = init_bc(spec, cfg, seed);
  auto opt = make_adam(policy.params, cfg.learning_rate);
  policy.loss_curve.reserve(static_cast<std::size_t>(std::max(cfg.iterations, 0)));
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng = make_stream(seed, 0xbc000000ULL + static_cast<std::uint64_t>(it));
    const Batch batch = make_batch(spec, sample_transitions(ds.transitions, cfg.batch, rng, false));
    auto lg = bc_loss_and_gradient(policy, batch);
    if (!std::isfinite(lg.loss)) throw NumericError("train_bc: non-finite loss at iteration " + std::to_string(it));
    std::tie(policy.params, opt) = adam_step(policy.params, lg.grad, opt);
    policy.loss_curve.push_back(lg.loss);
  }
  return policy;
}

Action bc_act(const EnvSpec& spec, const BCPolicy& policy, const State& state) {
  const Eigen::MatrixXd out = bc_outputs(policy, Eigen::MatrixXd(value_input(spec, state)));
  Action a = clamp_action(spec, out.col(0));
  if (spec.kind == EnvKind::grid) a = nearest_move(a);
  return a;
}

void save_bc(const BCPolicy& policy, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_network(policy.params, dir / "policy.net");
  write_manifest("bc", {{"action_scale", text::format_real(policy.action_scale)}}, dir / "manifest.txt");
}

BCPolicy load_bc(const std::filesystem::path& dir) {
  const auto manifest = read_manifest("bc", dir / "manifest.txt");
  BCPolicy policy;
  policy.params = load_network(dir / "policy.net");
  policy.action_scale = manifest_real(manifest, "action_scale");
  return policy;
}

}  // namespace vinslab
