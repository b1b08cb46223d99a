#include "vinslab/vins.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "vinslab/errors.hpp"
#include "vinslab/tensor_io.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

namespace {

std::atomic<std::uint64_t> g_ns_calls{0};

Eigen::MatrixXd model_features(const Eigen::MatrixXd& model_s, const Eigen::MatrixXd& actions, double action_scale) {
  Eigen::MatrixXd x(model_s.rows() + actions.rows(), model_s.cols());
  x.topRows(model_s.rows()) = model_s;
  x.bottomRows(actions.rows()) = actions / action_scale;
  return x;
}

Eigen::RowVectorXd row(const Eigen::MatrixXd& m) { return m.row(0); }

}  // namespace

VinsConfig default_vins_config(const EnvSpec& spec) {
  VinsConfig cfg;
  // Step length in value-input units; one step costs one unit of value.
  const double step = spec.kind == EnvKind::grid ? spec.action_bound / spec.grid_width : spec.action_bound;
  cfg.lambda = 2.0 / step;
  cfg.shoot_radius = 0.5 * spec.action_bound;
  cfg.model = spec.kind == EnvKind::grid ? ModelKind::exact : ModelKind::learned;
  if (spec.kind == EnvKind::push) {
    cfg.lambda = 4.0 / step;
    cfg.model_lr = 1e-3;
    cfg.discount = 0.98;
  }
  return cfg;
}

VinsState init_vins(const EnvSpec& spec, const VinsConfig& cfg, std::uint64_t seed) {
  VinsState st;
  st.value = init_params({value_dim(spec), cfg.value_hidden, 1}, {true, false}, splitmix64(seed) ^ 0x7a1);
  st.target = st.value;
  std::vector<int> sizes{model_dim(spec) + spec.action_dim};
  for (int i = 0; i < cfg.model_layers; ++i) sizes.push_back(cfg.model_hidden);
  sizes.push_back(model_dim(spec));
  st.model = init_params(sizes, {}, splitmix64(seed) ^ 0x30d);
  st.value_opt = make_adam(st.value, cfg.value_lr);
  st.model_opt = make_adam(st.model, cfg.model_lr);
  st.action_scale = spec.action_bound;
  return st;
}

LossAndGradient td_loss(const Batch& batch, const NetworkParams& value, const NetworkParams& target,
                        double discount) {
  const auto n = batch.size();
  if (n == 0) throw InvalidArgument("td_loss: empty batch");
  const Eigen::RowVectorXd next_v = row(forward(target, batch.value_next));
  const Eigen::RowVectorXd targets =
      batch.rewards.transpose() + discount * batch.continuation.transpose().cwiseProduct(next_v);
  ForwardTrace<double> trace;
  const Eigen::RowVectorXd v = row(forward(value, batch.value_s, &trace));
  const Eigen::RowVectorXd err = v - targets;
  LossAndGradient r;
  r.loss = err.squaredNorm() / static_cast<double>(n);
  r.grad = backward_from_trace(value, trace, Eigen::MatrixXd((2.0 / n) * err));
  return r;
}

Eigen::VectorXd perturb_state(const Eigen::VectorXd& s, const Eigen::VectorXd& sigma, double scale, Rng& rng,
                              const std::vector<bool>& mask, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper) {
  if (sigma.size() != s.size() || static_cast<Eigen::Index>(mask.size()) != s.size()) {
    throw ShapeError("perturb_state: sigma and mask must match the state");
  }
  Eigen::VectorXd out = s;
  const double sd_scale = std::sqrt(scale);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    out(i) = std::clamp(s(i) + sd_scale * sigma(i) * normal(rng), lower(i), upper(i));
  }
  return out;
}

Eigen::MatrixXd Perturbation::apply_columns(const Eigen::MatrixXd& s, Rng& rng) const {
  Eigen::MatrixXd out(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) out.col(j) = apply(s.col(j), rng);
  return out;
}

Perturbation make_perturbation(const EnvSpec& spec, const Eigen::VectorXd& dataset_sigma, double scale) {
  Perturbation p;
  p.mask = perturb_mask(spec);
  p.scale = scale;
  p.lower = value_lower(spec);
  p.upper = value_upper(spec);
  p.sigma = dataset_sigma;
  double widest = 0.0;
  for (Eigen::Index i = 0; i < p.sigma.size(); ++i) {
    if (p.mask[static_cast<std::size_t>(i)]) widest = std::max(widest, p.sigma(i));
  }
  for (Eigen::Index i = 0; i < p.sigma.size(); ++i) {
    if (p.mask[static_cast<std::size_t>(i)] && p.sigma(i) <= 1e-9 * widest) p.sigma(i) = widest;
  }
  return p;
}

LossAndGradient ns_loss(const Eigen::MatrixXd& value_s, const Eigen::MatrixXd& perturbed,
                        const NetworkParams& value, const NetworkParams& target, double lambda) {
  g_ns_calls.fetch_add(1, std::memory_order_relaxed);
  const auto n = value_s.cols();
  if (n == 0) throw InvalidArgument("ns_loss: empty batch");
  if (perturbed.rows() != value_s.rows() || perturbed.cols() != n) {
    throw ShapeError("ns_loss: negatives must match the batch");
  }
  const Eigen::RowVectorXd anchor_v = row(forward(target, value_s));
  const Eigen::RowVectorXd dist = (value_s - perturbed).colwise().norm();
  const Eigen::RowVectorXd targets = anchor_v - lambda * dist;
  ForwardTrace<double> trace;
  const Eigen::RowVectorXd v = row(forward(value, perturbed, &trace));
  const Eigen::RowVectorXd err = v - targets;
  LossAndGradient r;
  r.loss = err.squaredNorm() / static_cast<double>(n);
  r.grad = backward_from_trace(value, trace, Eigen::MatrixXd((2.0 / n) * err));
  return r;
}

LossAndGradient ns_loss(const Batch& batch, const NetworkParams& value, const NetworkParams& target,
                        double lambda, const Perturbation& perturbation, Rng& rng) {
  if (batch.size() == 0) throw InvalidArgument("ns_loss: empty batch");
  return ns_loss(batch.value_s, perturbation.apply_columns(batch.value_s, rng), value, target, lambda);
}

std::uint64_t ns_loss_calls() { return g_ns_calls.load(std::memory_order_relaxed); }

Eigen::MatrixXd predict_next(const NetworkParams& model, const Eigen::MatrixXd& model_s,
                             const Eigen::MatrixXd& actions, double action_scale) {
  return model_s + forward(model, model_features(model_s, actions, action_scale));
}

LossAndGradient model_loss(const Batch& batch, const NetworkParams& model, double action_scale) {
  const auto n = batch.size();
  if (n == 0) throw InvalidArgument("model_loss: empty batch");
  ForwardTrace<double> trace;
  const Eigen::MatrixXd pred = batch.model_s + forward(model, model_features(batch.model_s, batch.actions, action_scale), &trace);
  const Eigen::MatrixXd err = pred - batch.model_next;
  const Eigen::RowVectorXd norms = err.colwise().norm();
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(err.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (norms(j) > 0.0) upstream.col(j) = err.col(j) / (norms(j) * static_cast<double>(n));
  }
  LossAndGradient r;
  r.loss = norms.sum() / static_cast<double>(n);
  r.grad = backward_from_trace(model, trace, upstream);
  return r;
}

NetworkParams polyak_update(const NetworkParams& target, const NetworkParams& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("polyak_update: tau must lie in (0, 1]");
  if (tau == 1.0) {
    require_same_shape(target, online, "polyak_update");
    return online;
  }
  return polyak_mix(target, online, tau);
}

void vins_update(VinsState& state, const Batch& batch, const Batch& model_batch, const VinsConfig& cfg,
                 const Perturbation& perturbation, bool use_negatives, Rng& rng) {
  const std::string where = " at iteration " + std::to_string(state.iteration);
  auto td = td_loss(batch, state.value, state.target, cfg.discount);
  double ns_value = 0.0;
  if (use_negatives && cfg.mu > 0.0) {
    auto ns = ns_loss(batch, state.value, state.target, cfg.lambda, perturbation, rng);
    add_scaled(td.grad, ns.grad, cfg.mu);
    ns_value = ns.loss;
  }
  if (!std::isfinite(td.loss) || !std::isfinite(ns_value)) throw NumericError("non-finite value loss" + where);
  try {
    std::tie(state.value, state.value_opt) = adam_step(state.value, td.grad, state.value_opt);
  } catch (const NumericError& e) {
    throw NumericError(e.what() + where);
  }
  state.td_curve.push_back(td.loss);
  if (use_negatives) state.ns_curve.push_back(ns_value);

  if (cfg.model == ModelKind::learned) {
    auto ml = model_loss(model_batch, state.model, state.action_scale);
    if (!std::isfinite(ml.loss)) throw NumericError("non-finite model loss" + where);
    std::tie(state.model, state.model_opt) = adam_step(state.model, ml.grad, state.model_opt);
    state.model_curve.push_back(ml.loss);
  }
  state.target = polyak_update(state.target, state.value, cfg.tau);
  ++state.iteration;
}

VinsState train_vins(const EnvSpec& spec, const DemoDataset& ds, const VinsConfig& cfg, std::uint64_t seed) {
  if (ds.transitions.empty()) throw InvalidArgument("train_vins: empty dataset");
  VinsState st = init_vins(spec, cfg, seed);
  const Perturbation perturbation = make_perturbation(spec, ds.sigma, cfg.perturb_scale);
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng = make_stream(seed, 0x5100000000ULL + static_cast<std::uint64_t>(it));
    const auto raw = sample_transitions(ds.transitions, cfg.batch, rng, false);
    vins_update(st, make_batch(spec, cfg.augment ? augment_all(raw, rng) : raw), make_batch(spec, raw), cfg,
                perturbation, true, rng);
  }
  return st;
}

std::vector<Action> candidate_actions(const EnvSpec& spec, const Action& base, double radius, int count, Rng& rng) {
  if (auto moves = enumerate_actions(spec)) return *moves;
  std::vector<Action> out;
  out.reserve(static_cast<std::size_t>(count));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < count; ++i) {
    Action xi(spec.action_dim);
    for (Eigen::Index c = 0; c < xi.size(); ++c) xi(c) = unit(rng);
    out.push_back(clamp_action(spec, base + radius * xi));
  }
  return out;
}

Eigen::MatrixXd successor_value_inputs(const EnvSpec& spec, const State& state, const std::vector<Action>& candidates,
                                       const NetworkParams* model, double action_scale) {
  const auto n = static_cast<Eigen::Index>(candidates.size());
  Eigen::MatrixXd out(value_dim(spec), n);
  if (model == nullptr) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.col(j) = value_input(spec, transition(spec, state, candidates[static_cast<std::size_t>(j)]).next_state);
    }
    return out;
  }
  const Eigen::VectorXd here = model_input(spec, state);
  Eigen::MatrixXd actions(spec.action_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) actions.col(j) = candidates[static_cast<std::size_t>(j)];
  const Eigen::MatrixXd next = predict_next(*model, here.replicate(1, n), actions, action_scale);
  const Eigen::VectorXd full = value_input(spec, state);
  const auto md = next.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    out.col(j) = full;
    out.col(j).head(md) = next.col(j);
  }
  return out;
}

Action induced_action(const EnvSpec& spec, const State& state, const BatchValueFn& value, const NetworkParams* model,
                      double action_scale, const Action& base, double radius, int count, Rng& rng) {
  const auto candidates = candidate_actions(spec, base, radius, count, rng);
  if (candidates.empty()) throw InvalidArgument("induced_action: no candidate actions");
  const Eigen::VectorXd values = value(successor_value_inputs(spec, state, candidates, model, action_scale));
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < values.size(); ++j) {
    if (values(j) > values(best)) best = j;
  }
  return candidates[static_cast<std::size_t>(best)];
}

Action induced_action(const EnvSpec& spec, const State& state, const VinsState& vins, const VinsConfig& cfg,
                      const BCPolicy* anchor, Rng& rng) {
  const Action base = anchor ? bc_act(spec, *anchor, state) : Action(Action::Zero(spec.action_dim));
  const BatchValueFn value = [&](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    return forward(vins.value, x).row(0).transpose();
  };
  const NetworkParams* model = cfg.model == ModelKind::learned ? &vins.model : nullptr;
  return induced_action(spec, state, value, model, vins.action_scale, base, cfg.shoot_radius, cfg.shoot_count, rng);
}

void save_vins(const VinsState& state, const VinsConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_network(state.value, dir / "value.net");
  save_network(state.target, dir / "target.net");
  save_network(state.model, dir / "model.net");
  const auto r = [](double x) { return text::format_real(x); };
  write_manifest("vins",
                 {{"action_scale", r(state.action_scale)},
                  {"iteration", std::to_string(state.iteration)},
                  {"lambda", r(cfg.lambda)},
                  {"mu", r(cfg.mu)},
                  {"tau", r(cfg.tau)},
                  {"perturb_scale", r(cfg.perturb_scale)},
                  {"alpha", r(cfg.shoot_radius)},
                  {"k", std::to_string(cfg.shoot_count)},
                  {"batch", std::to_string(cfg.batch)},
                  {"iterations", std::to_string(cfg.iterations)},
                  {"value_lr", r(cfg.value_lr)},
                  {"model_lr", r(cfg.model_lr)},
                  {"discount", r(cfg.discount)},
                  {"augment", cfg.augment ? "true" : "false"},
                  {"model", cfg.model == ModelKind::exact ? "exact" : "learned"}},
                 dir / "manifest.txt");
}

VinsState load_vins(const std::filesystem::path& dir, const VinsConfig& cfg) {
  const auto manifest = read_manifest("vins", dir / "manifest.txt");
  VinsState st;
  st.value = load_network(dir / "value.net");
  st.target = load_network(dir / "target.net");
  st.model = load_network(dir / "model.net");
  st.value_opt = make_adam(st.value, cfg.value_lr);
  st.model_opt = make_adam(st.model, cfg.model_lr);
  st.action_scale = manifest_real(manifest, "action_scale");
  st.iteration = static_cast<std::int64_t>(manifest_real(manifest, "iteration"));
  return st;
}

}  // namespace vinslab
