#include "vinslab/vins_rl.hpp"

#include <fstream>
#include <string>

#include "vinslab/errors.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

ReplayBuffer::ReplayBuffer(const std::vector<Transition>& demos, std::size_t capacity)
    : demos_(demos), capacity_(capacity) {
  if (capacity_ < demos_.size() + 1) throw InvalidArgument("replay capacity must exceed the demonstration count");
}

void ReplayBuffer::add(Transition tr) {
  if (size() == capacity_) collected_.pop_front();
  collected_.push_back(std::move(tr));
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i < demos_.size()) return demos_[i];
  return collected_.at(i - demos_.size());
}

std::vector<Transition> ReplayBuffer::sample(int count, Rng& rng) const {
  if (size() == 0) throw InvalidArgument("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size() - 1);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(at(pick(rng)));
  return out;
}

RlConfig default_rl_config(const EnvSpec& spec) {
  RlConfig rl;
  rl.search_radius = spec.action_bound;
  return rl;
}

namespace {

VinsConfig search_config(const VinsConfig& cfg, const RlConfig& rl) {
  VinsConfig c = cfg;
  c.shoot_radius = rl.search_radius;
  c.shoot_count = rl.shoot_count;
  return c;
}

CurvePoint evaluate(const EnvSpec& spec, const VinsState& st, const VinsConfig& search, const RlConfig& rl,
                    std::uint64_t seed, std::uint64_t steps) {
  const int groups = std::max(1, rl.eval_groups);
  const int per_group = std::max(1, rl.eval_trials / groups);
  const auto report = success_rate(spec, vins_policy(spec, st, search, nullptr), per_group, groups, seed, rl.jobs);
  return {steps, report.mean, report.stddev};
}

}  // namespace

void collect_rollouts(const EnvSpec& spec, const VinsState& vins, const VinsConfig& cfg, const RlConfig& rl,
                      ReplayBuffer& buffer, int n1, Rng& rng) {
  if (n1 < 1) throw InvalidArgument("collect_rollouts needs n1 >= 1");
  const VinsConfig search = search_config(cfg, rl);
  int stored = 0;
  int episode = 0;
  while (stored < n1) {
    State s = reset(spec, rng());
    for (int t = 0; t < spec.horizon && !is_goal(spec, s); ++t) {
      const Action a = induced_action(spec, s, vins, search, nullptr, rng);
      const StepResult r = step(spec, s, a);
      buffer.count_step();
      Transition tr;
      tr.s = s;
      tr.a = clamp_action(spec, a);
      tr.r = r.reward;
      tr.next = r.next_state;
      tr.reached_goal = r.reached_goal;
      tr.episode = -1 - episode;
      tr.t = t;
      buffer.add(std::move(tr));
      ++stored;
      s = r.next_state;
      if (r.reached_goal) break;
    }
    ++episode;
  }
}

RlResult train_vins_rl(const EnvSpec& spec, const VinsState& init, const DemoDataset& ds, const VinsConfig& cfg,
                       const RlConfig& rl, std::uint64_t seed) {
  RlResult out;
  out.state = init;
  ReplayBuffer buffer(ds.transitions, rl.capacity);
  const VinsConfig search = search_config(cfg, rl);
  const Perturbation unused;
  auto eval_seed = [&](int stage) { return splitmix64(seed ^ 0xe7a1) + static_cast<std::uint64_t>(stage); };

  if (rl.eval_trials > 0) out.curve.push_back(evaluate(spec, out.state, search, rl, eval_seed(0), 0));
  auto done = [&] {
    if (rl.step_budget > 0 && buffer.env_steps() >= rl.step_budget) return true;
    return !out.curve.empty() && out.curve.back().success_rate >= rl.stop_at;
  };
  for (int stage = 0; stage < rl.stages && !done(); ++stage) {
    Rng collect_rng = make_stream(seed, 0xc011ULL << 32 | static_cast<std::uint64_t>(stage));
    int n1 = rl.samples_per_stage;
    if (rl.step_budget > 0) {
      n1 = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(n1), rl.step_budget - buffer.env_steps()));
    }
    collect_rollouts(spec, out.state, cfg, rl, buffer, n1, collect_rng);
    for (int it = 0; it < rl.inner_iterations; ++it) {
      Rng rng = make_stream(seed, (static_cast<std::uint64_t>(stage) << 32) | static_cast<std::uint64_t>(it));
      const auto raw = buffer.sample(cfg.batch, rng);
      const Batch model_batch = make_batch(spec, raw);
      try {
        vins_update(out.state, cfg.augment ? make_batch(spec, augment_all(raw, rng)) : model_batch, model_batch, cfg,
                    unused, false, rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (stage " + std::to_string(stage) + ", inner iteration " +
                           std::to_string(it) + ")");
      }
    }
    const bool last = stage + 1 == rl.stages || (rl.step_budget > 0 && buffer.env_steps() >= rl.step_budget);
    if (rl.eval_trials > 0 && ((stage + 1) % std::max(1, rl.eval_every) == 0 || last)) {
      out.curve.push_back(evaluate(spec, out.state, search, rl, eval_seed(stage + 1), buffer.env_steps()));
    }
  }
  out.env_steps = buffer.env_steps();
  return out;
}

double steps_to_threshold(const std::vector<CurvePoint>& curve, double threshold) {
  for (const auto& p : curve) {
    if (p.success_rate >= threshold) return static_cast<double>(p.env_steps);
  }
  return std::numeric_limits<double>::infinity();
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "env_steps,success_rate,stddev\n";
  for (const auto& p : curve) {
    out << p.env_steps << ',' << text::format_real(p.success_rate) << ',' << text::format_real(p.stddev) << '\n';
  }
}

}  // namespace vinslab
