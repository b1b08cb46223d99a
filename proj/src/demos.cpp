#include "vinslab/demos.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "vinslab/errors.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

namespace {

bool same_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

std::vector<int> grid_distances(const EnvSpec& spec) {
  const int w = spec.grid_width;
  const int h = spec.grid_height;
  std::vector<int> dist(static_cast<std::size_t>(w * h), -1);
  std::deque<Cell> frontier{spec.goal};
  dist[spec.goal.y * w + spec.goal.x] = 0;
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.x + dx[k], c.y + dy[k]};
      if (n.x < 0 || n.x >= w || n.y < 0 || n.y >= h) continue;
      auto& d = dist[n.y * w + n.x];
      if (d < 0) {
        d = dist[c.y * w + c.x] + 1;
        frontier.push_back(n);
      }
    }
  }
  return dist;
}

Cell to_cell(const State& s) { return {static_cast<int>(std::lround(s(0))), static_cast<int>(std::lround(s(1)))}; }

Action push_expert(const EnvSpec& spec, const State& state) {
  const Eigen::Vector2d p = state.segment<2>(0);
  const Eigen::Vector2d b = state.segment<2>(2);
  const Eigen::Vector2d g = state.segment<2>(4);
  const Eigen::Vector2d to_goal = g - b;
  const double dist = to_goal.norm();
  const Eigen::Vector2d dir = to_goal / dist;
  const Eigen::Vector2d behind = b - 0.6 * spec.contact_radius * dir;
  Eigen::Vector2d a;
  if ((p - behind).norm() > 0.02) {
    a = behind - p;
  } else {
    a = dir * std::min(dist, spec.action_bound) + (behind - p);
  }
  return clamp_action(spec, a);
}

}  // namespace

bool operator==(const Transition& a, const Transition& b) {
  return same_vector(a.s, b.s) && same_vector(a.a, b.a) && a.r == b.r && same_vector(a.next, b.next) &&
         a.reached_goal == b.reached_goal && a.episode == b.episode && a.t == b.t;
}

int grid_distance_to_goal(const EnvSpec& spec, Cell cell) {
  const auto dist = grid_distances(spec);
  if (cell.x < 0 || cell.x >= spec.grid_width || cell.y < 0 || cell.y >= spec.grid_height) {
    throw InvalidArgument("cell outside the grid");
  }
  return dist[cell.y * spec.grid_width + cell.x];
}

Action expert_action(const EnvSpec& spec, const State& state, Rng& rng) {
  if (is_goal(spec, state)) throw InvalidArgument("no expert action at a terminal state");
  switch (spec.kind) {
    case EnvKind::grid: {
      const auto dist = grid_distances(spec);
      const Cell c = to_cell(state);
      const int here = dist[c.y * spec.grid_width + c.x];
      std::vector<Action> best;
      const auto moves = enumerate_actions(spec);
      for (const auto& move : *moves) {
        const Cell n = to_cell(transition(spec, state, move).next_state);
        if (dist[n.y * spec.grid_width + n.x] == here - 1) best.push_back(move);
      }
      if (best.empty()) throw InvalidArgument("goal unreachable from this cell");
      std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
      return best[pick(rng)];
    }
    case EnvKind::reach:
      return clamp_action(spec, state.segment(2, 2) - state.segment(0, 2));
    case EnvKind::push:
      return push_expert(spec, state);
  }
  return Action::Zero(spec.action_dim);
}

std::vector<State> DemoDataset::states() const {
  std::vector<State> out;
  out.reserve(transitions.size() + trajectories.size());
  for (const auto& traj : trajectories) {
    for (const auto& tr : traj.steps) out.push_back(tr.s);
    if (!traj.steps.empty()) out.push_back(traj.steps.back().next);
  }
  return out;
}

Eigen::VectorXd state_sigma(const EnvSpec& spec, const std::vector<State>& states) {
  const int d = value_dim(spec);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(d);
  if (states.empty()) return sum;
  for (const auto& s : states) sum += value_input(spec, s);
  const Eigen::VectorXd mean = sum / static_cast<double>(states.size());
  for (const auto& s : states) sq += (value_input(spec, s) - mean).cwiseAbs2();
  return (sq / static_cast<double>(states.size())).cwiseSqrt();
}

DemoDataset make_dataset(const EnvSpec& spec, std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw SchemaError("dataset has no trajectories");
  DemoDataset ds;
  ds.env_name = spec.name;
  ds.state_dim = spec.state_dim;
  ds.action_dim = spec.action_dim;
  for (const auto& traj : trajectories) {
    if (traj.steps.empty()) throw SchemaError("empty trajectory");
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& tr = traj.steps[t];
      if (tr.s.size() != spec.state_dim || tr.next.size() != spec.state_dim || tr.a.size() != spec.action_dim) {
        throw SchemaError("transition dimensions disagree with environment " + spec.name);
      }
      if (t + 1 < traj.steps.size() && !same_vector(tr.next, traj.steps[t + 1].s)) {
        throw SchemaError("trajectory " + std::to_string(tr.episode) + " is not chained at t=" + std::to_string(t));
      }
    }
    if (!traj.success || !traj.steps.back().reached_goal) {
      throw SchemaError("trajectory " + std::to_string(traj.steps.front().episode) + " is not successful");
    }
  }
  ds.trajectories = std::move(trajectories);
  for (const auto& traj : ds.trajectories) {
    ds.transitions.insert(ds.transitions.end(), traj.steps.begin(), traj.steps.end());
  }
  ds.sigma = state_sigma(spec, ds.states());
  return ds;
}

DemoDataset collect_demos(const EnvSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("need at least one demonstration");
  validate(spec);
  std::vector<Trajectory> stored;
  const long max_attempts = 100L * n;
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(stored.size()) < n; ++attempt) {
    const std::uint64_t episode_seed = splitmix64(seed * 1000003ULL + static_cast<std::uint64_t>(attempt));
    Rng rng = make_stream(episode_seed, 0xe4);
    State s = reset(spec, episode_seed);
    Trajectory traj;
    const int episode = static_cast<int>(stored.size());
    for (int t = 0; t < spec.horizon && !is_goal(spec, s); ++t) {
      const Action a = expert_action(spec, s, rng);
      const StepResult r = step(spec, s, a);
      traj.steps.push_back({s, clamp_action(spec, a), r.reward, r.next_state, r.reached_goal, episode, t});
      s = r.next_state;
      if (r.reached_goal) {
        traj.success = true;
        break;
      }
    }
    if (traj.success) stored.push_back(std::move(traj));
  }
  if (static_cast<int>(stored.size()) < n) {
    throw CollectionError("expert produced only " + std::to_string(stored.size()) + " successes in " +
                          std::to_string(max_attempts) + " attempts");
  }
  return make_dataset(spec, std::move(stored));
}

Transition augment_interpolate(const Transition& tr, double fraction) {
  Transition out = tr;
  out.s = tr.s + fraction * (tr.next - tr.s);
  out.r = fraction * tr.r;
  return out;
}

Transition augment_interpolate(const Transition& tr, Rng& rng) {
  return augment_interpolate(tr, uniform(rng, 0.0, 1.0));
}

std::vector<Transition> augment_all(const std::vector<Transition>& transitions, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(transitions.size());
  for (const auto& tr : transitions) out.push_back(augment_interpolate(tr, rng));
  return out;
}

std::vector<Transition> sample_transitions(const std::vector<Transition>& pool, int count, Rng& rng,
                                           bool augment) {
  if (pool.empty()) throw InvalidArgument("cannot sample from an empty transition pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& tr = pool[pick(rng)];
    out.push_back(augment ? augment_interpolate(tr, rng) : tr);
  }
  return out;
}

void save_dataset(const DemoDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# vinslab-demos env=" << ds.env_name << " d=" << ds.state_dim << " k=" << ds.action_dim << '\n';
  for (const auto& tr : ds.transitions) {
    out << tr.episode << ',' << tr.t << ',' << text::join_reals(tr.s) << ',' << text::join_reals(tr.a) << ','
        << text::format_real(tr.r) << ',' << text::join_reals(tr.next) << ',' << (tr.reached_goal ? 1 : 0)
        << '\n';
  }
}

DemoDataset load_dataset(const std::filesystem::path& path, const EnvSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("dataset file is empty: " + path.string());
  const auto tokens = text::split(line, ' ');
  if (tokens.size() != 5 || tokens[0] != "#" || tokens[1] != "vinslab-demos") {
    throw ParseError("missing dataset header", 1);
  }
  auto field = [&](std::size_t i, std::string_view key) {
    if (tokens[i].substr(0, key.size() + 1) != std::string(key) + "=") {
      throw ParseError("expected header field '" + std::string(key) + "'", 1);
    }
    return tokens[i].substr(key.size() + 1);
  };
  const std::string env(field(2, "env"));
  const long d = text::parse_integer(field(3, "d"), 1);
  const long k = text::parse_integer(field(4, "k"), 1);
  if (env != spec.name || d != spec.state_dim || k != spec.action_dim) {
    throw SchemaError("dataset header (env=" + env + " d=" + std::to_string(d) + " k=" + std::to_string(k) +
                      ") does not match environment " + spec.name);
  }

  const std::size_t width = static_cast<std::size_t>(2 * d + k + 4);
  std::vector<Trajectory> trajectories;
  std::map<int, std::size_t> index_of;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != width) {
      throw ParseError("row has " + std::to_string(f.size()) + " fields, expected " + std::to_string(width), lineno);
    }
    Transition tr;
    tr.episode = static_cast<int>(text::parse_integer(f[0], lineno));
    tr.t = static_cast<int>(text::parse_integer(f[1], lineno));
    std::size_t c = 2;
    auto read_vec = [&](long n) {
      Eigen::VectorXd v(n);
      for (long i = 0; i < n; ++i) v(i) = text::parse_real(f[c++], lineno);
      return v;
    };
    tr.s = read_vec(d);
    tr.a = read_vec(k);
    tr.r = text::parse_real(f[c++], lineno);
    tr.next = read_vec(d);
    const long done = text::parse_integer(f[c++], lineno);
    if (done != 0 && done != 1) throw ParseError("done flag must be 0 or 1", lineno);
    tr.reached_goal = done == 1;

    auto [it, inserted] = index_of.try_emplace(tr.episode, trajectories.size());
    if (inserted) trajectories.emplace_back();
    auto& traj = trajectories[it->second];
    if (tr.t != static_cast<int>(traj.steps.size())) {
      throw SchemaError("episode " + std::to_string(tr.episode) + " has a gap at line " + std::to_string(lineno));
    }
    traj.steps.push_back(std::move(tr));
  }
  if (trajectories.empty()) throw SchemaError("dataset has no transitions: " + path.string());
  for (auto& traj : trajectories) traj.success = traj.steps.back().reached_goal;
  return make_dataset(spec, std::move(trajectories));
}

Batch make_batch(const EnvSpec& spec, const std::vector<Transition>& transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const int vd = value_dim(spec);
  const int md = model_dim(spec);
  Batch b;
  b.value_s.resize(vd, n);
  b.value_next.resize(vd, n);
  b.actions.resize(spec.action_dim, n);
  b.rewards.resize(n);
  b.continuation.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& tr = transitions[static_cast<std::size_t>(j)];
    b.value_s.col(j) = value_input(spec, tr.s);
    b.value_next.col(j) = value_input(spec, tr.next);
    b.actions.col(j) = tr.a;
    b.rewards(j) = tr.r;
    b.continuation(j) = tr.reached_goal ? 0.0 : 1.0;
  }
  b.model_s = b.value_s.topRows(md);
  b.model_next = b.value_next.topRows(md);
  return b;
}

}  // namespace vinslab
