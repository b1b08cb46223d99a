#include "vinslab/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "vinslab/errors.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// Runs f(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  jobs = std::clamp(jobs, 1, std::max(n, 1));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

Policy expert_policy(const EnvSpec& spec) {
  return [spec](const State& s, Rng& rng) { return expert_action(spec, s, rng); };
}

Policy zero_policy(const EnvSpec& spec) {
  return [k = spec.action_dim](const State&, Rng&) { return Action(Action::Zero(k)); };
}

Policy bc_policy(const EnvSpec& spec, const BCPolicy& bc) {
  return [spec, bc](const State& s, Rng&) { return bc_act(spec, bc, s); };
}

Policy vins_policy(const EnvSpec& spec, const VinsState& vins, const VinsConfig& cfg, const BCPolicy* anchor) {
  auto held = std::make_shared<const VinsState>(vins);
  std::shared_ptr<const BCPolicy> bc = anchor ? std::make_shared<const BCPolicy>(*anchor) : nullptr;
  return [spec, held, cfg, bc](const State& s, Rng& rng) { return induced_action(spec, s, *held, cfg, bc.get(), rng); };
}

Episode run_episode(const EnvSpec& spec, const Policy& policy, State start, Rng& rng) {
  Episode ep;
  ep.states.push_back(std::move(start));
  if (is_goal(spec, ep.states.back())) {
    ep.success = true;
    return ep;
  }
  for (int t = 0; t < spec.horizon; ++t) {
    const auto r = transition(spec, ep.states.back(), policy(ep.states.back(), rng));
    ep.states.push_back(r.next_state);
    if (r.reached_goal) {
      ep.success = true;
      break;
    }
  }
  return ep;
}

EvalReport success_rate(const EnvSpec& spec, const Policy& policy, int n_trials, int n_seeds, std::uint64_t base_seed,
                        int jobs, const std::function<State(const State&, Rng&)>& start_shift) {
  if (n_trials < 1 || n_seeds < 1) throw InvalidArgument("success_rate needs at least one trial and one seed");
  EvalReport report;
  report.trials = n_trials;
  report.seeds = n_seeds;
  report.base_seed = base_seed;
  report.seed_rates.assign(static_cast<std::size_t>(n_seeds), 0.0);
  parallel_for(n_seeds, jobs, [&](int seed) {
    int wins = 0;
    for (int trial = 0; trial < n_trials; ++trial) {
      Rng rng = make_stream(base_seed, (static_cast<std::uint64_t>(seed) << 32) + static_cast<std::uint64_t>(trial));
      State start = reset(spec, rng());
      if (start_shift) start = start_shift(start, rng);
      wins += run_episode(spec, policy, std::move(start), rng).success ? 1 : 0;
    }
    report.seed_rates[static_cast<std::size_t>(seed)] = static_cast<double>(wins) / n_trials;
  });
  double sum = 0.0;
  for (double r : report.seed_rates) sum += r;
  report.mean = sum / n_seeds;
  double sq = 0.0;
  for (double r : report.seed_rates) sq += (r - report.mean) * (r - report.mean);
  report.stddev = std::sqrt(sq / n_seeds);
  return report;
}

DemoIndex::DemoIndex(const EnvSpec& spec, const DemoDataset& ds) : spec_(spec) {
  const auto states = ds.states();
  if (states.empty()) throw InvalidArgument("empty demonstration set");
  const auto mask = state_mask(spec);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) coords_.push_back(static_cast<int>(i));
  }
  points_.resize(static_cast<Eigen::Index>(coords_.size()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto v = value_input(spec, states[j]);
    for (std::size_t c = 0; c < coords_.size(); ++c) points_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = v(coords_[c]);
  }
}

Eigen::Index DemoIndex::nearest_value(const Eigen::VectorXd& value_in) const {
  Eigen::VectorXd q(static_cast<Eigen::Index>(coords_.size()));
  for (std::size_t c = 0; c < coords_.size(); ++c) q(static_cast<Eigen::Index>(c)) = value_in(coords_[c]);
  Eigen::Index best = 0;
  (points_.colwise() - q).colwise().squaredNorm().minCoeff(&best);
  return best;
}

double DemoIndex::distance_value(const Eigen::VectorXd& value_in) const {
  Eigen::VectorXd q(static_cast<Eigen::Index>(coords_.size()));
  for (std::size_t c = 0; c < coords_.size(); ++c) q(static_cast<Eigen::Index>(c)) = value_in(coords_[c]);
  return std::sqrt((points_.colwise() - q).colwise().squaredNorm().minCoeff());
}

double DemoIndex::distance(const State& state) const { return distance_value(value_input(spec_, state)); }

Eigen::VectorXd DemoIndex::project_value(const Eigen::VectorXd& value_in) const {
  const Eigen::Index j = nearest_value(value_in);
  Eigen::VectorXd out = value_in;
  for (std::size_t c = 0; c < coords_.size(); ++c) out(coords_[c]) = points_(static_cast<Eigen::Index>(c), j);
  return out;
}

double distance_to_demo(const EnvSpec& spec, const State& state, const DemoDataset& ds) {
  return DemoIndex(spec, ds).distance(state);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::clamp(std::ceil(q * n), 1.0, n));
  return values[rank - 1];
}

DistanceProfile distance_profile(const EnvSpec& spec, const std::vector<Episode>& episodes, const DemoIndex& index) {
  DistanceProfile out;
  const auto steps = static_cast<std::size_t>(spec.horizon) + 1;
  for (const auto& ep : episodes) {
    std::vector<double> d;
    d.reserve(steps);
    for (const auto& s : ep.states) d.push_back(index.distance(s));
    while (d.size() < steps) d.push_back(d.back());
    out.distances.push_back(std::move(d));
    out.success.push_back(ep.success);
  }
  if (episodes.empty()) return out;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> col;
    col.reserve(episodes.size());
    for (const auto& d : out.distances) col.push_back(d[t]);
    StepStats st;
    st.step = static_cast<int>(t);
    double sum = 0.0;
    for (double v : col) sum += v;
    st.mean = sum / static_cast<double>(col.size());
    st.p50 = quantile(col, 0.5);
    st.p95 = quantile(col, 0.95);
    st.max = *std::max_element(col.begin(), col.end());
    out.steps.push_back(st);
  }
  return out;
}

State displace_start(const EnvSpec& spec, const State& start, double perturb0, Rng& rng) {
  if (perturb0 < 0) throw InvalidArgument("perturb0 must be non-negative");
  State s = start;
  const auto mask = perturb_mask(spec);
  if (spec.kind == EnvKind::grid) {
    const int reach = static_cast<int>(std::floor(perturb0));
    std::uniform_int_distribution<int> offset(-reach, reach);
    s(0) = std::clamp(s(0) + offset(rng), 0.0, spec.grid_width - 1.0);
    s(1) = std::clamp(s(1) + offset(rng), 0.0, spec.grid_height - 1.0);
    return s;
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    s(k) = std::clamp(s(k) + uniform(rng, -perturb0, perturb0), 0.0, 1.0);
  }
  return s;
}

DistanceProfile rollout_distance_profile(const EnvSpec& spec, const Policy& policy, const DemoDataset& ds,
                                         int n_rollouts, double perturb0, std::uint64_t seed) {
  if (ds.trajectories.empty()) throw InvalidArgument("empty demonstration set");
  const DemoIndex index(spec, ds);
  std::vector<Episode> episodes;
  std::uniform_int_distribution<std::size_t> pick(0, ds.trajectories.size() - 1);
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng = make_stream(seed, 0xd15700000ULL + static_cast<std::uint64_t>(i));
    const State& start = ds.trajectories[pick(rng)].steps.front().s;
    episodes.push_back(run_episode(spec, policy, displace_start(spec, start, perturb0, rng), rng));
  }
  return distance_profile(spec, episodes, index);
}

AuditResult conservative_audit(const EnvSpec& spec, const BatchValueFn& value, const DemoDataset& ds,
                               const Perturbation& perturbation, int n_probes, std::uint64_t seed) {
  if (n_probes < 1) throw InvalidArgument("audit needs at least one probe");
  const DemoIndex index(spec, ds);
  const auto states = ds.states();
  Rng rng = make_stream(seed, 0xa0d17);
  std::uniform_int_distribution<std::size_t> pick(0, states.size() - 1);
  const int dim = value_dim(spec);
  Eigen::MatrixXd probes(dim, n_probes);
  Eigen::MatrixXd projections(dim, n_probes);
  Eigen::VectorXd gaps(n_probes);
  const long max_draws = 1000L * n_probes;
  long draws = 0;
  for (int j = 0; j < n_probes; ++j) {
    while (true) {
      if (++draws > max_draws) throw InvalidArgument("perturbation never leaves the demonstration set");
      Eigen::VectorXd probe = perturbation.apply(value_input(spec, states[pick(rng)]), rng);
      if (spec.kind == EnvKind::grid) {
        probe(0) = std::round(probe(0) * spec.grid_width) / spec.grid_width;
        probe(1) = std::round(probe(1) * spec.grid_height) / spec.grid_height;
      }
      const double gap = index.distance_value(probe);
      if (gap <= 0.0) continue;
      probes.col(j) = probe;
      projections.col(j) = index.project_value(probe);
      gaps(j) = gap;
      break;
    }
  }
  const Eigen::VectorXd v_probe = value(probes);
  const Eigen::VectorXd v_proj = value(projections);
  AuditResult out;
  out.probes = n_probes;
  int below = 0;
  double margin = 0.0;
  for (int j = 0; j < n_probes; ++j) {
    if (v_probe(j) < v_proj(j)) ++below;
    margin += (v_proj(j) - v_probe(j)) / gaps(j);
  }
  out.fraction = static_cast<double>(below) / n_probes;
  out.mean_margin = margin / n_probes;
  return out;
}

Lattice grid_lattice(const EnvSpec& spec) {
  Lattice l;
  l.axes = {0, 1};
  l.x_hi = (spec.grid_width - 1.0) / spec.grid_width;
  l.y_hi = (spec.grid_height - 1.0) / spec.grid_height;
  l.nx = spec.grid_width;
  l.ny = spec.grid_height;
  l.base = Eigen::VectorXd::Zero(value_dim(spec));
  return l;
}

Lattice point_slice(const EnvSpec& spec, const State& fixed, int resolution) {
  if (resolution < 2) throw InvalidArgument("slice resolution must be at least 2");
  Lattice l;
  l.axes = {0, 1};
  l.nx = l.ny = resolution;
  l.base = value_input(spec, fixed);
  return l;
}

HeatmapGrid value_heatmap(const EnvSpec& spec, const BatchValueFn& value, const Lattice& lattice,
                          const DemoDataset& ds) {
  if (lattice.axes.size() != 2) throw InvalidArgument("heatmap lattice must have exactly two axes");
  if (lattice.nx < 1 || lattice.ny < 1) throw InvalidArgument("heatmap lattice must be non-empty");
  if (lattice.base.size() != value_dim(spec)) throw ShapeError("lattice base has the wrong dimension");
  for (int a : lattice.axes) {
    if (a < 0 || a >= value_dim(spec)) throw InvalidArgument("lattice axis out of range");
  }
  Eigen::MatrixXd points(value_dim(spec), lattice.nx * lattice.ny);
  for (int j = 0; j < lattice.ny; ++j) {
    for (int i = 0; i < lattice.nx; ++i) {
      auto col = points.col(j * lattice.nx + i);
      col = lattice.base;
      col(lattice.axes[0]) = lattice.x_at(i);
      col(lattice.axes[1]) = lattice.y_at(j);
    }
  }
  const Eigen::VectorXd v = value(points);
  HeatmapGrid grid;
  grid.lattice = lattice;
  grid.values.resize(lattice.ny, lattice.nx);
  for (int j = 0; j < lattice.ny; ++j) {
    for (int i = 0; i < lattice.nx; ++i) grid.values(j, i) = v(j * lattice.nx + i);
  }
  auto index_of = [](double v, double lo, double hi, int n) {
    if (n == 1 || hi == lo) return 0;
    return static_cast<int>(std::clamp<long>(std::lround((v - lo) / (hi - lo) * (n - 1)), 0, n - 1));
  };
  std::set<std::pair<int, int>> cells;
  for (const auto& s : ds.states()) {
    const auto vi = value_input(spec, s);
    cells.insert({index_of(vi(lattice.axes[0]), lattice.x_lo, lattice.x_hi, lattice.nx),
                  index_of(vi(lattice.axes[1]), lattice.y_lo, lattice.y_hi, lattice.ny)});
  }
  grid.demo_cells.assign(cells.begin(), cells.end());
  return grid;
}

void write_heatmap_csv(const HeatmapGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  const auto& l = grid.lattice;
  out << "# lattice axes=" << l.axes[0] << ',' << l.axes[1] << " x=" << text::format_real(l.x_lo) << ','
      << text::format_real(l.x_hi) << ',' << l.nx << " y=" << text::format_real(l.y_lo) << ','
      << text::format_real(l.y_hi) << ',' << l.ny << " base=" << text::join_reals(l.base) << '\n';
  for (Eigen::Index j = 0; j < grid.values.rows(); ++j) out << text::join_reals(grid.values.row(j).transpose()) << '\n';
}

HeatmapGrid read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing heatmap: " + path.string());
  std::string header;
  std::getline(in, header);
  HeatmapGrid grid;
  auto& l = grid.lattice;
  std::istringstream fields(header);
  std::string word;
  fields >> word >> word;
  if (header.rfind("# lattice", 0) != 0) throw ParseError("expected a lattice header", 1);
  while (fields >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ParseError("malformed lattice field '" + word + "'", 1);
    const std::string key = word.substr(0, eq);
    const auto parts = text::split(std::string_view(word).substr(eq + 1), ',');
    if (key == "axes" && parts.size() == 2) {
      l.axes = {static_cast<int>(text::parse_integer(parts[0], 1)), static_cast<int>(text::parse_integer(parts[1], 1))};
    } else if ((key == "x" || key == "y") && parts.size() == 3) {
      const double lo = text::parse_real(parts[0], 1);
      const double hi = text::parse_real(parts[1], 1);
      const int n = static_cast<int>(text::parse_integer(parts[2], 1));
      if (key == "x") {
        l.x_lo = lo, l.x_hi = hi, l.nx = n;
      } else {
        l.y_lo = lo, l.y_hi = hi, l.ny = n;
      }
    } else if (key == "base") {
      l.base.resize(static_cast<Eigen::Index>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i) l.base(static_cast<Eigen::Index>(i)) = text::parse_real(parts[i], 1);
    } else {
      throw ParseError("malformed lattice field '" + word + "'", 1);
    }
  }
  if (l.nx < 1 || l.ny < 1) throw ParseError("lattice must be non-empty", 1);
  grid.values.resize(l.ny, l.nx);
  std::string line;
  long line_no = 1;
  for (int j = 0; j < l.ny; ++j) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("missing heatmap row", line_no);
    const auto parts = text::split(line, ',');
    if (static_cast<int>(parts.size()) != l.nx) throw ParseError("heatmap row has the wrong width", line_no);
    for (int i = 0; i < l.nx; ++i) grid.values(j, i) = text::parse_real(parts[static_cast<std::size_t>(i)], line_no);
  }
  return grid;
}

std::vector<int> graymap_levels(const Eigen::MatrixXd& values) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(values.size()));
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    for (Eigen::Index i = 0; i < values.cols(); ++i) {
      out.push_back(hi > lo ? static_cast<int>(std::lround(255.0 * (values(j, i) - lo) / (hi - lo))) : 0);
    }
  }
  return out;
}

void write_heatmap_pgm(const HeatmapGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  const auto levels = graymap_levels(grid.values);
  out << "P2\n" << grid.values.cols() << ' ' << grid.values.rows() << "\n255\n";
  for (Eigen::Index j = 0; j < grid.values.rows(); ++j) {
    for (Eigen::Index i = 0; i < grid.values.cols(); ++i) {
      out << (i ? " " : "") << levels[static_cast<std::size_t>(j * grid.values.cols() + i)];
    }
    out << '\n';
  }
}

void write_demo_cells(const HeatmapGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "i,j\n";
  for (const auto& [i, j] : grid.demo_cells) out << i << ',' << j << '\n';
}

void write_success_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "seed,rate\n";
  for (std::size_t i = 0; i < report.seed_rates.size(); ++i) {
    out << i << ',' << text::format_real(report.seed_rates[i]) << '\n';
  }
}

void write_profile_csv(const DistanceProfile& profile, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "step,mean,p50,p95,max\n";
  for (const auto& s : profile.steps) {
    out << s.step << ',' << text::format_real(s.mean) << ',' << text::format_real(s.p50) << ','
        << text::format_real(s.p95) << ',' << text::format_real(s.max) << '\n';
  }
}

void write_audit_csv(const AuditResult& audit, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "probe_fraction,mean_margin\n"
      << text::format_real(audit.fraction) << ',' << text::format_real(audit.mean_margin) << '\n';
}

}  // namespace vinslab
