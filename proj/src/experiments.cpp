#include "vinslab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vinslab/errors.hpp"
#include "vinslab/tensor_io.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

namespace {

std::string fixed(double x, int digits = 3) {
  if (std::isinf(x)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

void export_heatmap(const EnvSpec& spec, const NetworkParams& value, const DemoDataset& ds,
                    const std::filesystem::path& stem) {
  const auto grid = value_heatmap(spec, value_fn(value), grid_lattice(spec), ds);
  write_heatmap_csv(grid, stem.string() + ".csv");
  write_heatmap_pgm(grid, stem.string() + ".pgm");
  write_demo_cells(grid, stem.string() + "-demos.csv");
}

}  // namespace

BatchValueFn value_fn(const NetworkParams& value) {
  return [value](const Eigen::MatrixXd& x) -> Eigen::VectorXd { return forward(value, x).row(0).transpose(); };
}

double grid_oracle_mae(const EnvSpec& spec, const NetworkParams& value, const DemoDataset& ds) {
  if (spec.kind != EnvKind::grid) throw InvalidArgument("grid_oracle_mae needs the grid environment");
  if (ds.transitions.empty()) throw InvalidArgument("empty demonstration set");
  Eigen::MatrixXd inputs(value_dim(spec), static_cast<Eigen::Index>(ds.transitions.size()));
  Eigen::VectorXd oracle(inputs.cols());
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    const State& s = ds.transitions[static_cast<std::size_t>(j)].s;
    inputs.col(j) = value_input(spec, s);
    oracle(j) = -grid_distance_to_goal(spec, {static_cast<int>(std::lround(s(0))), static_cast<int>(std::lround(s(1)))});
  }
  return (value_fn(value)(inputs) - oracle).cwiseAbs().mean();
}

SelfCorrection self_correction(const EnvSpec& spec, const Policy& policy, const DemoDataset& ds, int n_rollouts,
                               double perturb0, int within, std::uint64_t seed) {
  if (ds.transitions.empty()) throw InvalidArgument("empty demonstration set");
  const DemoIndex index(spec, ds);
  std::uniform_int_distribution<std::size_t> pick(0, ds.transitions.size() - 1);
  SelfCorrection out;
  std::vector<Episode> episodes;
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng = make_stream(seed, 0x5c0000000ULL + static_cast<std::uint64_t>(i));
    State start;
    for (int tries = 0;; ++tries) {
      if (tries == 1000) throw InvalidArgument("displacement never leaves the demonstration set");
      start = displace_start(spec, ds.transitions[pick(rng)].s, perturb0, rng);
      if (index.distance(start) > 0.0) break;
    }
    episodes.push_back(run_episode(spec, policy, start, rng));
  }
  out.profile = distance_profile(spec, episodes, index);
  out.rollouts = n_rollouts;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& d = out.profile.distances[i];
    const auto last = std::min<std::size_t>(static_cast<std::size_t>(within), episodes[i].states.size() - 1);
    bool back = false;
    for (std::size_t t = 1; t <= last; ++t) back = back || d[t] == 0.0;
    if (back && episodes[i].success) ++out.corrected;
  }
  return out;
}

bool p95_nonincreasing_from(const DistanceProfile& profile, int from) {
  for (std::size_t t = static_cast<std::size_t>(std::max(from, 0)) + 1; t < profile.steps.size(); ++t) {
    if (profile.steps[t].p95 > profile.steps[t - 1].p95) return false;
  }
  return true;
}

GridSeedResult grid_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out) {
  const EnvSpec spec = env_spec(cfg);
  const auto ds = collect_demos(spec, static_cast<int>(cfg.get_int("demos.count")), seed);
  const VinsConfig full_cfg = vins_config(cfg);
  VinsConfig td_cfg = full_cfg;
  td_cfg.mu = 0.0;
  const VinsState td = train_vins(spec, ds, td_cfg, seed);
  const VinsState full = train_vins(spec, ds, full_cfg, seed);

  GridSeedResult r;
  r.seed = seed;
  r.td_mae = grid_oracle_mae(spec, td.value, ds);
  r.full_mae = grid_oracle_mae(spec, full.value, ds);
  const auto perturbation = make_perturbation(spec, ds.sigma, full_cfg.perturb_scale);
  const int probes = static_cast<int>(cfg.get_int("audit.probes"));
  r.td_audit = conservative_audit(spec, value_fn(td.value), ds, perturbation, probes, seed);
  r.full_audit = conservative_audit(spec, value_fn(full.value), ds, perturbation, probes, seed);
  r.correction = self_correction(spec, vins_policy(spec, full, full_cfg, nullptr), ds,
                                 static_cast<int>(cfg.get_int("eval.rollouts")), cfg.get_real("eval.perturb0"),
                                 static_cast<int>(cfg.get_int("correction.within")), seed);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    export_heatmap(spec, td.value, ds, out / "heatmap-td-only");
    export_heatmap(spec, full.value, ds, out / "heatmap-vins");
    write_audit_csv(r.td_audit, out / "audit-td-only.csv");
    write_audit_csv(r.full_audit, out / "audit-vins.csv");
    write_profile_csv(r.correction.profile, out / "profile-vins.csv");
  }
  return r;
}

ShiftSeedResult shift_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out,
                                 int jobs) {
  const EnvSpec spec = env_spec(cfg);
  const auto ds = collect_demos(spec, static_cast<int>(cfg.get_int("demos.count")), seed);
  const VinsConfig vcfg = vins_config(cfg);
  const BCPolicy bc = train_bc(spec, ds, bc_config(cfg), seed);
  const VinsState vins = train_vins(spec, ds, vcfg, seed);
  const Policy bc_pi = bc_policy(spec, bc);
  const Policy vins_pi = vins_policy(spec, vins, vcfg, &bc);
  const int trials = static_cast<int>(cfg.get_int("eval.trials"));
  const double p0 = cfg.get_real("eval.perturb0");
  const auto shift = [&spec, p0](const State& s, Rng& rng) { return displace_start(spec, s, p0, rng); };

  ShiftSeedResult r;
  r.seed = seed;
  const auto bc_clean = success_rate(spec, bc_pi, trials, 1, seed, jobs);
  const auto vins_clean = success_rate(spec, vins_pi, trials, 1, seed, jobs);
  const auto bc_shifted = success_rate(spec, bc_pi, trials, 1, seed, jobs, shift);
  const auto vins_shifted = success_rate(spec, vins_pi, trials, 1, seed, jobs, shift);
  r.bc_clean = bc_clean.mean;
  r.vins_clean = vins_clean.mean;
  r.bc_shifted = bc_shifted.mean;
  r.vins_shifted = vins_shifted.mean;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_success_csv(bc_clean, out / "success-bc.csv");
    write_success_csv(vins_clean, out / "success-vins.csv");
    write_success_csv(bc_shifted, out / "success-bc-shifted.csv");
    write_success_csv(vins_shifted, out / "success-vins-shifted.csv");
  }
  return r;
}

RlSeedResult rl_seed_study(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out, int jobs) {
  const EnvSpec spec = env_spec(cfg);
  const auto ds = collect_demos(spec, static_cast<int>(cfg.get_int("demos.count")), seed);
  const VinsConfig vcfg = vins_config(cfg);
  RlConfig rl = rl_config(cfg);
  rl.jobs = jobs;
  const double threshold = cfg.get_real("rl.threshold");

  RlSeedResult r;
  r.seed = seed;
  const VinsState trained = train_vins(spec, ds, vcfg, seed);
  r.vins_curve = train_vins_rl(spec, trained, ds, vcfg, rl, seed).curve;
  const VinsState fresh = init_vins(spec, vcfg, splitmix64(seed ^ 0xf4e5));
  r.random_curve = train_vins_rl(spec, fresh, ds, vcfg, rl, seed).curve;
  r.vins_steps = steps_to_threshold(r.vins_curve, threshold);
  r.random_steps = steps_to_threshold(r.random_curve, threshold);
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_curve_csv(r.vins_curve, out / "curve-vins-init.csv");
    write_curve_csv(r.random_curve, out / "curve-random-init.csv");
  }
  return r;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  const double lo = xs[n / 2 - 1];
  const double hi = xs[n / 2];
  if (std::isinf(hi)) return hi;
  return 0.5 * (lo + hi);
}

RunConfig config_for(const RunConfig& cfg, const std::string& name) {
  RunConfig c = cfg;
  c.set("env", name);
  return c.resolved();
}

std::string reproduce_all(const RunConfig& cfg, const std::filesystem::path& out, int jobs) {
  const std::uint64_t base = run_seed(cfg);
  const int seeds = static_cast<int>(cfg.get_int("reproduce.seeds"));
  const int rl_seeds = static_cast<int>(cfg.get_int("reproduce.rl_seeds"));
  std::ostringstream summary;

  {
    const RunConfig c = config_for(cfg, "grid");
    const auto dir = out / "grid";
    std::filesystem::create_directories(dir);
    c.write(dir / "config.txt");
    std::ofstream csv(dir / "seeds.csv");
    csv << "seed,td_mae,vins_mae,td_audit,vins_audit,corrected,p95_nonincreasing\n";
    std::vector<double> td_mae, full_audit, td_audit, corrected;
    int audit_wins = 0;
    int profile_ok = 0;
    const int within = static_cast<int>(c.get_int("correction.within"));
    for (int i = 0; i < seeds; ++i) {
      const auto r = grid_seed_study(c, base + static_cast<std::uint64_t>(i), dir / ("seed-" + std::to_string(i)));
      const bool p95 = p95_nonincreasing_from(r.correction.profile, within);
      csv << r.seed << ',' << text::format_real(r.td_mae) << ',' << text::format_real(r.full_mae) << ','
          << text::format_real(r.td_audit.fraction) << ',' << text::format_real(r.full_audit.fraction) << ','
          << text::format_real(r.correction.fraction()) << ',' << (p95 ? 1 : 0) << '\n';
      td_mae.push_back(r.td_mae);
      td_audit.push_back(r.td_audit.fraction);
      full_audit.push_back(r.full_audit.fraction);
      corrected.push_back(r.correction.fraction());
      if (r.full_audit.fraction >= 0.9 && r.full_audit.fraction > r.td_audit.fraction) ++audit_wins;
      if (p95) ++profile_ok;
    }
    summary << "grid  TD-only value MAE vs BFS (mean)         " << fixed(mean_of(td_mae)) << '\n'
            << "grid  audit fraction TD-only / VINS (mean)   " << fixed(mean_of(td_audit)) << " / "
            << fixed(mean_of(full_audit)) << '\n'
            << "grid  seeds with VINS audit >= 0.9 and > TD  " << audit_wins << '/' << seeds << '\n'
            << "grid  corrected within " << within << " steps (mean)       " << fixed(mean_of(corrected)) << '\n'
            << "grid  seeds with p95 distance non-increasing " << profile_ok << '/' << seeds << '\n';
  }

  {
    const RunConfig c = config_for(cfg, "reach");
    const auto dir = out / "reach";
    std::filesystem::create_directories(dir);
    c.write(dir / "config.txt");
    std::ofstream csv(dir / "seeds.csv");
    csv << "seed,bc_clean,vins_clean,bc_shifted,vins_shifted\n";
    std::vector<double> bc_clean, vins_clean, bc_shifted, vins_shifted;
    for (int i = 0; i < seeds; ++i) {
      const auto r = shift_seed_study(c, base + static_cast<std::uint64_t>(i), dir / ("seed-" + std::to_string(i)), jobs);
      csv << r.seed << ',' << text::format_real(r.bc_clean) << ',' << text::format_real(r.vins_clean) << ','
          << text::format_real(r.bc_shifted) << ',' << text::format_real(r.vins_shifted) << '\n';
      bc_clean.push_back(r.bc_clean);
      vins_clean.push_back(r.vins_clean);
      bc_shifted.push_back(r.bc_shifted);
      vins_shifted.push_back(r.vins_shifted);
    }
    summary << "reach success BC / VINS, clean starts        " << fixed(mean_of(bc_clean)) << " / "
            << fixed(mean_of(vins_clean)) << '\n'
            << "reach success BC / VINS, starts shifted " << fixed(c.get_real("eval.perturb0"), 2) << "  "
            << fixed(mean_of(bc_shifted)) << " / " << fixed(mean_of(vins_shifted)) << '\n';
  }

  {
    RunConfig c = config_for(cfg, "push");
    const auto dir = out / "push";
    std::filesystem::create_directories(dir);
    c.write(dir / "config.txt");
    std::ofstream csv(dir / "seeds.csv");
    csv << "seed,vins_init_steps,random_init_steps\n";
    std::vector<double> vins_steps, random_steps;
    for (int i = 0; i < rl_seeds; ++i) {
      const auto r = rl_seed_study(c, base + static_cast<std::uint64_t>(i), dir / ("seed-" + std::to_string(i)), jobs);
      csv << r.seed << ',' << text::format_real(r.vins_steps) << ',' << text::format_real(r.random_steps) << '\n';
      vins_steps.push_back(r.vins_steps);
      random_steps.push_back(r.random_steps);
    }
    summary << "push  median steps to " << fixed(c.get_real("rl.threshold"), 2) << " success, VINS init  "
            << fixed(median_of(vins_steps), 0) << '\n'
            << "push  median steps to " << fixed(c.get_real("rl.threshold"), 2) << " success, random init "
            << fixed(median_of(random_steps), 0) << '\n';
  }
  write_text(out / "summary.txt", summary.str());
  return summary.str();
}

}  // namespace vinslab
