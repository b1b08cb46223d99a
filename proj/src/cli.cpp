#include "vinslab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vinslab/bc.hpp"
#include "vinslab/config.hpp"
#include "vinslab/demos.hpp"
#include "vinslab/errors.hpp"
#include "vinslab/eval.hpp"
#include "vinslab/experiments.hpp"
#include "vinslab/text.hpp"
#include "vinslab/vins.hpp"
#include "vinslab/vins_rl.hpp"

namespace vinslab {

namespace {

namespace fs = std::filesystem;

struct Context {
  RunConfig cfg;  // resolved
  EnvSpec spec;
  fs::path out;
  int jobs = 1;
  std::ostream& log;
};

fs::path prepare(const Context& ctx, const std::string& name) {
  const fs::path dir = ctx.out / name;
  fs::create_directories(dir);
  ctx.cfg.write(dir / "config.txt");
  return dir;
}

DemoDataset load_demos(const Context& ctx) { return load_dataset(ctx.out / "demos" / "demos.txt", ctx.spec); }

void write_curve(const fs::path& path, const std::vector<std::pair<std::string, const std::vector<double>*>>& cols) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration";
  std::size_t rows = 0;
  for (const auto& [name, values] : cols) {
    out << ',' << name;
    rows = std::max(rows, values->size());
  }
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out << i;
    for (const auto& [name, values] : cols) {
      out << ',';
      if (i < values->size()) out << text::format_real((*values)[i]);
    }
    out << '\n';
  }
}

void gen_demos(const Context& ctx) {
  const auto ds = collect_demos(ctx.spec, static_cast<int>(ctx.cfg.get_int("demos.count")), run_seed(ctx.cfg));
  const auto dir = prepare(ctx, "demos");
  save_dataset(ds, dir / "demos.txt");
  ctx.log << "wrote " << ds.size() << " trajectories (" << ds.transitions.size() << " transitions) to "
          << (dir / "demos.txt").string() << '\n';
}

void train_bc_command(const Context& ctx) {
  const auto ds = load_demos(ctx);
  const auto policy = train_bc(ctx.spec, ds, bc_config(ctx.cfg), run_seed(ctx.cfg));
  const auto dir = prepare(ctx, "bc");
  save_bc(policy, dir);
  write_curve(dir / "loss.csv", {{"loss", &policy.loss_curve}});
  ctx.log << "final BC loss " << (policy.loss_curve.empty() ? 0.0 : policy.loss_curve.back()) << ", saved to "
          << dir.string() << '\n';
}

void train_vins_command(const Context& ctx) {
  const auto ds = load_demos(ctx);
  const VinsConfig vcfg = vins_config(ctx.cfg);
  const auto state = train_vins(ctx.spec, ds, vcfg, run_seed(ctx.cfg));
  const auto dir = prepare(ctx, "vins");
  save_vins(state, vcfg, dir);
  write_curve(dir / "loss.csv", {{"td", &state.td_curve}, {"ns", &state.ns_curve}, {"model", &state.model_curve}});
  ctx.log << "trained " << state.iteration << " iterations, saved to " << dir.string() << '\n';
}

void train_vins_rl_command(const Context& ctx) {
  const auto ds = load_demos(ctx);
  const VinsConfig vcfg = vins_config(ctx.cfg);
  RlConfig rl = rl_config(ctx.cfg);
  rl.jobs = ctx.jobs;
  const std::uint64_t seed = run_seed(ctx.cfg);
  const VinsState init = ctx.cfg.get_text("rl.init") == "vins"
                             ? load_vins(ctx.out / "vins", vcfg)
                             : init_vins(ctx.spec, vcfg, splitmix64(seed ^ 0xf4e5));
  const auto result = train_vins_rl(ctx.spec, init, ds, vcfg, rl, seed);
  const auto dir = prepare(ctx, "vins-rl");
  save_vins(result.state, vcfg, dir);
  write_curve_csv(result.curve, dir / "curve.csv");
  ctx.log << result.env_steps << " environment steps, steps to " << ctx.cfg.get_real("rl.threshold")
          << " success: " << steps_to_threshold(result.curve, ctx.cfg.get_real("rl.threshold")) << '\n';
}

VinsState load_checkpoint(const Context& ctx, const VinsConfig& vcfg) {
  const auto& name = ctx.cfg.get_text("eval.checkpoint");
  if (name != "vins" && name != "vins-rl") {
    throw ConfigError("eval.checkpoint must be vins or vins-rl, got '" + name + "'");
  }
  return load_vins(ctx.out / name, vcfg);
}

Policy make_policy(const Context& ctx, std::shared_ptr<BCPolicy>& bc_holder) {
  const auto& name = ctx.cfg.get_text("eval.policy");
  if (name == "expert") return expert_policy(ctx.spec);
  if (name == "zero") return zero_policy(ctx.spec);
  if (name == "bc") return bc_policy(ctx.spec, load_bc(ctx.out / "bc"));
  const VinsConfig vcfg = vins_config(ctx.cfg);
  if (name == "vins") {
    auto state = load_checkpoint(ctx, vcfg);
    bc_holder = std::make_shared<BCPolicy>(load_bc(ctx.out / "bc"));
    return vins_policy(ctx.spec, state, vcfg, bc_holder.get());
  }
  if (name == "vins0") return vins_policy(ctx.spec, load_checkpoint(ctx, vcfg), vcfg, nullptr);
  throw ConfigError("eval.policy must be expert, zero, bc, vins or vins0, got '" + name + "'");
}

void eval_command(const Context& ctx) {
  std::shared_ptr<BCPolicy> bc;
  const Policy policy = make_policy(ctx, bc);
  const auto ds = load_demos(ctx);
  const auto trials = static_cast<int>(ctx.cfg.get_int("eval.trials"));
  const auto seeds = static_cast<int>(ctx.cfg.get_int("eval.seeds"));
  const double p0 = ctx.cfg.get_real("eval.perturb0");
  const std::uint64_t seed = run_seed(ctx.cfg);
  const auto clean = success_rate(ctx.spec, policy, trials, seeds, seed, ctx.jobs);
  const auto shifted = success_rate(ctx.spec, policy, trials, seeds, seed, ctx.jobs,
                                    [&](const State& s, Rng& rng) { return displace_start(ctx.spec, s, p0, rng); });
  const auto profile = rollout_distance_profile(ctx.spec, policy, ds, static_cast<int>(ctx.cfg.get_int("eval.rollouts")),
                                                p0, seed);
  const auto dir = prepare(ctx, "eval");
  write_success_csv(clean, dir / "success.csv");
  write_success_csv(shifted, dir / "success-shifted.csv");
  write_profile_csv(profile, dir / "profile.csv");
  ctx.log << ctx.cfg.get_text("eval.policy") << " success " << clean.mean << " +- " << clean.stddev
          << ", with starts shifted by " << p0 << ": " << shifted.mean << " +- " << shifted.stddev << '\n';
}

void heatmap_command(const Context& ctx) {
  const VinsConfig vcfg = vins_config(ctx.cfg);
  const auto state = load_checkpoint(ctx, vcfg);
  const auto ds = load_demos(ctx);
  const Lattice lattice =
      ctx.spec.kind == EnvKind::grid
          ? grid_lattice(ctx.spec)
          : point_slice(ctx.spec, ds.trajectories.front().steps.front().s,
                        static_cast<int>(ctx.cfg.get_int("heatmap.resolution")));
  const auto grid = value_heatmap(ctx.spec, value_fn(state.value), lattice, ds);
  const auto dir = prepare(ctx, "heatmap");
  write_heatmap_csv(grid, dir / "value.csv");
  write_heatmap_pgm(grid, dir / "value.pgm");
  write_demo_cells(grid, dir / "demos.csv");
  ctx.log << grid.lattice.nx << 'x' << grid.lattice.ny << " heatmap written to " << dir.string() << '\n';
}

void audit_command(const Context& ctx) {
  const VinsConfig vcfg = vins_config(ctx.cfg);
  const auto state = load_checkpoint(ctx, vcfg);
  const auto ds = load_demos(ctx);
  const auto audit = conservative_audit(ctx.spec, value_fn(state.value), ds,
                                        make_perturbation(ctx.spec, ds.sigma, vcfg.perturb_scale),
                                        static_cast<int>(ctx.cfg.get_int("audit.probes")), run_seed(ctx.cfg));
  const auto dir = prepare(ctx, "audit");
  write_audit_csv(audit, dir / "audit.csv");
  ctx.log << "audit fraction " << audit.fraction << ", mean margin " << audit.mean_margin << " (lambda "
          << vcfg.lambda << ")\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Demonstration-driven value learning: data, training, evaluation and the full study."};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override one key, as key=value (repeatable)");
  app.add_option("--jobs", jobs, "worker threads for evaluation")->check(CLI::PositiveNumber);

  using Handler = std::function<void(const Context&)>;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-demos", "collect expert demonstrations"},
      {"train-bc", "behavioral cloning on the demonstrations"},
      {"train-vins", "value, target and model networks from the demonstrations"},
      {"train-vins-rl", "continue training with environment interaction"},
      {"eval", "success rates and distance-to-demonstration profile"},
      {"heatmap", "value heatmap export"},
      {"audit", "conservative-extrapolation audit"},
      {"reproduce", "every study end to end, with a summary table"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  const std::string command = app.get_subcommands().front()->get_name();

  const std::map<std::string, Handler> handlers{
      {"gen-demos", gen_demos},       {"train-bc", train_bc_command}, {"train-vins", train_vins_command},
      {"train-vins-rl", train_vins_rl_command}, {"eval", eval_command}, {"heatmap", heatmap_command},
      {"audit", audit_command},
  };

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& o : overrides) cfg.set_assignment(o);
    if (command == "reproduce") {
      const fs::path dir = output_dir(cfg) / "reproduce";
      fs::create_directories(dir);
      cfg.write(dir / "config.txt");
      out << reproduce_all(cfg, dir, jobs);
      return exit_ok;
    }
    const RunConfig resolved = cfg.resolved();
    Context ctx{resolved, env_spec(resolved), output_dir(resolved), jobs, out};
    handlers.at(command)(ctx);
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const DependencyError& e) {
    err << "dependency error: " << e.what() << '\n';
    return exit_dependency;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
}

}  // namespace vinslab
