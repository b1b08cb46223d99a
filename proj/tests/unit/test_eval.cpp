#include <doctest.h>

#include <fstream>

#include "../support.hpp"
#include "vinslab/errors.hpp"
#include "vinslab/eval.hpp"

using namespace vinslab;
using namespace vinslab::testing;

namespace {

State cell(double x, double y) {
  State s(2);
  s << x, y;
  return s;
}

// Two-cell demonstration set {(7,2), (8,2)} on the default grid.
DemoDataset short_grid_demo(const EnvSpec& spec) {
  Trajectory traj;
  traj.steps.push_back({cell(7, 2), cell(1, 0), -1.0, cell(8, 2), true, 0, 0});
  traj.success = true;
  return make_dataset(spec, {traj});
}

BatchValueFn grid_oracle(const EnvSpec& spec) {
  const auto bfs = bfs_distances(spec.grid_width, spec.grid_height, spec.goal.x, spec.goal.y);
  return [bfs, spec](const Eigen::MatrixXd& x) {
    Eigen::VectorXd v(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const auto cx = std::size_t(std::lround(x(0, j) * spec.grid_width));
      const auto cy = std::size_t(std::lround(x(1, j) * spec.grid_height));
      v(j) = -bfs[cx][cy];
    }
    return v;
  };
}

BatchValueFn net_value(const NetworkParams& net) {
  return [net](const Eigen::MatrixXd& x) { return Eigen::VectorXd(forward(net, x).row(0).transpose()); };
}

BatchValueFn minus_distance(const BatchValueFn& base, std::shared_ptr<DemoIndex> index, double c) {
  return [=](const Eigen::MatrixXd& x) {
    Eigen::VectorXd v = base(x);
    for (Eigen::Index j = 0; j < x.cols(); ++j) v(j) -= c * index->distance_value(x.col(j));
    return v;
  };
}

}  // namespace

TEST_CASE("the scripted expert always succeeds on grid and reach") {
  for (const auto& spec : {make_grid(), make_reach()}) {
    const auto report = success_rate(spec, expert_policy(spec), 50, 4, 1);
    CHECK(report.mean == 1.0);
    CHECK(report.stddev == 0.0);
    CHECK(report.seed_rates.size() == 4);
  }
}

TEST_CASE("the zero action never succeeds on reach") {
  const auto spec = make_reach();
  CHECK(success_rate(spec, zero_policy(spec), 100, 3, 2).mean == 0.0);
}

TEST_CASE("success rates are reproducible and independent of the thread count") {
  const auto spec = make_reach();
  const Policy noisy = [spec](const State& s, Rng& rng) {
    Action a = (s.tail(2) - s.head(2)).normalized() * 0.3 * spec.action_bound;
    a(0) += uniform(rng, -spec.action_bound, spec.action_bound);
    a(1) += uniform(rng, -spec.action_bound, spec.action_bound);
    return clamp_action(spec, a);
  };
  const auto a = success_rate(spec, noisy, 30, 5, 9, 1);
  const auto b = success_rate(spec, noisy, 30, 5, 9, 3);
  CHECK(a.seed_rates == b.seed_rates);
  CHECK(a.mean == b.mean);
  CHECK(a.mean > 0.0);
  CHECK(a.mean < 1.0);
  for (double r : a.seed_rates) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("evaluation rollouts do not count as interaction") {
  const auto spec = make_reach();
  const auto before = env_step_calls();
  success_rate(spec, expert_policy(spec), 10, 2, 0);
  CHECK(env_step_calls() == before);
}

TEST_CASE("distance to the demonstrations") {
  const auto spec = make_grid();
  const auto ds = short_grid_demo(spec);
  CHECK(distance_to_demo(spec, cell(7, 2), ds) == 0.0);
  CHECK(distance_to_demo(spec, cell(8, 2), ds) == 0.0);
  CHECK(distance_to_demo(spec, cell(6, 2), ds) == doctest::Approx(1.0 / spec.grid_width));
  CHECK(distance_to_demo(spec, cell(8, 3), ds) == doctest::Approx(1.0 / spec.grid_height));

  const auto reach = make_reach();
  auto demos = collect_demos(reach, 6, 1);
  Gen g(1);
  const State probe = reset(reach, 99);
  const double d = distance_to_demo(reach, probe, demos);
  std::shuffle(demos.trajectories.begin(), demos.trajectories.end(), g);
  CHECK(distance_to_demo(reach, probe, make_dataset(reach, demos.trajectories)) == d);
  CHECK(distance_to_demo(reach, demos.transitions[3].s, demos) == 0.0);
  State moved = demos.transitions[3].s;
  moved(0) += 1e-6;
  CHECK(distance_to_demo(reach, moved, demos) > 0.0);
  State other_goal = demos.transitions[3].s;
  other_goal(2) = 0.95;
  CHECK(distance_to_demo(reach, other_goal, demos) == 0.0);
}

TEST_CASE("quantiles use the nearest rank") {
  CHECK(quantile({3, 1, 2, 4}, 0.5) == 2);
  CHECK(quantile({3, 1, 2, 4}, 0.95) == 4);
  CHECK(quantile({7}, 0.0) == 7);
  CHECK(quantile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.95) == 10);
  CHECK_THROWS_AS(quantile({}, 0.5), InvalidArgument);
}

TEST_CASE("expert rollouts from unperturbed starts stay on the demonstrations") {
  const auto spec = make_reach();
  const auto ds = collect_demos(spec, 20, 3);
  const auto profile = rollout_distance_profile(spec, expert_policy(spec), ds, 20, 0.0, 3);
  for (const auto& st : profile.steps) CHECK(st.max == 0.0);
  for (bool s : profile.success) CHECK(s);
}

TEST_CASE("displaced starts respect perturb0 and leave the goal alone") {
  const auto spec = make_reach();
  Rng rng(5);
  const State s = reset(spec, 1);
  for (int i = 0; i < 1000; ++i) {
    const State d = displace_start(spec, s, 0.1, rng);
    REQUIRE((d.head(2) - s.head(2)).cwiseAbs().maxCoeff() <= 0.1);
    REQUIRE(d.tail(2) == s.tail(2));
  }
  const auto grid = make_grid();
  for (int i = 0; i < 200; ++i) {
    const State d = displace_start(grid, cell(0, 2), 1.0, rng);
    REQUIRE(d(0) >= 0);
    REQUIRE(d(0) <= 1);
    REQUIRE(std::abs(d(1) - 2) <= 1);
  }
  CHECK(displace_start(spec, s, 0.0, rng) == s);
  CHECK_THROWS_AS(displace_start(spec, s, -1.0, rng), InvalidArgument);
}

TEST_CASE("the audit accepts the exact conservative form and rejects constants") {
  const auto spec = make_grid();
  const auto ds = collect_demos(spec, 20, 0);
  const auto perturbation = make_perturbation(spec, ds.sigma, 0.25);
  auto index = std::make_shared<DemoIndex>(spec, ds);
  const auto oracle = grid_oracle(spec);
  const BatchValueFn exact = [&](const Eigen::MatrixXd& x) {
    Eigen::VectorXd v(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Eigen::VectorXd proj = index->project_value(x.col(j));
      v(j) = oracle(Eigen::MatrixXd(proj))(0) - 18.0 * index->distance_value(x.col(j));
    }
    return v;
  };
  const auto good = conservative_audit(spec, exact, ds, perturbation, 500, 1);
  CHECK(good.fraction == 1.0);
  CHECK(good.probes == 500);
  CHECK(good.mean_margin == doctest::Approx(18.0));
  const BatchValueFn flat = [](const Eigen::MatrixXd& x) { return Eigen::VectorXd(Eigen::VectorXd::Constant(x.cols(), 2.0)); };
  CHECK(conservative_audit(spec, flat, ds, perturbation, 500, 1).fraction == 0.0);

  const auto reach = make_reach();
  const auto rds = collect_demos(reach, 10, 0);
  const auto rperturb = make_perturbation(reach, rds.sigma, 0.25);
  CHECK(conservative_audit(reach, flat, rds, rperturb, 300, 1).fraction == 0.0);
}

TEST_CASE("subtracting distance never lowers the audit fraction") {
  Gen g(13);
  for (const auto& spec : {make_grid(), make_reach()}) {
    const auto ds = collect_demos(spec, 10, 2);
    const auto perturbation = make_perturbation(spec, ds.sigma, 0.25);
    auto index = std::make_shared<DemoIndex>(spec, ds);
    for (int trial = 0; trial < 5; ++trial) {
      const auto value = net_value(draw_network(g, value_dim(spec), 1));
      const double c = draw_real(g, 0.1, 20.0);
      const auto seed = g();
      const double before = conservative_audit(spec, value, ds, perturbation, 300, seed).fraction;
      const double after = conservative_audit(spec, minus_distance(value, index, c), ds, perturbation, 300, seed).fraction;
      CHECK(after >= before);
    }
  }
}

TEST_CASE("oracle heatmaps increase along demonstrations") {
  const auto spec = make_grid();
  const auto ds = collect_demos(spec, 5, 0);
  const auto heat = value_heatmap(spec, grid_oracle(spec), grid_lattice(spec), ds);
  CHECK(heat.values.rows() == spec.grid_height);
  CHECK(heat.values.cols() == spec.grid_width);
  CHECK(heat.demo_cells.size() == 9);
  for (const auto& traj : ds.trajectories) {
    for (const auto& tr : traj.steps) {
      const double here = heat.values(Eigen::Index(tr.s(1)), Eigen::Index(tr.s(0)));
      const double next = heat.values(Eigen::Index(tr.next(1)), Eigen::Index(tr.next(0)));
      CHECK(next > here);
    }
  }
}

TEST_CASE("heatmaps round-trip and map to gray levels") {
  TempDir dir("heat");
  const auto spec = make_push();
  const auto ds = collect_demos(spec, 3, 0);
  Gen g(21);
  const auto heat = value_heatmap(spec, net_value(draw_network(g, 6, 1)),
                                  point_slice(spec, ds.trajectories[0].steps[0].s, 9), ds);
  CHECK(heat.values.rows() == 9);
  CHECK(heat.values.cols() == 9);
  write_heatmap_csv(heat, dir.path() / "h.csv");
  const auto back = read_heatmap_csv(dir.path() / "h.csv");
  CHECK(back.values == heat.values);
  CHECK(back.lattice.base == heat.lattice.base);
  CHECK(back.lattice.nx == 9);

  const auto levels = graymap_levels(heat.values);
  CHECK(*std::min_element(levels.begin(), levels.end()) == 0);
  CHECK(*std::max_element(levels.begin(), levels.end()) == 255);
  const auto flat = graymap_levels(Eigen::MatrixXd::Constant(3, 4, 1.5));
  CHECK(std::all_of(flat.begin(), flat.end(), [](int v) { return v == 0; }));

  write_heatmap_pgm(heat, dir.path() / "h.pgm");
  std::ifstream pgm(dir.path() / "h.pgm");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 9);
  CHECK(h == 9);
  CHECK(maxval == 255);
}

TEST_CASE("report files carry their headers") {
  TempDir dir("reports");
  const auto spec = make_grid();
  const auto report = success_rate(spec, expert_policy(spec), 5, 2, 0);
  write_success_csv(report, dir.path() / "s.csv");
  write_audit_csv({0.75, 3.5, 100}, dir.path() / "a.csv");
  const auto ds = collect_demos(spec, 3, 0);
  write_profile_csv(rollout_distance_profile(spec, expert_policy(spec), ds, 3, 0.0, 0), dir.path() / "p.csv");
  const auto first_line = [&](const char* name) {
    std::ifstream in(dir.path() / name);
    std::string line;
    std::getline(in, line);
    return line;
  };
  CHECK(first_line("s.csv") == "seed,rate");
  CHECK(first_line("a.csv") == "probe_fraction,mean_margin");
  CHECK(first_line("p.csv") == "step,mean,p50,p95,max");
}
