#include <doctest.h>

#include "../support.hpp"
#include "vinslab/bc.hpp"
#include "vinslab/errors.hpp"

using namespace vinslab;
using namespace vinslab::testing;

namespace {

Action vec(double x, double y) {
  Action a(2);
  a << x, y;
  return a;
}

Batch random_batch(Gen& g, int value_dim, int n) {
  Batch b;
  b.value_s = draw_matrix(g, value_dim, n);
  b.value_next = b.value_s;
  b.actions = draw_matrix(g, 2, n, -0.1, 0.1);
  b.rewards = Eigen::VectorXd::Constant(n, -1.0);
  b.continuation = Eigen::VectorXd::Ones(n);
  return b;
}

BCPolicy zero_policy_net(const EnvSpec& spec) {
  BCPolicy p = init_bc(spec, {}, 0);
  for (auto& l : p.params.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return p;
}

}  // namespace

TEST_CASE("bc loss of a perfect and of an offset prediction") {
  const auto spec = make_reach();
  Gen g(1);
  BCPolicy p = zero_policy_net(spec);
  Batch b = random_batch(g, 4, 1);
  b.actions.setZero();
  CHECK(bc_loss(p, b) == 0.0);
  b.actions.col(0) = vec(0.3, 0.4);
  CHECK(bc_loss(p, b) == doctest::Approx(0.25).epsilon(1e-12));
  b.actions = b.actions.leftCols(0);
  b.value_s = b.value_s.leftCols(0);
  b.rewards.resize(0);
  CHECK_THROWS_AS(bc_loss(p, b), InvalidArgument);
  CHECK_THROWS_AS(bc_loss_and_gradient(p, b), InvalidArgument);
}

TEST_CASE("bc loss gradient matches finite differences") {
  Gen g(6);
  const auto spec = make_reach();
  for (int trial = 0; trial < 10; ++trial) {
    BCPolicy p = init_bc(spec, {8, 2, 1, 1, 1e-3}, g());
    for (auto& l : p.params.layers) l.bias = draw_matrix(g, l.bias.size(), 1, -0.3, 0.3);
    const Batch b = random_batch(g, 4, draw_int(g, 1, 6));
    const auto lg = bc_loss_and_gradient(p, b);
    CHECK(lg.loss == doctest::Approx(bc_loss(p, b)).epsilon(1e-12));
    BCPolicy probe = p;
    const auto check = check_gradient(p.params, lg.grad, [&](const NetworkParams& params) {
      probe.params = params;
      return bc_loss(probe, b);
    });
    CHECK(check.compared > 0);
    CHECK(check.max_relative_error <= 1e-4);
  }
}

TEST_CASE("bc loss ignores the order of the batch") {
  Gen g(3);
  const auto spec = make_reach();
  const BCPolicy p = init_bc(spec, {}, 3);
  const Batch b = random_batch(g, 4, 12);
  Batch shuffled = b;
  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), g);
  for (int j = 0; j < 12; ++j) {
    shuffled.value_s.col(j) = b.value_s.col(order[std::size_t(j)]);
    shuffled.actions.col(j) = b.actions.col(order[std::size_t(j)]);
  }
  CHECK(bc_loss(p, shuffled) == doctest::Approx(bc_loss(p, b)).epsilon(1e-12));
}

TEST_CASE("bc_act clamps and snaps") {
  const auto reach = make_reach();
  BCPolicy p = zero_policy_net(reach);
  State s(4);
  s << 0.1, 0.5, 0.9, 0.5;
  CHECK(bc_act(reach, p, s) == vec(0, 0));
  p.params.layers.back().bias << 0.5 / p.action_scale, 0;
  CHECK(bc_act(reach, p, s) == vec(0.08, 0));

  const auto grid = make_grid();
  BCPolicy gp = zero_policy_net(grid);
  gp.params.layers.back().bias << 0.9, 0.1;
  State cell(2);
  cell << 3, 3;
  CHECK(bc_act(grid, gp, cell) == vec(1, 0));
  gp.params.layers.back().bias << -0.2, -0.7;
  CHECK(bc_act(grid, gp, cell) == vec(0, -1));
}

TEST_CASE("zero iterations return the initialisation") {
  const auto spec = make_reach();
  const auto ds = collect_demos(spec, 5, 0);
  BCConfig cfg;
  cfg.iterations = 0;
  const auto trained = train_bc(spec, ds, cfg, 4);
  CHECK(trained.params == init_bc(spec, cfg, 4).params);
  CHECK(trained.loss_curve.empty());
}

TEST_CASE("bc training is deterministic and lowers held-out loss") {
  const auto spec = make_reach();
  const auto train = collect_demos(spec, 30, 0);
  const auto held = collect_demos(spec, 10, 77);
  const Batch held_batch = make_batch(spec, held.transitions);
  BCConfig cfg;
  cfg.iterations = 100;
  cfg.hidden_width = 32;
  const auto a = train_bc(spec, train, cfg, 5);
  CHECK(a.params == train_bc(spec, train, cfg, 5).params);
  CHECK(a.loss_curve.size() == 100);

  std::vector<double> window_losses;
  BCConfig step = cfg;
  for (int w = 0; w <= 10; ++w) {
    step.iterations = w * 100;
    window_losses.push_back(bc_loss(train_bc(spec, train, step, 5), held_batch));
  }
  int decreasing = 0;
  for (std::size_t i = 1; i < window_losses.size(); ++i) decreasing += window_losses[i] < window_losses[i - 1];
  CHECK(decreasing >= 6);
  CHECK(window_losses.back() < 0.5 * window_losses.front());
}

TEST_CASE("grid bc reproduces the expert moves") {
  const auto spec = make_grid();
  const auto ds = collect_demos(spec, 20, 0);
  const auto policy = train_bc(spec, ds, {}, 0);
  int match = 0;
  for (const auto& tr : ds.transitions) match += bc_act(spec, policy, tr.s) == tr.a;
  CHECK(double(match) / double(ds.transitions.size()) >= 0.95);
}

TEST_CASE("bc policies round-trip through disk") {
  TempDir dir("bc");
  const auto spec = make_push();
  const auto p = init_bc(spec, {}, 8);
  save_bc(p, dir.path() / "bc");
  const auto back = load_bc(dir.path() / "bc");
  CHECK(back.params == p.params);
  CHECK(back.action_scale == p.action_scale);
  CHECK_THROWS_AS(load_bc(dir.path() / "absent"), DependencyError);
}
