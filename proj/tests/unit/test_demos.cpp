#include <doctest.h>

#include <fstream>
#include <sstream>

#include "../support.hpp"
#include "vinslab/demos.hpp"
#include "vinslab/errors.hpp"

using namespace vinslab;
using namespace vinslab::testing;

namespace {

State vec(std::initializer_list<double> xs) {
  State s(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) s(i++) = x;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

}  // namespace

TEST_CASE("grid expert moves decrease the breadth-first distance") {
  const auto spec = make_grid();
  const auto bfs = bfs_distances(spec.grid_width, spec.grid_height, spec.goal.x, spec.goal.y);
  Rng rng(3);
  const Action right = expert_action(spec, vec({0, 2}), rng);
  CHECK(right == vec({1, 0}));
  for (int x = 0; x < spec.grid_width; ++x) {
    for (int y = 0; y < spec.grid_height; ++y) {
      if (x == spec.goal.x && y == spec.goal.y) continue;
      for (int draw = 0; draw < 4; ++draw) {
        const Action a = expert_action(spec, vec({double(x), double(y)}), rng);
        const State n = transition(spec, vec({double(x), double(y)}), a).next_state;
        REQUIRE(bfs[std::size_t(n(0))][std::size_t(n(1))] == bfs[std::size_t(x)][std::size_t(y)] - 1);
      }
    }
  }
  CHECK(grid_distance_to_goal(spec, {0, 2}) == 8);
  CHECK(grid_distance_to_goal(spec, {0, 0}) == 10);
}

TEST_CASE("grid expert breaks ties between optimal moves at random") {
  const auto spec = make_grid();
  Rng rng(1);
  int up = 0, right = 0;
  for (int i = 0; i < 200; ++i) {
    const Action a = expert_action(spec, vec({3, 0}), rng);
    if (a == vec({1, 0})) ++right;
    if (a == vec({0, 1})) ++up;
  }
  CHECK(up + right == 200);
  CHECK(up > 50);
  CHECK(right > 50);
}

TEST_CASE("reach expert heads straight for the goal") {
  const auto spec = make_reach();
  Rng rng(0);
  const Action a = expert_action(spec, vec({0.1, 0.5, 0.9, 0.5}), rng);
  CHECK(a(0) == 0.08);
  CHECK(a(1) == 0.0);
  const State close = vec({0.83, 0.5, 0.9, 0.52});
  const Action last = expert_action(spec, close, rng);
  CHECK(last == close.tail(2) - close.head(2));
  CHECK(transition(spec, close, last).reached_goal);
}

TEST_CASE("experts refuse terminal states") {
  Rng rng(0);
  CHECK_THROWS_AS(expert_action(make_grid(), vec({8, 2}), rng), InvalidArgument);
  CHECK_THROWS_AS(expert_action(make_reach(), vec({0.9, 0.5, 0.9, 0.5}), rng), InvalidArgument);
}

TEST_CASE("grid demonstrations follow shortest paths") {
  const auto spec = make_grid();
  const auto bfs = bfs_distances(spec.grid_width, spec.grid_height, spec.goal.x, spec.goal.y);
  const auto ds = collect_demos(spec, 20, 0);
  REQUIRE(ds.size() == 20);
  for (const auto& traj : ds.trajectories) {
    CHECK(traj.success);
    CHECK(static_cast<int>(traj.steps.size()) == bfs[0][2]);
    CHECK(traj.steps.size() == 8);
  }
  CHECK(ds.transitions.size() == 160);
}

TEST_CASE("reach demonstrations all succeed and replay exactly") {
  const auto spec = make_reach();
  const auto ds = collect_demos(spec, 100, 4);
  REQUIRE(ds.size() == 100);
  for (const auto& traj : ds.trajectories) {
    REQUIRE(traj.success);
    REQUIRE(traj.steps.back().reached_goal);
    State s = traj.steps.front().s;
    for (const auto& tr : traj.steps) {
      REQUIRE(tr.r == -1.0);
      REQUIRE(tr.s == s);
      s = transition(spec, s, tr.a).next_state;
      REQUIRE(s == tr.next);
    }
  }
}

TEST_CASE("push demonstrations can be collected") {
  const auto spec = make_push();
  const auto ds = collect_demos(spec, 20, 1);
  CHECK(ds.size() == 20);
  for (const auto& traj : ds.trajectories) CHECK(static_cast<int>(traj.steps.size()) <= spec.horizon);
}

TEST_CASE("collection rejects bad requests and broken experts") {
  CHECK_THROWS_AS(collect_demos(make_grid(), 0, 0), InvalidArgument);
  auto impossible = make_reach();
  impossible.horizon = 2;
  CHECK_THROWS_AS(collect_demos(impossible, 1, 0), CollectionError);
}

TEST_CASE("sigma is permutation invariant and zero on constant coordinates") {
  const auto spec = make_grid();
  const auto ds = collect_demos(spec, 20, 2);
  CHECK(ds.sigma(1) < 1e-12);
  CHECK(ds.sigma(0) > 0.0);
  auto states = ds.states();
  Gen g(5);
  std::shuffle(states.begin(), states.end(), g);
  CHECK((state_sigma(spec, states) - ds.sigma).cwiseAbs().maxCoeff() < 1e-15);

  const auto reach = collect_demos(make_reach(), 10, 2);
  CHECK((reach.sigma.array() >= 0).all());
  const auto reach_states = reach.states();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  for (const auto& s : reach_states) mean += s;
  mean /= double(reach_states.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(4);
  for (const auto& s : reach_states) var += (s - mean).cwiseAbs2();
  var /= double(reach_states.size());
  CHECK((var.cwiseSqrt() - reach.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("same seed gives byte-identical dataset files") {
  TempDir dir("demos");
  save_dataset(collect_demos(make_reach(), 10, 9), dir.path() / "a.txt");
  save_dataset(collect_demos(make_reach(), 10, 9), dir.path() / "b.txt");
  CHECK(slurp(dir.path() / "a.txt") == slurp(dir.path() / "b.txt"));
  save_dataset(collect_demos(make_reach(), 10, 10), dir.path() / "c.txt");
  CHECK(slurp(dir.path() / "a.txt") != slurp(dir.path() / "c.txt"));
}

TEST_CASE("interpolation augmentation endpoints and segment property") {
  const auto spec = make_reach();
  const auto ds = collect_demos(spec, 5, 1);
  const Transition& tr = ds.transitions[3];
  const auto at0 = augment_interpolate(tr, 0.0);
  CHECK(at0.s == tr.s);
  CHECK(at0.r == 0.0);
  CHECK(at0.next == tr.next);
  CHECK(at0.a == tr.a);
  const auto at1 = augment_interpolate(tr, 1.0);
  CHECK(at1.s == tr.next);
  CHECK(at1.r == -1.0);
  Rng rng(7);
  for (const auto& raw : ds.transitions) {
    const auto aug = augment_interpolate(raw, rng);
    REQUIRE(aug.r <= 0.0);
    REQUIRE(aug.r >= -1.0);
    const double lambda = -aug.r;
    const double step = (raw.next - raw.s).norm();
    REQUIRE((aug.s - raw.s).norm() == doctest::Approx(lambda * step).epsilon(1e-9));
    REQUIRE((aug.s - raw.s).norm() + (raw.next - aug.s).norm() == doctest::Approx(step).epsilon(1e-9));
    REQUIRE(aug.s.tail(2) == raw.s.tail(2));
    REQUIRE(aug.reached_goal == raw.reached_goal);
  }
}

TEST_CASE("datasets round-trip through their text format") {
  TempDir dir("roundtrip");
  for (const auto& spec : {make_grid(), make_reach(), make_push()}) {
    const auto ds = collect_demos(spec, 6, 3);
    save_dataset(ds, dir.path() / "ds.txt");
    const auto back = load_dataset(dir.path() / "ds.txt", spec);
    CHECK(back.trajectories == ds.trajectories);
    CHECK(back.transitions == ds.transitions);
    CHECK(back.sigma == ds.sigma);
  }
}

TEST_CASE("a single-transition dataset round-trips") {
  TempDir dir("single");
  const auto spec = make_grid();
  Trajectory traj;
  traj.steps.push_back({vec({7, 2}), vec({1, 0}), -1.0, vec({8, 2}), true, 0, 0});
  traj.success = true;
  const auto ds = make_dataset(spec, {traj});
  save_dataset(ds, dir.path() / "one.txt");
  const auto back = load_dataset(dir.path() / "one.txt", spec);
  CHECK(back.transitions == ds.transitions);
}

TEST_CASE("malformed dataset files") {
  TempDir dir("bad");
  const auto spec = make_reach();
  CHECK_THROWS_AS(load_dataset(dir.path() / "none.txt", spec), DependencyError);
  write_file(dir.path() / "empty.txt", "");
  CHECK_THROWS_AS(load_dataset(dir.path() / "empty.txt", spec), SchemaError);
  write_file(dir.path() / "header.txt", "# vinslab-demos env=reach d=4 k=2\n");
  CHECK_THROWS_AS(load_dataset(dir.path() / "header.txt", spec), SchemaError);
  write_file(dir.path() / "other.txt", "# vinslab-demos env=grid d=2 k=2\n");
  CHECK_THROWS_AS(load_dataset(dir.path() / "other.txt", spec), SchemaError);

  save_dataset(collect_demos(spec, 2, 0), dir.path() / "ok.txt");
  std::string body = slurp(dir.path() / "ok.txt");
  const auto third = body.find('\n', body.find('\n', body.find('\n') + 1) + 1);
  const auto cut = body.rfind(',', third);
  write_file(dir.path() / "truncated.txt", body.substr(0, cut) + body.substr(third));
  try {
    load_dataset(dir.path() / "truncated.txt", spec);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 3);
  }
  std::string garbled = body;
  garbled.replace(garbled.find('\n') + 1, 1, "z");
  write_file(dir.path() / "garbled.txt", garbled);
  CHECK_THROWS_AS(load_dataset(dir.path() / "garbled.txt", spec), ParseError);
}

TEST_CASE("make_dataset rejects broken trajectories") {
  const auto spec = make_grid();
  Trajectory gap;
  gap.steps.push_back({vec({6, 2}), vec({1, 0}), -1.0, vec({7, 2}), false, 0, 0});
  gap.steps.push_back({vec({6, 3}), vec({1, 0}), -1.0, vec({8, 2}), true, 0, 1});
  gap.success = true;
  CHECK_THROWS_AS(make_dataset(spec, {gap}), SchemaError);
  Trajectory failed;
  failed.steps.push_back({vec({6, 2}), vec({1, 0}), -1.0, vec({7, 2}), false, 0, 0});
  CHECK_THROWS_AS(make_dataset(spec, {failed}), SchemaError);
  CHECK_THROWS_AS(make_dataset(spec, {Trajectory{}}), SchemaError);
  CHECK_THROWS_AS(make_dataset(spec, {}), SchemaError);
}

TEST_CASE("batches lay transitions out as columns") {
  const auto spec = make_push();
  const auto ds = collect_demos(spec, 2, 0);
  const auto b = make_batch(spec, ds.transitions);
  REQUIRE(b.size() == static_cast<Eigen::Index>(ds.transitions.size()));
  CHECK(b.value_s.rows() == 6);
  CHECK(b.model_s.rows() == 4);
  CHECK(b.value_s.col(0) == ds.transitions[0].s);
  CHECK(b.model_next.col(1) == ds.transitions[1].next.head(4));
  CHECK(b.continuation.sum() == b.size() - 2);
}

TEST_CASE("transition sampling draws from the pool") {
  const auto ds = collect_demos(make_reach(), 3, 0);
  Rng rng(1);
  for (const auto& tr : sample_transitions(ds.transitions, 50, rng, false)) {
    CHECK(std::find(ds.transitions.begin(), ds.transitions.end(), tr) != ds.transitions.end());
  }
  CHECK_THROWS_AS(sample_transitions({}, 1, rng, false), InvalidArgument);
}
