#include "vinslab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vinslab/errors.hpp"
#include "vinslab/text.hpp"

namespace vinslab {

namespace {

constexpr const char* kAuto = "auto";

std::string canonical(ValueKind kind, const std::string& key, std::string_view raw) {
  const auto v = text::trim(raw);
  try {
    switch (kind) {
      case ValueKind::boolean:
        if (v == "true" || v == "1") return "true";
        if (v == "false" || v == "0") return "false";
        throw ConfigError("");
      case ValueKind::integer:
        return std::to_string(text::parse_integer(v, 0));
      case ValueKind::real:
        return text::format_real(text::parse_real(v, 0));
      case ValueKind::text:
        if (v.empty()) throw ConfigError("");
        return std::string(v);
    }
  } catch (const Error&) {
  }
  static const char* names[] = {"a boolean", "an integer", "a real number", "a non-empty string"};
  throw ConfigError("key " + key + " expects " + names[static_cast<int>(kind)] + ", got '" + std::string(v) + "'");
}

int default_demo_count(EnvKind kind) {
  switch (kind) {
    case EnvKind::grid: return 20;
    case EnvKind::reach: return 40;
    case EnvKind::push: return 100;
  }
  return 20;
}

// Start displacement for shifted evaluations: one cell on the grid, a bit
// more than one action step in the point environments.
double default_perturb0(EnvKind kind) {
  switch (kind) {
    case EnvKind::grid: return 1.0;
    case EnvKind::reach: return 0.1;
    case EnvKind::push: return 0.05;
  }
  return 0.0;
}

}  // namespace

RunConfig::RunConfig() {
  using K = ValueKind;
  declare("seed", K::integer, "0");
  declare("env", K::text, "grid");
  declare("out", K::text, "vinslab-out");

  declare("env.horizon", K::integer, kAuto, true);
  declare("env.action_bound", K::real, kAuto, true);
  declare("env.goal_tolerance", K::real, kAuto, true);
  declare("grid.w", K::integer, kAuto, true);
  declare("grid.h", K::integer, kAuto, true);
  declare("grid.start_x", K::integer, kAuto, true);
  declare("grid.start_y", K::integer, kAuto, true);
  declare("grid.goal_x", K::integer, kAuto, true);
  declare("grid.goal_y", K::integer, kAuto, true);
  declare("point.start_band", K::real, kAuto, true);
  declare("point.goal_band", K::real, kAuto, true);
  declare("point.y_low", K::real, kAuto, true);
  declare("point.y_high", K::real, kAuto, true);
  declare("point.start_dy", K::real, kAuto, true);
  declare("push.contact_radius", K::real, kAuto, true);
  declare("push.box_low", K::real, kAuto, true);
  declare("push.box_high", K::real, kAuto, true);
  declare("push.goal_low", K::real, kAuto, true);
  declare("push.goal_high", K::real, kAuto, true);

  declare("demos.count", K::integer, kAuto, true);

  const BCConfig bc;
  declare("bc.hidden_width", K::integer, std::to_string(bc.hidden_width));
  declare("bc.hidden_layers", K::integer, std::to_string(bc.hidden_layers));
  declare("bc.iterations", K::integer, std::to_string(bc.iterations));
  declare("bc.batch", K::integer, std::to_string(bc.batch));
  declare("bc.lr", K::real, text::format_real(bc.learning_rate));

  const VinsConfig v;
  declare("vins.lambda", K::real, kAuto, true);
  declare("vins.mu", K::real, text::format_real(v.mu));
  declare("vins.tau", K::real, text::format_real(v.tau));
  declare("vins.perturb_scale", K::real, text::format_real(v.perturb_scale));
  declare("vins.alpha", K::real, kAuto, true);
  declare("vins.k", K::integer, std::to_string(v.shoot_count));
  declare("vins.batch", K::integer, std::to_string(v.batch));
  declare("vins.iterations", K::integer, std::to_string(v.iterations));
  declare("vins.value_lr", K::real, text::format_real(v.value_lr));
  declare("vins.model_lr", K::real, kAuto, true);
  declare("vins.discount", K::real, kAuto, true);
  declare("vins.value_hidden", K::integer, std::to_string(v.value_hidden));
  declare("vins.model_hidden", K::integer, std::to_string(v.model_hidden));
  declare("vins.model_layers", K::integer, std::to_string(v.model_layers));
  declare("vins.augment", K::boolean, v.augment ? "true" : "false");
  declare("vins.model", K::text, kAuto, true);

  const RlConfig rl;
  declare("rl.init", K::text, "vins");
  declare("rl.stages", K::integer, std::to_string(rl.stages));
  declare("rl.samples_per_stage", K::integer, std::to_string(rl.samples_per_stage));
  declare("rl.inner_iterations", K::integer, std::to_string(rl.inner_iterations));
  declare("rl.capacity", K::integer, std::to_string(rl.capacity));
  declare("rl.alpha", K::real, kAuto, true);
  declare("rl.k", K::integer, std::to_string(rl.shoot_count));
  declare("rl.eval_trials", K::integer, std::to_string(rl.eval_trials));
  declare("rl.eval_groups", K::integer, std::to_string(rl.eval_groups));
  declare("rl.eval_every", K::integer, std::to_string(rl.eval_every));
  declare("rl.budget", K::integer, std::to_string(rl.step_budget));
  declare("rl.stop_at", K::real, text::format_real(rl.stop_at));
  declare("rl.threshold", K::real, "0.8");

  declare("eval.policy", K::text, "vins");
  declare("eval.checkpoint", K::text, "vins");
  declare("eval.trials", K::integer, "200");
  declare("eval.seeds", K::integer, "10");
  declare("eval.perturb0", K::real, kAuto, true);
  declare("eval.rollouts", K::integer, "100");
  declare("audit.probes", K::integer, "1000");
  declare("heatmap.resolution", K::integer, "41");

  declare("correction.within", K::integer, "3");

  declare("reproduce.seeds", K::integer, "10");
  declare("reproduce.rl_seeds", K::integer, "10");
}

void RunConfig::declare(const std::string& key, ValueKind kind, std::string value, bool allows_auto) {
  if (value != kAuto) value = canonical(kind, key, value);
  entries_[key] = Entry{kind, std::move(value), allows_auto};
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown key: " + key);
  return it->second;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown key: " + key);
  auto& e = it->second;
  if (e.allows_auto && text::trim(value) == kAuto) {
    e.value = kAuto;
    return;
  }
  e.value = canonical(e.kind, key, value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(std::string(text::trim(std::string_view(assignment).substr(0, eq))), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing config: " + path.string());
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = text::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) + ": expected key = value");
    }
    set(std::string(text::trim(body.substr(0, eq))), std::string(body.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  RunConfig cfg;
  cfg.load_file(path);
  return cfg;
}

bool RunConfig::is_auto(const std::string& key) const { return entry(key).value == kAuto; }

const std::string& RunConfig::concrete(const std::string& key) const {
  const auto& e = entry(key);
  if (e.value == kAuto) throw ConfigError("key " + key + " is unresolved (auto)");
  return e.value;
}

bool RunConfig::get_bool(const std::string& key) const { return concrete(key) == "true"; }
long RunConfig::get_int(const std::string& key) const { return text::parse_integer(concrete(key), 0); }
double RunConfig::get_real(const std::string& key) const { return text::parse_real(concrete(key), 0); }
const std::string& RunConfig::get_text(const std::string& key) const { return concrete(key); }

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

RunConfig RunConfig::resolved() const {
  RunConfig out = *this;
  const EnvSpec base = make_env(get_text("env"));
  auto fill = [&](const std::string& key, const std::string& value) {
    if (out.is_auto(key)) out.entries_[key].value = value;
  };
  auto real = [](double x) { return text::format_real(x); };
  auto integer = [](long x) { return std::to_string(x); };
  fill("env.horizon", integer(base.horizon));
  fill("env.action_bound", real(base.action_bound));
  fill("env.goal_tolerance", real(base.goal_tolerance));
  fill("grid.w", integer(base.grid_width));
  fill("grid.h", integer(base.grid_height));
  fill("grid.start_x", integer(base.start.x));
  fill("grid.start_y", integer(base.start.y));
  fill("grid.goal_x", integer(base.goal.x));
  fill("grid.goal_y", integer(base.goal.y));
  fill("point.start_band", real(base.start_band));
  fill("point.goal_band", real(base.goal_band));
  fill("point.y_low", real(base.y_low));
  fill("point.y_high", real(base.y_high));
  fill("point.start_dy", real(base.start_dy));
  fill("push.contact_radius", real(base.contact_radius));
  fill("push.box_low", real(base.box_low));
  fill("push.box_high", real(base.box_high));
  fill("push.goal_low", real(base.push_goal_low));
  fill("push.goal_high", real(base.push_goal_high));
  fill("demos.count", integer(default_demo_count(base.kind)));
  fill("eval.perturb0", real(default_perturb0(base.kind)));

  const EnvSpec spec = env_spec(out);
  const VinsConfig v = default_vins_config(spec);
  fill("vins.lambda", real(v.lambda));
  fill("vins.alpha", real(v.shoot_radius));
  fill("vins.model", v.model == ModelKind::exact ? "exact" : "learned");
  fill("vins.model_lr", real(v.model_lr));
  fill("vins.discount", real(v.discount));
  fill("rl.alpha", real(default_rl_config(spec).search_radius));
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [k, e] : entries_) out << k << " = " << e.value << '\n';
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_text();
}

EnvSpec env_spec(const RunConfig& cfg) {
  EnvSpec s = make_env(cfg.get_text("env"));
  s.horizon = static_cast<int>(cfg.get_int("env.horizon"));
  s.action_bound = cfg.get_real("env.action_bound");
  s.goal_tolerance = cfg.get_real("env.goal_tolerance");
  s.grid_width = static_cast<int>(cfg.get_int("grid.w"));
  s.grid_height = static_cast<int>(cfg.get_int("grid.h"));
  s.start = {static_cast<int>(cfg.get_int("grid.start_x")), static_cast<int>(cfg.get_int("grid.start_y"))};
  s.goal = {static_cast<int>(cfg.get_int("grid.goal_x")), static_cast<int>(cfg.get_int("grid.goal_y"))};
  s.start_band = cfg.get_real("point.start_band");
  s.goal_band = cfg.get_real("point.goal_band");
  s.y_low = cfg.get_real("point.y_low");
  s.y_high = cfg.get_real("point.y_high");
  s.start_dy = cfg.get_real("point.start_dy");
  s.contact_radius = cfg.get_real("push.contact_radius");
  s.box_low = cfg.get_real("push.box_low");
  s.box_high = cfg.get_real("push.box_high");
  s.push_goal_low = cfg.get_real("push.goal_low");
  s.push_goal_high = cfg.get_real("push.goal_high");
  validate(s);
  return s;
}

BCConfig bc_config(const RunConfig& cfg) {
  BCConfig c;
  c.hidden_width = static_cast<int>(cfg.get_int("bc.hidden_width"));
  c.hidden_layers = static_cast<int>(cfg.get_int("bc.hidden_layers"));
  c.iterations = static_cast<int>(cfg.get_int("bc.iterations"));
  c.batch = static_cast<int>(cfg.get_int("bc.batch"));
  c.learning_rate = cfg.get_real("bc.lr");
  if (c.hidden_width < 1 || c.hidden_layers < 0 || c.iterations < 0 || c.batch < 1) {
    throw ConfigError("bc settings out of range");
  }
  return c;
}

VinsConfig vins_config(const RunConfig& cfg) {
  VinsConfig c;
  c.lambda = cfg.get_real("vins.lambda");
  c.mu = cfg.get_real("vins.mu");
  c.tau = cfg.get_real("vins.tau");
  c.perturb_scale = cfg.get_real("vins.perturb_scale");
  c.shoot_radius = cfg.get_real("vins.alpha");
  c.shoot_count = static_cast<int>(cfg.get_int("vins.k"));
  c.batch = static_cast<int>(cfg.get_int("vins.batch"));
  c.iterations = static_cast<int>(cfg.get_int("vins.iterations"));
  c.value_lr = cfg.get_real("vins.value_lr");
  c.model_lr = cfg.get_real("vins.model_lr");
  c.discount = cfg.get_real("vins.discount");
  c.value_hidden = static_cast<int>(cfg.get_int("vins.value_hidden"));
  c.model_hidden = static_cast<int>(cfg.get_int("vins.model_hidden"));
  c.model_layers = static_cast<int>(cfg.get_int("vins.model_layers"));
  c.augment = cfg.get_bool("vins.augment");
  const auto& model = cfg.get_text("vins.model");
  if (model == "learned") {
    c.model = ModelKind::learned;
  } else if (model == "exact") {
    c.model = ModelKind::exact;
  } else {
    throw ConfigError("vins.model must be learned, exact or auto, got '" + model + "'");
  }
  if (c.lambda < 0 || c.mu < 0 || !(c.tau > 0 && c.tau <= 1) || c.perturb_scale < 0 || !(c.shoot_radius > 0) ||
      c.shoot_count < 1 || c.batch < 1 || c.iterations < 0) {
    throw ConfigError("vins settings out of range");
  }
  return c;
}

RlConfig rl_config(const RunConfig& cfg) {
  RlConfig c;
  c.stages = static_cast<int>(cfg.get_int("rl.stages"));
  c.samples_per_stage = static_cast<int>(cfg.get_int("rl.samples_per_stage"));
  c.inner_iterations = static_cast<int>(cfg.get_int("rl.inner_iterations"));
  c.capacity = static_cast<std::size_t>(cfg.get_int("rl.capacity"));
  c.search_radius = cfg.get_real("rl.alpha");
  c.shoot_count = static_cast<int>(cfg.get_int("rl.k"));
  c.eval_trials = static_cast<int>(cfg.get_int("rl.eval_trials"));
  c.eval_groups = static_cast<int>(cfg.get_int("rl.eval_groups"));
  c.eval_every = static_cast<int>(cfg.get_int("rl.eval_every"));
  c.step_budget = static_cast<std::uint64_t>(cfg.get_int("rl.budget"));
  c.stop_at = cfg.get_real("rl.stop_at");
  if (c.stages < 0 || c.samples_per_stage < 1 || c.inner_iterations < 0 || c.shoot_count < 1 ||
      !(c.search_radius > 0) || c.eval_trials < 0) {
    throw ConfigError("rl settings out of range");
  }
  const auto& init = cfg.get_text("rl.init");
  if (init != "vins" && init != "random") throw ConfigError("rl.init must be vins or random, got '" + init + "'");
  return c;
}

std::uint64_t run_seed(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

std::filesystem::path output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("VINSLAB_OUT"); env && *env) return env;
  return cfg.get_text("out");
}

}  // namespace vinslab
