#pragma once

// Scenario configuration, lead-vehicle ingestion/synthesis, baselines,
// metric reports and trajectory export.

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "platoon/csv.hpp"
#include "platoon/optimizer.hpp"

namespace platoon {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct LeaderSpec {
  std::string source = "synthetic";  // "synthetic" | "csv"
  std::string path;                  // csv source, relative to the config file
  double v_base = 28.0;              // m/s
  double amplitude = 22.0;           // m/s, depth of each velocity dip
  double period = 120.0;             // s, duration of each dip
  int n_waves = 4;
  std::optional<double> start;       // s, start of the first dip; centred when empty
};

struct PlatoonSpec {
  int n_vehicles = 20;
  std::vector<int> av_vehicles;          // platoon numbering, 1 = directly behind the leader
  std::optional<double> initial_gap;     // m; equilibrium gap of the initial speed when empty
  std::optional<double> initial_speed;   // m/s; leader's initial speed when empty
  std::vector<double> x0;                // explicit initial positions (override gap/speed)
  std::vector<double> v0;
  double min_initial_gap = 5.0;          // m, lower bound on every initial headway
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  TimeGrid grid;
  ModelParams model;
  PlatoonSpec platoon;
  ObjectiveConfig objective;
  SolverOptions solver;
  EnergyParams energy;
  LeaderSpec leader;
  std::filesystem::path base_dir;  // not serialized
};

// ---------------------------------------------------------------------------
// JSON schema

inline json to_json(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["horizon"] = c.grid.horizon;
  j["state_step"] = c.grid.state_step;
  j["control_step"] = c.grid.control_step;
  j["model"] = {{"alpha", c.model.alpha},
                {"beta", c.model.beta},
                {"vehicle_length", c.model.vehicle_length},
                {"v_max", c.model.v_max},
                {"d_s", c.model.d_s}};
  const auto& p = c.platoon;
  j["platoon"] = {{"n_vehicles", p.n_vehicles},
                  {"av_vehicles", p.av_vehicles},
                  {"initial_gap", p.initial_gap ? json(*p.initial_gap) : json(nullptr)},
                  {"initial_speed", p.initial_speed ? json(*p.initial_speed) : json(nullptr)},
                  {"x0", p.x0},
                  {"v0", p.v0},
                  {"min_initial_gap", p.min_initial_gap}};
  j["objective"] = {{"mode", to_string(c.objective.mode)},
                    {"mu", c.objective.mu},
                    {"d_safe", c.objective.d_safe},
                    {"d_max", c.objective.d_max},
                    {"velocity_penalty", c.objective.velocity_penalty},
                    {"terminal_cost", "zero"}};
  const auto& s = c.solver;
  j["solver"] = {{"mu0", s.mu0},
                 {"mu_growth", s.mu_growth},
                 {"mu_max", s.mu_max},
                 {"outer_max", s.outer_max},
                 {"inner_max", s.inner_max},
                 {"armijo_c", s.armijo_c},
                 {"armijo_shrink", s.armijo_shrink},
                 {"step0", s.step0},
                 {"min_step", s.min_step},
                 {"grad_tol", s.grad_tol},
                 {"objective_rtol", s.objective_rtol},
                 {"stall_window", s.stall_window},
                 {"headway_tol", s.headway_tol},
                 {"velocity_tol", s.velocity_tol},
                 {"box", s.box ? json{{"lower", s.box->lower}, {"upper", s.box->upper}} : json(nullptr)},
                 {"bb_step", s.bb_step},
                 {"direction", to_string(s.direction)},
                 {"lbfgs_memory", s.lbfgs_memory},
                 {"max_control_change", s.max_control_change},
                 {"gradient", s.gradient == AdjointScheme::discrete ? "discrete" : "continuous"}};
  const auto& e = c.energy;
  j["energy"] = {{"C0", e.C0}, {"C1", e.C1}, {"C2", e.C2}, {"C3", e.C3}, {"p0", e.p0},
                 {"p1", e.p1}, {"p2", e.p2}, {"q0", e.q0}, {"q1", e.q1}};
  const auto& l = c.leader;
  j["leader"] = {{"source", l.source},     {"path", l.path},       {"v_base", l.v_base},
                 {"amplitude", l.amplitude}, {"period", l.period}, {"n_waves", l.n_waves},
                 {"start", l.start ? json(*l.start) : json(nullptr)}};
  return j;
}

namespace detail {

/// Every key of `input` must exist in `schema` (recursively); null schema
/// entries accept any value.
inline void check_known_keys(const json& input, const json& schema, const std::string& prefix) {
  if (!input.is_object()) return;
  if (!schema.is_object()) throw ValidationError("config: '" + prefix + "' is not an object in the schema");
  for (auto it = input.begin(); it != input.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) throw ValidationError("config: unknown key '" + key + "'");
    const json& sub = schema.at(it.key());
    if (sub.is_object()) check_known_keys(it.value(), sub, key);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T value{};
  read(j, key, value);
  out = value;
}

}  // namespace detail

namespace detail {
/// Default document with nullable objects expanded to their fields.
inline json config_schema() {
  json schema = to_json(ScenarioConfig{});
  schema["solver"]["box"] = {{"lower", 0.0}, {"upper", 0.0}};
  return schema;
}
}  // namespace detail

inline ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  detail::check_known_keys(j, detail::config_schema(), "");
  detail::read(j, "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ValidationError("config: unsupported schema_version " + std::to_string(c.schema_version));
  detail::read(j, "horizon", c.grid.horizon);
  detail::read(j, "state_step", c.grid.state_step);
  detail::read(j, "control_step", c.grid.control_step);
  if (j.contains("model")) {
    const json& m = j["model"];
    detail::read(m, "alpha", c.model.alpha);
    detail::read(m, "beta", c.model.beta);
    detail::read(m, "vehicle_length", c.model.vehicle_length);
    detail::read(m, "v_max", c.model.v_max);
    detail::read(m, "d_s", c.model.d_s);
  }
  if (j.contains("platoon")) {
    const json& p = j["platoon"];
    detail::read(p, "n_vehicles", c.platoon.n_vehicles);
    detail::read(p, "av_vehicles", c.platoon.av_vehicles);
    detail::read_optional(p, "initial_gap", c.platoon.initial_gap);
    detail::read_optional(p, "initial_speed", c.platoon.initial_speed);
    detail::read(p, "x0", c.platoon.x0);
    detail::read(p, "v0", c.platoon.v0);
    detail::read(p, "min_initial_gap", c.platoon.min_initial_gap);
  }
  if (j.contains("objective")) {
    const json& o = j["objective"];
    std::string mode = to_string(c.objective.mode);
    detail::read(o, "mode", mode);
    if (mode == "full") c.objective.mode = ObjectiveMode::full;
    else if (mode == "greedy") c.objective.mode = ObjectiveMode::greedy;
    else throw ValidationError("config: objective.mode must be 'full' or 'greedy'");
    detail::read(o, "mu", c.objective.mu);
    detail::read(o, "d_safe", c.objective.d_safe);
    detail::read(o, "d_max", c.objective.d_max);
    detail::read(o, "velocity_penalty", c.objective.velocity_penalty);
    std::string terminal = "zero";
    detail::read(o, "terminal_cost", terminal);
    if (terminal != "zero") throw ValidationError("config: objective.terminal_cost supports only 'zero'");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    auto& o = c.solver;
    detail::read(s, "mu0", o.mu0);
    detail::read(s, "mu_growth", o.mu_growth);
    detail::read(s, "mu_max", o.mu_max);
    detail::read(s, "outer_max", o.outer_max);
    detail::read(s, "inner_max", o.inner_max);
    detail::read(s, "armijo_c", o.armijo_c);
    detail::read(s, "armijo_shrink", o.armijo_shrink);
    detail::read(s, "step0", o.step0);
    detail::read(s, "min_step", o.min_step);
    detail::read(s, "grad_tol", o.grad_tol);
    detail::read(s, "objective_rtol", o.objective_rtol);
    detail::read(s, "stall_window", o.stall_window);
    detail::read(s, "headway_tol", o.headway_tol);
    detail::read(s, "velocity_tol", o.velocity_tol);
    detail::read(s, "bb_step", o.bb_step);
    detail::read(s, "lbfgs_memory", o.lbfgs_memory);
    detail::read(s, "max_control_change", o.max_control_change);
    std::string direction = to_string(o.direction);
    detail::read(s, "direction", direction);
    if (direction == "bfgs") o.direction = SearchDirection::bfgs;
    else if (direction == "lbfgs") o.direction = SearchDirection::lbfgs;
    else if (direction == "gradient") o.direction = SearchDirection::gradient;
    else throw ValidationError("config: solver.direction must be 'bfgs', 'lbfgs' or 'gradient'");
    if (s.contains("box") && !s["box"].is_null()) {
      AccelerationBox box;
      detail::read(s["box"], "lower", box.lower);
      detail::read(s["box"], "upper", box.upper);
      o.box = box;
    } else if (s.contains("box")) {
      o.box.reset();
    }
    std::string scheme = "discrete";
    detail::read(s, "gradient", scheme);
    if (scheme == "discrete") o.gradient = AdjointScheme::discrete;
    else if (scheme == "continuous") o.gradient = AdjointScheme::continuous;
    else throw ValidationError("config: solver.gradient must be 'discrete' or 'continuous'");
  }
  if (j.contains("energy")) {
    const json& e = j["energy"];
    auto& p = c.energy;
    detail::read(e, "C0", p.C0);
    detail::read(e, "C1", p.C1);
    detail::read(e, "C2", p.C2);
    detail::read(e, "C3", p.C3);
    detail::read(e, "p0", p.p0);
    detail::read(e, "p1", p.p1);
    detail::read(e, "p2", p.p2);
    detail::read(e, "q0", p.q0);
    detail::read(e, "q1", p.q1);
  }
  if (j.contains("leader")) {
    const json& l = j["leader"];
    detail::read(l, "source", c.leader.source);
    detail::read(l, "path", c.leader.path);
    detail::read(l, "v_base", c.leader.v_base);
    detail::read(l, "amplitude", c.leader.amplitude);
    detail::read(l, "period", c.leader.period);
    detail::read(l, "n_waves", c.leader.n_waves);
    detail::read_optional(l, "start", c.leader.start);
  }
  return c;
}

/// Applies `dotted.key=value` to a config document. The key must exist in
/// the schema; the value is parsed as JSON, falling back to a plain string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  const json schema = detail::config_schema();
  const json* node = &schema;
  json* target = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part))
      throw ValidationError("override: unknown key '" + key + "'");
    node = &node->at(part);
    if (dot == std::string::npos) {
      (*target)[part] = value;
      return;
    }
    if (!target->contains(part) || !(*target)[part].is_object()) (*target)[part] = json::object();
    target = &(*target)[part];
    start = dot + 1;
  }
}

inline ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ScenarioConfig c = config_from_json(doc);
  c.base_dir = std::filesystem::path(path).parent_path();
  return c;
}

// ---------------------------------------------------------------------------
// Lead vehicle

/// Leader cruising at `v_base` with `n_waves` consecutive raised-cosine
/// velocity dips of depth `amplitude` and duration `period`. Position and
/// acceleration are the exact integral and derivative of the velocity.
inline LeaderTrajectory synth_leader_stop_and_go(double v_base, double amplitude, double period, int n_waves,
                                                 double horizon, double step,
                                                 std::optional<double> start = std::nullopt) {
  if (!(v_base >= 0.0) || !(amplitude >= 0.0)) throw ValidationError("leader: v_base and amplitude must be >= 0");
  if (amplitude > v_base) throw ValidationError("leader: amplitude exceeds v_base, velocity would become negative");
  if (!(period > 0.0) || n_waves < 0) throw ValidationError("leader: need period > 0 and n_waves >= 0");
  const long steps = detail::exact_multiple(horizon, step);
  if (steps < 1) throw ValidationError("leader: horizon must be a positive multiple of the step");
  const double t0 = start.value_or(0.5 * (horizon - n_waves * period));
  const double w = 2.0 * std::numbers::pi / period;

  LeaderTrajectory out;
  out.step = step;
  out.x.resize(steps + 1);
  out.v.resize(steps + 1);
  out.a.resize(steps + 1);
  for (long j = 0; j <= steps; ++j) {
    const double t = j * step;
    double v = v_base, a = 0.0, x = v_base * t;
    for (int k = 0; k < n_waves; ++k) {
      const double begin = t0 + k * period;
      const double end = begin + period;
      const double s = std::clamp(t, begin, end) - begin;  // elapsed time inside the dip
      x -= 0.5 * amplitude * (s - std::sin(w * s) / w);
      if (t > begin && t < end) {
        v -= 0.5 * amplitude * (1.0 - std::cos(w * s));
        a -= 0.5 * amplitude * w * std::sin(w * s);
      }
    }
    out.x[j] = x;
    out.v[j] = std::max(v, 0.0);
    out.a[j] = a;
  }
  out.validate();
  return out;
}

/// Reads a `t,v` or `t,x` file and resamples it onto t_j = j * step, j = 0..T/step.
inline LeaderTrajectory load_leader_csv(const std::string& path, double step, double horizon) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw ValidationError("leader csv '" + path + "' is empty");
  const auto header = csv::split(lines[0]);
  if (header.size() != 2 || csv::trim(header[0]) != "t")
    throw ValidationError("leader csv header must be 't,v' or 't,x'");
  const std::string column = csv::trim(header[1]);
  if (column != "v" && column != "x") throw ValidationError("leader csv header must be 't,v' or 't,x'");

  std::vector<double> t, y;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (csv::trim(lines[n]).empty()) continue;
    const auto fields = csv::split(lines[n]);
    if (fields.size() != 2) throw ValidationError("leader csv line " + std::to_string(n + 1) + ": expected 2 fields");
    t.push_back(csv::parse_double(fields[0], n + 1));
    y.push_back(csv::parse_double(fields[1], n + 1));
    if (t.size() > 1 && !(t.back() > t[t.size() - 2]))
      throw ValidationError("leader csv: time is not strictly increasing at row " + std::to_string(t.size()));
  }
  if (t.size() < 2) throw ValidationError("leader csv needs at least two rows");

  std::vector<std::size_t> bad;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const bool negative = column == "v" ? y[k] < 0.0 : (k > 0 && y[k] < y[k - 1]);
    if (negative) bad.push_back(k + 1);
  }
  if (!bad.empty()) {
    std::string rows;
    for (std::size_t b : bad) rows += (rows.empty() ? "" : ", ") + std::to_string(b);
    throw ValidationError("leader csv: negative velocity at row(s) " + rows);
  }

  const long steps = detail::exact_multiple(horizon, step);
  if (steps < 1) throw ValidationError("leader: horizon must be a positive multiple of the step");
  const double eps = 1e-9 * std::max(1.0, horizon);
  if (t.front() > eps || t.back() < horizon - eps)
    throw ValidationError("leader csv does not cover [0, " + std::to_string(horizon) + "] s");

  const MonotoneCubic interp(t, y);
  const Eigen::Index n = steps + 1;
  LeaderTrajectory out;
  out.step = step;
  out.x.resize(n);
  out.v.resize(n);
  out.a.resize(n);
  auto differentiate = [&](const Eigen::VectorXd& f, Eigen::VectorXd& df) {
    df[0] = (f[1] - f[0]) / step;
    df[n - 1] = (f[n - 1] - f[n - 2]) / step;
    for (Eigen::Index j = 1; j + 1 < n; ++j) df[j] = (f[j + 1] - f[j - 1]) / (2.0 * step);
  };
  if (column == "v") {
    for (Eigen::Index j = 0; j < n; ++j) out.v[j] = std::max(interp(j * step), 0.0);
    out.x[0] = 0.0;
    for (Eigen::Index j = 1; j < n; ++j) out.x[j] = out.x[j - 1] + 0.5 * step * (out.v[j - 1] + out.v[j]);
    differentiate(out.v, out.a);
    out.validate();
  } else {
    for (Eigen::Index j = 0; j < n; ++j) out.x[j] = interp(j * step);
    differentiate(out.x, out.v);
    differentiate(out.v, out.a);
    out.validate(1e-2);
  }
  return out;
}

/// Writes `t,v` (or `t,x`) samples of a leader trajectory.
inline void write_leader_csv(const std::string& path, const LeaderTrajectory& leader, char column = 'v') {
  std::string out = std::string("t,") + column + "\n";
  for (int j = 0; j < leader.samples(); ++j)
    out += csv::format(j * leader.step) + "," + csv::format(column == 'x' ? leader.x[j] : leader.v[j]) + "\n";
  csv::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Scenario assembly

/// Gap h with V(h) = v (bisection on the monotone optimal-velocity curve).
inline double equilibrium_gap(double v, const ModelParams& p) {
  double lo = 1e-9, hi = 1.0;
  if (!(v > optimal_velocity(lo, p)) || !(v < p.v_max))
    throw ValidationError("no equilibrium headway for speed " + std::to_string(v) + " m/s");
  while (optimal_velocity(hi, p) < v) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (optimal_velocity(mid, p) < v ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// AV slots for a penetration sweep: vehicle 1, then every `spacing`-th vehicle.
inline PlatoonLayout penetration_layout(int n_vehicles, int n_av, int spacing = 4) {
  std::vector<int> slots;
  for (int k = 0; k < n_av; ++k) {
    if (k * spacing >= n_vehicles) throw ValidationError("penetration layout: too many AVs for the platoon size");
    slots.push_back(k * spacing);
  }
  return PlatoonLayout(n_vehicles, slots);
}

struct Scenario {
  ScenarioConfig config;
  Problem problem;

  const PlatoonSystem& system() const { return problem.system; }
  /// Same scenario with a different AV set.
  Scenario with_layout(const PlatoonLayout& layout) const {
    Scenario s = *this;
    s.problem.system.layout = layout;
    return s;
  }
  Scenario with_mode(ObjectiveMode mode) const {
    Scenario s = *this;
    s.problem.objective.mode = mode;
    return s;
  }
};

inline LeaderTrajectory build_leader(const ScenarioConfig& c) {
  if (c.leader.source == "synthetic")
    return synth_leader_stop_and_go(c.leader.v_base, c.leader.amplitude, c.leader.period, c.leader.n_waves,
                                    c.grid.horizon, c.grid.state_step, c.leader.start);
  if (c.leader.source == "csv") {
    std::filesystem::path p(c.leader.path);
    if (p.is_relative()) p = c.base_dir / p;
    return load_leader_csv(p.string(), c.grid.state_step, c.grid.horizon);
  }
  throw ValidationError("config: leader.source must be 'synthetic' or 'csv'");
}

/// Validates a configuration and assembles the optimal control problem.
inline Scenario build_scenario(const ScenarioConfig& c) {
  c.grid.validate();
  c.model.validate();
  c.objective.validate();
  c.solver.validate();
  const auto& ps = c.platoon;
  if (ps.n_vehicles < 1) throw ValidationError("platoon.n_vehicles must be at least 1");
  if (!(ps.min_initial_gap > 0.0)) throw ValidationError("platoon.min_initial_gap must be positive");
  if (c.objective.d_safe > ps.min_initial_gap)
    throw ValidationError("objective.d_safe must not exceed platoon.min_initial_gap");

  Scenario s;
  s.config = c;
  PlatoonSystem& sys = s.problem.system;
  s.problem.objective = c.objective;
  sys.model = c.model;
  sys.grid = c.grid;
  sys.leader = build_leader(c);
  sys.layout = PlatoonLayout::from_vehicle_numbers(ps.n_vehicles, ps.av_vehicles);

  const int n = ps.n_vehicles;
  sys.init.x0.resize(n);
  sys.init.v0.resize(n);
  if (!ps.x0.empty() || !ps.v0.empty()) {
    if (static_cast<int>(ps.x0.size()) != n || static_cast<int>(ps.v0.size()) != n)
      throw ValidationError("platoon.x0 and platoon.v0 must both list n_vehicles values");
    for (int i = 0; i < n; ++i) {
      sys.init.x0[i] = ps.x0[i];
      sys.init.v0[i] = ps.v0[i];
    }
  } else {
    const double speed = ps.initial_speed.value_or(sys.leader.v[0]);
    const double gap = ps.initial_gap ? *ps.initial_gap : equilibrium_gap(speed, c.model);
    for (int i = 0; i < n; ++i) {
      sys.init.x0[i] = sys.leader.x[0] - (i + 1) * (gap + c.model.vehicle_length);
      sys.init.v0[i] = speed;
    }
  }
  sys.validate();
  const Eigen::VectorXd gaps = sys.initial_gaps();
  for (int i = 0; i < n; ++i)
    if (!(gaps[i] > ps.min_initial_gap))
      throw ValidationError("initial headway of vehicle " + std::to_string(i + 1) + " (" + std::to_string(gaps[i]) +
                            " m) does not exceed platoon.min_initial_gap");
  return s;
}

// ---------------------------------------------------------------------------
// Baseline, sweeps and reports

struct Evaluation {
  StateTrajectory states;
  Metrics metrics;
};

inline Evaluation evaluate_schedule(const Scenario& s, const ControlSchedule& c) {
  Evaluation e;
  e.states = simulate_forward(s.system(), c);
  e.metrics = compute_metrics(e.states, s.system(), c, s.config.energy);
  return e;
}

/// All vehicles human-driven.
inline Evaluation baseline_all_human(const Scenario& s) {
  const Scenario hv = s.with_layout(PlatoonLayout(s.system().size(), {}));
  return evaluate_schedule(hv, ControlSchedule::zeros(hv.system().grid, 0));
}

struct SweepLeg {
  int n_av = 0;
  PlatoonLayout layout;
  OptimizationResult result;
  Metrics metrics;
};

struct SweepResult {
  Evaluation baseline;
  OptimizationResult u_init;
  std::vector<SweepLeg> legs;
};

using ProgressLog = std::function<void(const std::string&)>;

struct SweepOptions {
  bool warm_start = true;
  int parallel = 1;  // concurrent legs; only used without warm start
  /// Reuse a lone-AV solution instead of solving for it.
  std::optional<OptimizationResult> u_init;
  ProgressLog log;
};

/// Penetration sweep with 1..max_avs AVs placed by `penetration_layout`. With
/// warm start, leg m starts from leg m-1's optimum plus the lone-AV solution
/// for the added vehicle; otherwise every leg starts from zero control.
inline SweepResult sweep_penetration(const Scenario& base, int max_avs, ObjectiveMode mode,
                                     const SweepOptions& opts = {}) {
  SweepResult out;
  out.baseline = baseline_all_human(base);
  const Scenario scenario = base.with_mode(mode);
  const int n = scenario.system().size();
  const auto& log = opts.log;
  auto run_leg = [&](int m, ControlSchedule init) {
    const PlatoonLayout layout = penetration_layout(n, m);
    SweepLeg leg;
    leg.n_av = m;
    leg.layout = layout;
    leg.result = solve(scenario.with_layout(layout).problem, scenario.config.solver, std::move(init),
                       scenario.config.energy);
    leg.metrics = leg.result.final_metrics;
    return leg;
  };

  if (!opts.warm_start) {
    out.legs.resize(std::max(max_avs, 0));
    const int workers = std::max(opts.parallel, 1);
    for (int first = 1; first <= max_avs; first += workers) {
      std::vector<std::future<SweepLeg>> batch;
      for (int m = first; m < first + workers && m <= max_avs; ++m) {
        if (log) log("optimizing " + std::to_string(m) + " AV(s), " + to_string(mode) + " objective, cold start");
        batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, run_leg, m,
                                   ControlSchedule::zeros(scenario.system().grid, m)));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) out.legs[first - 1 + k] = batch[k].get();
    }
    return out;
  }

  if (max_avs > 0) {
    if (opts.u_init) {
      out.u_init = *opts.u_init;
    } else {
      if (log) log("solving lone-AV initializer");
      out.u_init = single_av_initializer(scenario.problem, scenario.config.solver);
    }
  }
  ControlSchedule prev;
  PlatoonLayout prev_layout(n, {});
  for (int m = 1; m <= max_avs; ++m) {
    const PlatoonLayout layout = penetration_layout(n, m);
    ControlSchedule init =
        m == 1 ? out.u_init.omega_star : warm_start_penetration(prev, prev_layout, layout, out.u_init.omega_star);
    if (log) log("optimizing " + std::to_string(m) + " AV(s), " + to_string(mode) + " objective");
    out.legs.push_back(run_leg(m, std::move(init)));
    prev = out.legs.back().result.omega_star;
    prev_layout = layout;
  }
  return out;
}

inline std::string platoon_label(int n_av, int n_vehicles) {
  if (n_av == 0) return std::to_string(n_vehicles) + " HV";
  return std::to_string(n_av) + " AV, " + std::to_string(n_vehicles - n_av) + " HV";
}

struct ReportRow {
  std::string label;
  Metrics metrics;
};

namespace detail {
inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}
inline std::string percent(std::optional<double> v) { return v ? fixed(*v, 2) : std::string("NA"); }
}  // namespace detail

/// Machine-readable reductions relative to `baseline` (first row is the baseline).
inline std::string report_csv(const ReportRow& baseline, const std::vector<ReportRow>& rows) {
  std::string out = "platoon,total_sq_acceleration,acceleration_reduction_pct,total_fuel,fuel_reduction_pct\n";
  auto line = [&](const ReportRow& r, bool is_base) {
    const auto& b = baseline.metrics;
    const auto& m = r.metrics;
    out += r.label + "," + csv::format(m.total_sq_acceleration) + "," +
           (is_base ? "" : detail::percent(percent_reduction(b.total_sq_acceleration, m.total_sq_acceleration))) +
           "," + csv::format(m.total_fuel) + "," +
           (is_base ? "" : detail::percent(percent_reduction(b.total_fuel, m.total_fuel))) + "\n";
  };
  line(baseline, true);
  for (const auto& r : rows) line(r, false);
  return out;
}

/// Human-readable version of `report_csv`.
inline std::string report_table(const ReportRow& baseline, const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Platoon" << std::right << std::setw(16) << "Acceleration" << std::setw(13)
     << "% Reduction" << std::setw(18) << "Fuel consumption" << std::setw(13) << "% Reduction" << "\n";
  auto line = [&](const ReportRow& r, bool is_base) {
    const auto& b = baseline.metrics;
    const auto& m = r.metrics;
    os << std::left << std::setw(14) << r.label << std::right << std::setw(16)
       << detail::fixed(m.total_sq_acceleration, 4) << std::setw(13)
       << (is_base ? "-" : detail::percent(percent_reduction(b.total_sq_acceleration, m.total_sq_acceleration)) + "%")
       << std::setw(18) << detail::fixed(m.total_fuel, 1) << std::setw(13)
       << (is_base ? "-" : detail::percent(percent_reduction(b.total_fuel, m.total_fuel)) + "%") << "\n";
  };
  line(baseline, true);
  for (const auto& r : rows) line(r, false);
  return os.str();
}

/// Relative change due to greedy optimization, 100 (greedy - full) / greedy.
inline std::string greedy_comparison_csv(const std::vector<ReportRow>& full, const std::vector<ReportRow>& greedy) {
  if (full.size() != greedy.size()) throw ValidationError("greedy comparison: row counts differ");
  std::string out = "platoon,av_acceleration_pct,total_acceleration_pct,total_fuel_pct\n";
  for (std::size_t k = 0; k < full.size(); ++k) {
    const auto& f = full[k].metrics;
    const auto& g = greedy[k].metrics;
    out += full[k].label + "," + detail::percent(greedy_relative_difference(g.av_sq_acceleration, f.av_sq_acceleration)) +
           "," + detail::percent(greedy_relative_difference(g.total_sq_acceleration, f.total_sq_acceleration)) + "," +
           detail::percent(greedy_relative_difference(g.total_fuel, f.total_fuel)) + "\n";
  }
  return out;
}

inline json metrics_to_json(const Metrics& m, const PlatoonLayout& layout) {
  json j;
  j["total_sq_acceleration"] = m.total_sq_acceleration;
  j["total_fuel"] = m.total_fuel;
  j["av_sq_acceleration"] = m.av_sq_acceleration;
  j["n_av"] = layout.n_av();
  j["n_vehicles"] = layout.size();
  json per = json::array();
  for (int i = 0; i < layout.size(); ++i)
    per.push_back({{"vehicle", i + 1}, {"is_av", layout.is_av(i)}, {"sq_acceleration", m.sq_acceleration[i]},
                   {"fuel", m.fuel[i]}});
  j["per_vehicle"] = per;
  return j;
}

inline Metrics metrics_from_json(const json& j) {
  Metrics m;
  try {
    m.total_sq_acceleration = j.at("total_sq_acceleration").get<double>();
    m.total_fuel = j.at("total_fuel").get<double>();
    m.av_sq_acceleration = j.at("av_sq_acceleration").get<double>();
    const auto& per = j.at("per_vehicle");
    m.sq_acceleration.resize(static_cast<Eigen::Index>(per.size()));
    m.fuel.resize(static_cast<Eigen::Index>(per.size()));
    for (std::size_t i = 0; i < per.size(); ++i) {
      m.sq_acceleration[static_cast<Eigen::Index>(i)] = per[i].at("sq_acceleration").get<double>();
      m.fuel[static_cast<Eigen::Index>(i)] = per[i].at("fuel").get<double>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metrics file malformed: ") + e.what());
  }
  return m;
}

inline json audit_to_json(const FeasibilityReport& r) {
  auto one = [](const ConstraintMargin& m) {
    return json{{"margin", std::isfinite(m.margin) ? json(m.margin) : json(nullptr)},
                {"time", m.time},
                {"vehicle", m.vehicle}};
  };
  return {{"min_headway", one(r.min_headway)}, {"max_headway", one(r.max_headway)}, {"velocity", one(r.velocity)}};
}

// ---------------------------------------------------------------------------
// Trajectory export

inline constexpr std::array<const char*, 4> kTrajectoryKinds{"x", "v", "a", "headway"};

/// Long-format `t,vehicle,kind,is_av,value` table; vehicles numbered from 1.
struct TrajectoryTable {
  std::vector<double> t;
  std::vector<bool> is_av;
  Eigen::MatrixXd x, v, a, headway;  // samples x vehicles

  bool operator==(const TrajectoryTable&) const = default;
};

inline TrajectoryTable make_trajectory_table(const StateTrajectory& states, const Eigen::MatrixXd& acc_samples,
                                             const Eigen::MatrixXd& gaps, const PlatoonLayout& layout) {
  TrajectoryTable tab;
  tab.t.resize(states.samples());
  for (int j = 0; j < states.samples(); ++j) tab.t[j] = states.time(j);
  tab.is_av.resize(layout.size());
  for (int i = 0; i < layout.size(); ++i) tab.is_av[i] = layout.is_av(i);
  tab.x = states.x;
  tab.v = states.v;
  tab.a = acc_samples;
  tab.headway = gaps;
  return tab;
}

inline void export_trajectories_csv(const TrajectoryTable& tab, const std::string& path) {
  std::string out = "t,vehicle,kind,is_av,value\n";
  out.reserve(tab.t.size() * tab.is_av.size() * 4 * 40);
  const std::array<const Eigen::MatrixXd*, 4> data{&tab.x, &tab.v, &tab.a, &tab.headway};
  for (std::size_t j = 0; j < tab.t.size(); ++j) {
    const std::string t = csv::format(tab.t[j]);
    for (std::size_t i = 0; i < tab.is_av.size(); ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        out += t;
        out += ',';
        out += std::to_string(i + 1);
        out += ',';
        out += kTrajectoryKinds[k];
        out += tab.is_av[i] ? ",1," : ",0,";
        out += csv::format((*data[k])(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
        out += '\n';
      }
  }
  csv::write_file(path, out);
}

inline TrajectoryTable read_trajectories_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || lines[0] != "t,vehicle,kind,is_av,value")
    throw ValidationError("trajectory csv '" + path + "': unexpected header");
  struct Row {
    double t;
    int vehicle;
    int kind;
    bool av;
    double value;
  };
  std::vector<Row> rows;
  int n_vehicles = 0;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    const auto f = csv::split(lines[n]);
    if (f.size() != 5) throw ValidationError("trajectory csv line " + std::to_string(n + 1) + ": expected 5 fields");
    Row r{};
    r.t = csv::parse_double(f[0], n + 1);
    r.vehicle = static_cast<int>(csv::parse_double(f[1], n + 1));
    const auto kind = std::find(kTrajectoryKinds.begin(), kTrajectoryKinds.end(), csv::trim(f[2]));
    if (kind == kTrajectoryKinds.end())
      throw ValidationError("trajectory csv line " + std::to_string(n + 1) + ": unknown kind");
    r.kind = static_cast<int>(kind - kTrajectoryKinds.begin());
    r.av = csv::trim(f[3]) == "1";
    r.value = csv::parse_double(f[4], n + 1);
    n_vehicles = std::max(n_vehicles, r.vehicle);
    rows.push_back(r);
  }
  if (n_vehicles == 0 || rows.size() % (4 * static_cast<std::size_t>(n_vehicles)) != 0)
    throw ValidationError("trajectory csv '" + path + "': incomplete table");
  const std::size_t samples = rows.size() / (4 * static_cast<std::size_t>(n_vehicles));
  TrajectoryTable tab;
  tab.t.resize(samples);
  tab.is_av.assign(n_vehicles, false);
  for (auto* m : {&tab.x, &tab.v, &tab.a, &tab.headway}) m->resize(static_cast<Eigen::Index>(samples), n_vehicles);
  const std::array<Eigen::MatrixXd*, 4> data{&tab.x, &tab.v, &tab.a, &tab.headway};
  for (std::size_t q = 0; q < rows.size(); ++q) {
    const auto& r = rows[q];
    const std::size_t j = q / (4 * static_cast<std::size_t>(n_vehicles));
    tab.t[j] = r.t;
    tab.is_av[r.vehicle - 1] = r.av;
    (*data[r.kind])(static_cast<Eigen::Index>(j), r.vehicle - 1) = r.value;
  }
  return tab;
}

/// Wide-format control schedule: one row per interval, one column per AV.
inline std::string omega_csv(const ControlSchedule& c, const PlatoonLayout& layout) {
  std::string out = "t_start,t_end";
  for (int slot : layout.av_slots()) out += ",av_" + std::to_string(slot + 1);
  out += "\n";
  for (int k = 0; k < c.intervals(); ++k) {
    out += csv::format(c.tau[k]) + "," + csv::format(c.tau[k + 1]);
    for (int m = 0; m < c.n_av(); ++m) out += "," + csv::format(c.omega(k, m));
    out += "\n";
  }
  return out;
}

}  // namespace platoon
