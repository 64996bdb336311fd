// platoon: simulate, optimize and analyse mixed-autonomy platoons.
//
// Exit codes: 0 success, 2 invalid input, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "platoon/platoon.hpp"

namespace fs = std::filesystem;
using namespace platoon;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  long seed = 0;  // reserved; every pipeline is deterministic
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "scenario JSON file");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.overrides, "override a config value, dotted.key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "reserved, results do not depend on it");
}

ScenarioConfig load(const Common& c) {
  if (c.config.empty()) {
    json doc = to_json(ScenarioConfig{});
    for (const auto& o : c.overrides) apply_override(doc, o);
    return config_from_json(doc);
  }
  return load_config(c.config, c.overrides);
}

fs::path out_dir(const Common& c) {
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) { csv::write_file(path.string(), j.dump(2) + "\n"); }

ControlSchedule read_omega_csv(const std::string& path, const TimeGrid& grid, int n_av) {
  const auto lines = csv::read_lines(path);
  ControlSchedule c = ControlSchedule::zeros(grid, n_av);
  if (static_cast<int>(lines.size()) < c.intervals() + 1)
    throw ValidationError("omega file '" + path + "' has fewer rows than control intervals");
  for (int k = 0; k < c.intervals(); ++k) {
    const auto f = csv::split(lines[k + 1]);
    if (static_cast<int>(f.size()) != 2 + n_av)
      throw ValidationError("omega file '" + path + "': expected " + std::to_string(2 + n_av) + " columns");
    for (int m = 0; m < n_av; ++m) c.omega(k, m) = csv::parse_double(f[2 + m], k + 2);
  }
  return c;
}

void write_run(const fs::path& dir, const Scenario& s, const ControlSchedule& c, const StateTrajectory& states,
               const Metrics& m) {
  const auto& sys = s.system();
  const AccelerationProfile acc = accelerations(states, sys, c);
  const TrajectoryTable tab =
      make_trajectory_table(states, acc.samples(), headways(states, sys.leader, sys.model.vehicle_length), sys.layout);
  export_trajectories_csv(tab, (dir / "trajectories.csv").string());
  if (sys.layout.n_av() > 0) csv::write_file((dir / "omega.csv").string(), omega_csv(c, sys.layout));
  json metrics = metrics_to_json(m, sys.layout);
  metrics["audit"] = audit_to_json(audit_feasibility(states, sys, s.problem.objective));
  write_json(dir / "metrics.json", metrics);
}

json result_json(const OptimizationResult& r) {
  json j;
  j["objective"] = r.objective;
  j["mu"] = r.mu;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["reason"] = r.reason;
  j["audit"] = audit_to_json(r.audit);
  json passes = json::array();
  for (const auto& v : r.violation_history)
    passes.push_back({{"min_headway", v.min_headway.violation()},
                      {"max_headway", v.max_headway.violation()},
                      {"velocity", v.velocity.violation()}});
  j["violation_history"] = passes;
  json summaries = json::array();
  for (const auto& p : r.passes)
    summaries.push_back({{"mu", p.mu}, {"iterations", p.iterations}, {"stop", p.stop}, {"objective", p.objective}});
  j["passes"] = summaries;
  return j;
}

std::string history_csv(const OptimizationResult& r) {
  std::string out = "iterate,pass,objective\n";
  for (std::size_t k = 0; k < r.objective_history.size(); ++k)
    out += std::to_string(k) + "," + std::to_string(r.pass_of_iterate[k]) + "," + csv::format(r.objective_history[k]) +
           "\n";
  return out;
}

ControlSchedule initial_schedule(const std::string& how, const Scenario& s) {
  const auto& sys = s.system();
  if (how == "zero") return ControlSchedule::zeros(sys.grid, sys.layout.n_av());
  if (how == "leader") return leader_tracking_schedule(sys.grid, sys.leader, sys.layout.n_av());
  return read_omega_csv(how, sys.grid, sys.layout.n_av());
}

int cmd_simulate(const Common& c, const std::string& omega_path) {
  const Scenario s = build_scenario(load(c));
  const ControlSchedule ctl = omega_path.empty() ? ControlSchedule::zeros(s.system().grid, s.system().layout.n_av())
                                                 : read_omega_csv(omega_path, s.system().grid, s.system().layout.n_av());
  const Evaluation e = evaluate_schedule(s, ctl);
  const fs::path dir = out_dir(c);
  write_run(dir, s, ctl, e.states, e.metrics);
  std::cout << "total squared acceleration " << e.metrics.total_sq_acceleration << "\n"
            << "total fuel " << e.metrics.total_fuel << "\n"
            << "wrote " << (dir / "trajectories.csv").string() << "\n";
  return 0;
}

int cmd_optimize(const Common& c, const std::string& init) {
  const Scenario s = build_scenario(load(c));
  if (s.system().layout.n_av() == 0) throw ValidationError("optimize needs at least one AV (platoon.av_vehicles)");
  const OptimizationResult r =
      solve(s.problem, s.config.solver, initial_schedule(init, s), s.config.energy);
  const fs::path dir = out_dir(c);
  write_run(dir, s, r.omega_star, r.states, r.final_metrics);
  write_json(dir / "result.json", result_json(r));
  csv::write_file((dir / "history.csv").string(), history_csv(r));
  std::cout << "objective " << r.objective << " (mu " << r.mu << ", " << r.iterations << " iterations)\n"
            << "total squared acceleration " << r.final_metrics.total_sq_acceleration << "\n"
            << (r.converged ? "converged: " : "not converged: ") << r.reason << "\n";
  std::cerr << "optimization took " << r.seconds << " s\n";
  return 0;
}

int cmd_grad_check(const Common& c, double step, const std::string& scheme, const std::string& init) {
  const Scenario s = build_scenario(load(c));
  if (s.system().layout.n_av() == 0) throw ValidationError("grad-check needs at least one AV");
  const ControlSchedule ctl = initial_schedule(init, s);
  const AdjointScheme sch = scheme == "continuous" ? AdjointScheme::continuous : AdjointScheme::discrete;
  const ObjectiveEvaluation e = evaluate_with_gradient(s.problem, ctl, sch);
  const Eigen::MatrixXd fd = finite_difference_gradient(s.problem, ctl, step);
  const double err = max_relative_error(e.gradient, fd);
  std::cout << "max relative error " << err << "\n";
  if (!c.out.empty())
    write_json(out_dir(c) / "grad_check.json",
               {{"step", step}, {"scheme", scheme}, {"objective", e.value}, {"max_relative_error", err}});
  return 0;
}

int cmd_sweep(const Common& c, int max_avs, int parallel, bool cold, bool with_greedy) {
  const Scenario s = build_scenario(load(c));
  if (max_avs < 0) throw ValidationError("--max-avs must be non-negative");
  const fs::path dir = out_dir(c);
  SweepOptions opts;
  opts.warm_start = !cold;
  opts.parallel = parallel;
  opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
  const int n = s.system().size();

  auto dump = [&](const SweepResult& r, const std::string& tag) {
    std::vector<ReportRow> rows;
    for (const auto& leg : r.legs) {
      const fs::path leg_dir = dir / (tag + "_" + std::to_string(leg.n_av) + "av");
      fs::create_directories(leg_dir);
      const Scenario leg_s = s.with_mode(tag == "greedy" ? ObjectiveMode::greedy : s.problem.objective.mode)
                                 .with_layout(leg.layout);
      write_run(leg_dir, leg_s, leg.result.omega_star, leg.result.states, leg.metrics);
      write_json(leg_dir / "result.json", result_json(leg.result));
      rows.push_back({platoon_label(leg.n_av, n), leg.metrics});
    }
    return rows;
  };

  const SweepResult main = sweep_penetration(s, max_avs, s.problem.objective.mode, opts);
  const ReportRow base{platoon_label(0, n), main.baseline.metrics};
  const std::string tag = to_string(s.problem.objective.mode);
  const auto rows = dump(main, tag);
  fs::create_directories(dir / "baseline");
  write_run(dir / "baseline", s.with_layout(PlatoonLayout(n, {})), ControlSchedule::zeros(s.system().grid, 0),
            main.baseline.states, main.baseline.metrics);
  csv::write_file((dir / "reductions.csv").string(), report_csv(base, rows));
  std::cout << report_table(base, rows);

  if (with_greedy && s.problem.objective.mode == ObjectiveMode::full) {
    SweepOptions gopts = opts;
    if (!cold && max_avs > 0) gopts.u_init = main.u_init;  // the lone-AV problem has no HV terms
    const SweepResult greedy = sweep_penetration(s, max_avs, ObjectiveMode::greedy, gopts);
    const auto grows = dump(greedy, "greedy");
    csv::write_file((dir / "reductions_greedy.csv").string(), report_csv(base, grows));
    const std::string cmp = greedy_comparison_csv(rows, grows);
    csv::write_file((dir / "greedy_vs_full.csv").string(), cmp);
    std::cout << "\ngreedy vs full, 100 (greedy - full) / greedy:\n" << cmp;
  }
  return 0;
}

int cmd_gen_leader(const Common& c, const std::string& column) {
  const ScenarioConfig cfg = load(c);
  cfg.grid.validate();
  const LeaderTrajectory leader = build_leader(cfg);
  const fs::path dir = out_dir(c);
  const fs::path path = dir / "leader.csv";
  write_leader_csv(path.string(), leader, column == "x" ? 'x' : 'v');
  std::cout << "wrote " << path.string() << " (" << leader.samples() << " samples)\n";
  return 0;
}

int cmd_report(const std::string& baseline, const std::vector<std::string>& runs,
               const std::vector<std::string>& greedy, const std::string& out) {
  auto read_row = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open metrics file '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("metrics file '" + path + "' is not valid JSON: " + e.what());
    }
    const int n_av = j.value("n_av", 0);
    const int n = j.value("n_vehicles", 0);
    return ReportRow{platoon_label(n_av, n), metrics_from_json(j)};
  };
  const ReportRow base = read_row(baseline);
  std::vector<ReportRow> rows, grows;
  for (const auto& r : runs) rows.push_back(read_row(r));
  for (const auto& r : greedy) grows.push_back(read_row(r));
  std::cout << report_table(base, rows);
  std::string cmp;
  if (!grows.empty()) {
    cmp = greedy_comparison_csv(rows, grows);
    std::cout << "\ngreedy vs full, 100 (greedy - full) / greedy:\n" << cmp;
  }
  if (!out.empty()) {
    fs::create_directories(out);
    csv::write_file((fs::path(out) / "reductions.csv").string(), report_csv(base, rows));
    if (!cmp.empty()) csv::write_file((fs::path(out) / "greedy_vs_full.csv").string(), cmp);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-autonomy platoon simulation and adjoint-based optimal control"};
  app.require_subcommand(1);

  Common sim_c, opt_c, grad_c, sweep_c, gen_c;
  std::string sim_omega, opt_init = "leader", grad_init = "leader", grad_scheme = "discrete", column = "v";
  double grad_step = 1e-4;
  int max_avs = 5, parallel = 1;
  bool cold = false, with_greedy = false;
  std::string rep_base, rep_out;
  std::vector<std::string> rep_runs, rep_greedy;

  auto* sim = app.add_subcommand("simulate", "forward simulation with fixed AV controls (zero by default)");
  add_common(sim, sim_c);
  sim->add_option("--omega", sim_omega, "AV control schedule CSV written by optimize")->check(CLI::ExistingFile);

  auto* opt = app.add_subcommand("optimize", "optimize the AV controls of the configured platoon");
  add_common(opt, opt_c);
  opt->add_option("--init", opt_init, "initial controls: zero, leader (track the leader) or an omega CSV path");

  auto* grad = app.add_subcommand("grad-check", "compare the adjoint gradient with central differences");
  add_common(grad, grad_c);
  grad->add_option("--step", grad_step, "finite-difference step (m/s^2)")->check(CLI::PositiveNumber);
  grad->add_option("--scheme", grad_scheme, "adjoint scheme")->check(CLI::IsMember({"discrete", "continuous"}));
  grad->add_option("--init", grad_init, "evaluation point: zero, leader or an omega CSV path");

  auto* sweep = app.add_subcommand("sweep-penetration", "optimize with 1..max AVs and tabulate reductions");
  add_common(sweep, sweep_c);
  sweep->add_option("--max-avs", max_avs, "largest AV count");
  sweep->add_option("--parallel", parallel, "concurrent legs (cold start only)")->check(CLI::PositiveNumber);
  sweep->add_flag("--cold-start", cold, "start every leg from zero control instead of warm starting");
  sweep->add_flag("--greedy", with_greedy, "also run the greedy objective and compare");

  auto* gen = app.add_subcommand("gen-leader", "write the configured lead-vehicle trajectory as CSV");
  add_common(gen, gen_c, false);
  gen->add_option("--column", column, "v or x")->check(CLI::IsMember({"v", "x"}));

  auto* rep = app.add_subcommand("report", "tabulate reductions from metrics.json files");
  rep->add_option("--baseline", rep_base, "baseline metrics.json")->required()->check(CLI::ExistingFile);
  rep->add_option("--run", rep_runs, "optimized metrics.json (repeatable)")->required()->check(CLI::ExistingFile);
  rep->add_option("--greedy", rep_greedy, "greedy metrics.json, paired with --run")->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "output directory for CSV tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*sim) return cmd_simulate(sim_c, sim_omega);
    if (*opt) return cmd_optimize(opt_c, opt_init);
    if (*grad) return cmd_grad_check(grad_c, grad_step, grad_scheme, grad_init);
    if (*sweep) return cmd_sweep(sweep_c, max_avs, parallel, cold, with_greedy);
    if (*gen) return cmd_gen_leader(gen_c, column);
    if (*rep) return cmd_report(rep_base, rep_runs, rep_greedy, rep_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const GridError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
