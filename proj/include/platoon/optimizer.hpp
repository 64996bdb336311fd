#pragma once

// Penalty-escalation loop around projected quasi-Newton or steepest descent with backtracking
// (Armijo) line search over the piecewise-constant AV accelerations.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "platoon/adjoint.hpp"
#include "platoon/objective.hpp"

namespace platoon {

struct AccelerationBox {
  double lower = -3.0;
  double upper = 3.0;
};

enum class SearchDirection { bfgs, lbfgs, gradient };

inline std::string to_string(SearchDirection d) {
  return d == SearchDirection::bfgs ? "bfgs" : d == SearchDirection::lbfgs ? "lbfgs" : "gradient";
}

struct SolverOptions {
  double mu0 = 10.0;
  double mu_growth = 10.0;
  double mu_max = 1e6;
  int outer_max = 8;
  int inner_max = 500;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  double step0 = 1.0;
  /// The line search gives up once a trial moves no omega entry by more than this (m/s^2).
  double min_step = 1e-12;
  /// Stop the inner loop when max|grad| <= grad_tol * (1 + |J|).
  double grad_tol = 1e-6;
  /// Also stop when the last `stall_window` accepted steps together improved
  /// J by no more than objective_rtol * |J|.
  double objective_rtol = 1e-6;
  int stall_window = 20;
  double headway_tol = 1e-3;   // m
  double velocity_tol = 1e-3;  // m/s
  std::optional<AccelerationBox> box;
  /// Barzilai-Borwein trial step; otherwise the last accepted step is doubled.
  bool bb_step = true;
  /// Inner-loop direction: dense BFGS, limited-memory BFGS, or plain
  /// projected steepest descent.
  SearchDirection direction = SearchDirection::bfgs;
  int lbfgs_memory = 10;
  /// Trial steps never move any omega entry by more than this (m/s^2).
  double max_control_change = 2.0;
  AdjointScheme gradient = AdjointScheme::discrete;

  void validate() const {
    if (!(mu_growth > 1.0)) throw ValidationError("solver.mu_growth must exceed 1");
    if (!(mu0 >= 0.0) || !(mu_max >= mu0)) throw ValidationError("solver: need 0 <= mu0 <= mu_max");
    if (stall_window < 1 || !(objective_rtol >= 0.0)) throw ValidationError("solver: bad stall criterion");
    if (outer_max < 1 || inner_max < 0) throw ValidationError("solver: iteration limits must be positive");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ValidationError("solver.armijo_c must lie in (0, 1)");
    if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) throw ValidationError("solver.armijo_shrink must lie in (0, 1)");
    if (!(max_control_change > 0.0)) throw ValidationError("solver.max_control_change must be positive");
    if (!(step0 > 0.0) || !(grad_tol > 0.0) || !(headway_tol > 0.0) || !(velocity_tol > 0.0))
      throw ValidationError("solver: step and tolerances must be positive");
    if (box && !(box->lower < 0.0 && box->upper > 0.0))
      throw ValidationError("solver.box must satisfy a_min < 0 < a_max");
  }
};

/// Signed worst-case margin of one constraint family; negative means violated.
struct ConstraintMargin {
  double margin = std::numeric_limits<double>::infinity();
  double time = 0.0;
  int vehicle = 0;  // platoon numbering, 0 when there are no AVs

  void update(double value, double t, int vehicle_number) {
    if (value < margin) {
      margin = value;
      time = t;
      vehicle = vehicle_number;
    }
  }
  double violation() const { return std::max(0.0, -margin); }
};

struct FeasibilityReport {
  ConstraintMargin min_headway;  // gap - d_safe
  ConstraintMargin max_headway;  // d_max - gap
  ConstraintMargin velocity;     // v

  bool satisfied(double headway_tol, double velocity_tol) const {
    return min_headway.margin >= -headway_tol && max_headway.margin >= -headway_tol &&
           velocity.margin >= -velocity_tol;
  }
};

/// Scans AV headway and velocity constraints on every state-grid sample.
inline FeasibilityReport audit_feasibility(const StateTrajectory& states, const PlatoonSystem& sys,
                                           const ObjectiveConfig& obj) {
  FeasibilityReport rep;
  for (int j = 0; j < states.samples(); ++j) {
    const double t = states.time(j);
    for (int slot : sys.layout.av_slots()) {
      const double gap = states.gap(j, slot, sys.leader, sys.model.vehicle_length);
      rep.min_headway.update(gap - obj.d_safe, t, slot + 1);
      rep.max_headway.update(obj.d_max - gap, t, slot + 1);
      rep.velocity.update(states.v(j, slot), t, slot + 1);
    }
  }
  return rep;
}

/// How one outer pass ended.
struct PassSummary {
  double mu = 0.0;
  int iterations = 0;
  std::string stop;  // "stationary", "stalled", "line search failed", "iteration limit"
  double objective = 0.0;
};

struct OptimizationResult {
  ControlSchedule omega_star;
  StateTrajectory states;
  double objective = 0.0;            // penalized objective at omega_star, final mu
  double mu = 0.0;                   // final penalty weight
  std::vector<double> objective_history;  // one entry per accepted iterate (plus the start of each pass)
  std::vector<int> pass_of_iterate;       // outer pass of each history entry
  std::vector<FeasibilityReport> violation_history;  // one per outer pass
  std::vector<PassSummary> passes;
  FeasibilityReport audit;
  Metrics final_metrics;
  int iterations = 0;
  double seconds = 0.0;  // wall time
  bool converged = false;
  std::string reason;
};

inline void project(ControlSchedule& c, const std::optional<AccelerationBox>& box) {
  if (box) c.omega = c.omega.cwiseMax(box->lower).cwiseMin(box->upper);
}

struct LineSearchResult {
  bool accepted = false;
  bool stalled = false;
  double step = 0.0;
  ControlSchedule omega;
  double value = 0.0;
  int evaluations = 0;
};

/// Backtracking along the projected path P(w + s d) until
/// J(P(w + s d)) <= J(w) - c <g, w - P(w + s d)>. `objective` returns +inf
/// for rejected trial points (e.g. simulation collisions).
template <typename Objective>
LineSearchResult line_search(Objective&& objective, const ControlSchedule& omega, double value,
                             const Eigen::MatrixXd& grad, const Eigen::MatrixXd& direction, double step0,
                             const SolverOptions& opts) {
  LineSearchResult res;
  res.omega = omega;
  res.value = value;
  double s = step0;
  const double scale = direction.cwiseAbs().maxCoeff();
  while (s * scale >= opts.min_step) {
    ControlSchedule trial = omega;
    trial.omega += s * direction;
    project(trial, opts.box);
    const double decrease = (grad.array() * (omega.omega - trial.omega).array()).sum();
    if (!(decrease > 0.0)) break;
    const double f = objective(trial);
    ++res.evaluations;
    if (std::isfinite(f) && f <= value - opts.armijo_c * decrease) {
      res.accepted = true;
      res.step = s;
      res.omega = std::move(trial);
      res.value = f;
      return res;
    }
    s *= opts.armijo_shrink;
  }
  res.stalled = true;
  return res;
}

/// Steepest-descent form: d = -g.
template <typename Objective>
LineSearchResult line_search(Objective&& objective, const ControlSchedule& omega, double value,
                             const Eigen::MatrixXd& grad, double step0, const SolverOptions& opts) {
  return line_search(std::forward<Objective>(objective), omega, value, grad, Eigen::MatrixXd(-grad), step0, opts);
}

/// Limited-memory BFGS inverse-Hessian product (two-loop recursion).
class LbfgsMemory {
 public:
  explicit LbfgsMemory(int capacity) : capacity_(capacity) {}

  void clear() {
    s_.clear();
    y_.clear();
  }
  bool empty() const { return s_.empty(); }

  /// Stores a curvature pair; pairs with s'y <= 0 are skipped.
  void push(Eigen::VectorXd s, Eigen::VectorXd y) {
    if (capacity_ <= 0 || !(s.dot(y) > 1e-12 * s.norm() * y.norm())) return;
    if (static_cast<int>(s_.size()) == capacity_) {
      s_.erase(s_.begin());
      y_.erase(y_.begin());
    }
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
  }

  /// -H g
  Eigen::VectorXd direction(const Eigen::VectorXd& g) const {
    Eigen::VectorXd q = g;
    const int m = static_cast<int>(s_.size());
    std::vector<double> alpha(m), rho(m);
    for (int k = m - 1; k >= 0; --k) {
      rho[k] = 1.0 / s_[k].dot(y_[k]);
      alpha[k] = rho[k] * s_[k].dot(q);
      q -= alpha[k] * y_[k];
    }
    if (m > 0) q *= s_[m - 1].dot(y_[m - 1]) / y_[m - 1].squaredNorm();
    for (int k = 0; k < m; ++k) {
      const double beta = rho[k] * y_[k].dot(q);
      q += (alpha[k] - beta) * s_[k];
    }
    return -q;
  }

 private:
  int capacity_;
  std::vector<Eigen::VectorXd> s_, y_;
};

/// Dense inverse-Hessian BFGS approximation; the first pair sets the
/// identity scaling s'y / y'y.
class BfgsInverse {
 public:
  void clear() { H_.resize(0, 0); }
  bool empty() const { return H_.size() == 0; }

  void push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-12 * s.norm() * y.norm())) return;
    if (empty()) H_ = Eigen::MatrixXd::Identity(s.size(), s.size()) * (sy / y.squaredNorm());
    const double rho = 1.0 / sy;
    const Eigen::VectorXd Hy = H_ * y;
    const double yHy = y.dot(Hy);
    H_.noalias() -= rho * (s * Hy.transpose() + Hy * s.transpose());
    H_.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
  }

  Eigen::VectorXd direction(const Eigen::VectorXd& g) const { return empty() ? Eigen::VectorXd(-g) : Eigen::VectorXd(-(H_ * g)); }

 private:
  Eigen::MatrixXd H_;
};

namespace detail {

/// Curvature memory behind the inner-loop search direction.
class QuasiNewton {
 public:
  QuasiNewton(SearchDirection kind, int lbfgs_memory)
      : kind_(kind), lbfgs_(kind == SearchDirection::lbfgs ? lbfgs_memory : 0) {}

  void clear() {
    lbfgs_.clear();
    bfgs_.clear();
  }
  bool empty() const { return kind_ == SearchDirection::bfgs ? bfgs_.empty() : lbfgs_.empty(); }
  void push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    if (kind_ == SearchDirection::bfgs) bfgs_.push(s, y);
    else lbfgs_.push(s, y);
  }
  Eigen::VectorXd direction(const Eigen::VectorXd& g) const {
    return kind_ == SearchDirection::bfgs ? bfgs_.direction(g) : lbfgs_.direction(g);
  }

 private:
  SearchDirection kind_;
  LbfgsMemory lbfgs_;
  BfgsInverse bfgs_;
};

}  // namespace detail

/// Algorithm: for increasing penalty weights, run projected descent
/// (BFGS, L-BFGS or steepest) warm-started from the previous pass until the AV
/// constraints hold.
inline OptimizationResult solve(const Problem& problem, const SolverOptions& opts, ControlSchedule init,
                                const EnergyParams& energy = {}) {
  const auto started = std::chrono::steady_clock::now();
  opts.validate();
  problem.objective.validate();
  Problem prob = problem;
  prob.objective.mu = opts.mu0;

  ControlSchedule omega = std::move(init);
  project(omega, opts.box);

  OptimizationResult res;
  StateTrajectory last_states;
  auto objective = [&](const ControlSchedule& c) {
    try {
      StateTrajectory s = simulate_forward(prob.system, c);
      const double f = total_objective(s, c, prob);
      last_states = std::move(s);
      return f;
    } catch (const CollisionError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  ObjectiveEvaluation eval = evaluate_with_gradient(prob, omega, opts.gradient);
  for (int pass = 0; pass < opts.outer_max; ++pass) {
    if (pass > 0) eval = evaluate_with_gradient(prob, omega, opts.gradient);
    res.objective_history.push_back(eval.value);
    res.pass_of_iterate.push_back(pass);

    double step = opts.step0;
    ControlSchedule prev_omega;
    Eigen::MatrixXd prev_grad;
    detail::QuasiNewton memory(opts.direction, opts.lbfgs_memory);
    PassSummary summary{prob.objective.mu, 0, "iteration limit", 0.0};
    for (int it = 0; it < opts.inner_max; ++it) {
      if (eval.gradient.size() == 0 ||
          eval.gradient.cwiseAbs().maxCoeff() <= opts.grad_tol * (1.0 + std::abs(eval.value))) {
        summary.stop = "stationary";
        break;
      }
      Eigen::MatrixXd direction = -eval.gradient;
      if (it > 0) {
        const Eigen::MatrixXd ds = omega.omega - prev_omega.omega;
        const Eigen::MatrixXd dg = eval.gradient - prev_grad;
        const double sy = (ds.array() * dg.array()).sum();
        step = opts.bb_step && sy > 0.0 ? ds.squaredNorm() / sy : 2.0 * step;
        memory.push(ds.reshaped(), dg.reshaped());
      }
      if (!memory.empty()) {
        const Eigen::VectorXd d = memory.direction(eval.gradient.reshaped());
        if (d.dot(eval.gradient.reshaped()) < 0.0) {
          direction = d.reshaped(eval.gradient.rows(), eval.gradient.cols());
          step = 1.0;
        } else {
          memory.clear();
        }
      }
      step = std::min(step, opts.max_control_change / direction.cwiseAbs().maxCoeff());
      LineSearchResult ls = line_search(objective, omega, eval.value, eval.gradient, direction, step, opts);
      if (!ls.accepted && !memory.empty()) {
        // quasi-Newton direction failed; retry once along the gradient
        memory.clear();
        direction = -eval.gradient;
        step = std::min(opts.step0, opts.max_control_change / direction.cwiseAbs().maxCoeff());
        ls = line_search(objective, omega, eval.value, eval.gradient, direction, step, opts);
      }
      if (!ls.accepted) {
        summary.stop = "line search failed";
        break;
      }
      prev_omega = omega;
      prev_grad = eval.gradient;
      omega = std::move(ls.omega);
      step = ls.step;
      eval.value = ls.value;
      eval.states = last_states;
      eval.gradient = assemble_gradient(
          eval.states, simulate_adjoint_backward(eval.states, prob, omega, opts.gradient), omega, prob);
      res.objective_history.push_back(eval.value);
      res.pass_of_iterate.push_back(pass);
      ++res.iterations;
      ++summary.iterations;
      const std::size_t n_hist = res.objective_history.size();
      if (it + 1 >= opts.stall_window &&
          res.objective_history[n_hist - 1 - opts.stall_window] - eval.value <=
              opts.objective_rtol * std::abs(eval.value)) {
        summary.stop = "stalled";
        break;
      }
    }
    summary.objective = eval.value;
    res.passes.push_back(summary);

    const FeasibilityReport audit = audit_feasibility(eval.states, prob.system, prob.objective);
    res.violation_history.push_back(audit);
    res.omega_star = omega;
    res.states = eval.states;
    res.objective = eval.value;
    res.mu = prob.objective.mu;
    res.audit = audit;
    res.final_metrics = compute_metrics(res.states, prob.system, omega, energy);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (audit.satisfied(opts.headway_tol, opts.velocity_tol)) {
      res.converged = true;
      res.reason = "constraints satisfied";
      return res;
    }
    if (prob.objective.mu >= opts.mu_max) {
      res.reason = "penalty weight limit reached with violations";
      return res;
    }
    prob.objective.mu = std::min(std::max(prob.objective.mu, 1.0) * opts.mu_growth, opts.mu_max);
  }
  res.reason = "outer iteration limit reached with violations";
  return res;
}

/// Control schedule for a layout with one more AV: existing AVs keep their
/// optimized columns, the new AV starts from `u_init`.
inline ControlSchedule warm_start_penetration(const ControlSchedule& prev, const PlatoonLayout& prev_layout,
                                              const PlatoonLayout& new_layout, const ControlSchedule& u_init) {
  if (prev_layout.size() != new_layout.size())
    throw ValidationError("warm start: platoon sizes differ");
  if (new_layout.n_av() != prev_layout.n_av() + 1)
    throw ValidationError("warm start: the new layout must add exactly one AV");
  for (int slot : prev_layout.av_slots())
    if (!new_layout.is_av(slot)) throw ValidationError("warm start: an existing AV was removed");
  if (u_init.n_av() != 1 || u_init.tau != prev.tau)
    throw ValidationError("warm start: u_init must be a single-AV schedule on the same control grid");
  ControlSchedule out;
  out.tau = prev.tau;
  out.omega.resize(prev.intervals(), new_layout.n_av());
  for (int slot : new_layout.av_slots()) {
    const int col = new_layout.control_column(slot);
    out.omega.col(col) = prev_layout.is_av(slot) ? prev.omega.col(prev_layout.control_column(slot))
                                                 : u_init.omega.col(0);
  }
  return out;
}

/// Every AV copies the leader's mean acceleration on each control interval,
/// so an AV starting at the leader's speed keeps roughly its initial gap.
inline ControlSchedule leader_tracking_schedule(const TimeGrid& grid, const LeaderTrajectory& leader, int n_av) {
  ControlSchedule c = ControlSchedule::zeros(grid, n_av);
  const int q = grid.steps_per_interval();
  for (int k = 0; k < c.intervals(); ++k)
    c.omega.row(k).setConstant((leader.v[(k + 1) * q] - leader.v[k * q]) / grid.control_step);
  return c;
}

/// Optimal schedule of a lone AV directly behind the leader (vehicle 1's
/// initial state), used to initialize each newly added AV. Starts from
/// `leader_tracking_schedule`.
inline OptimizationResult single_av_initializer(const Problem& problem, const SolverOptions& opts) {
  Problem single = problem;
  single.system.layout = PlatoonLayout(1, {0});
  single.system.init.x0 = problem.system.init.x0.head(1);
  single.system.init.v0 = problem.system.init.v0.head(1);
  return solve(single, opts, leader_tracking_schedule(single.system.grid, single.system.leader, 1));
}

}  // namespace platoon
