#pragma once

// Costate integration and gradients of the discretized objective with respect
// to the piecewise-constant AV accelerations.
//
// Convention: lambda(t) = dJ/dy(t), so that
//   d lambda / dt = -L_y - f_y^T lambda,  lambda(T) = S_y = 0,
//   G_i(t) = L_{u_i} + lambda_{v_i}(t)   for AV slots i.
// Two integrators are provided. `discrete` is the exact reverse-mode
// derivative of the RK3 + trapezoid discretization (matches finite
// differences to round-off). `continuous` integrates the costate ODE backward
// with the same RK3 tableau on the same grid and reduces G by the trapezoid
// rule; it converges to the same gradient at second order in the step.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "platoon/dynamics.hpp"
#include "platoon/objective.hpp"

namespace platoon {

/// Lower-bidiagonal acceleration partials of f_y = [[0, I], [C, D]].
/// `*_sub[i]` is entry (i, i - 1); `*_sub[0]` is always zero.
struct JacobianBlocks {
  Eigen::VectorXd c_diag, c_sub, d_diag, d_sub;

  int size() const { return static_cast<int>(c_diag.size()); }

  Eigen::MatrixXd C() const { return dense(c_diag, c_sub); }
  Eigen::MatrixXd D() const { return dense(d_diag, d_sub); }

  /// Full 2n x 2n Jacobian.
  Eigen::MatrixXd full() const {
    const int n = size();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n).setIdentity();
    J.bottomLeftCorner(n, n) = C();
    J.bottomRightCorner(n, n) = D();
    return J;
  }

 private:
  static Eigen::MatrixXd dense(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub) {
    const int n = static_cast<int>(diag.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      M(i, i) = diag[i];
      if (i > 0) M(i, i - 1) = sub[i];
    }
    return M;
  }
};

namespace detail {

inline void fill_jacobian(const Eigen::VectorXd& y, double leader_x, double leader_v, double t, const ModelParams& p,
                          const PlatoonLayout& layout, JacobianBlocks& J) {
  const int n = layout.size();
  J.c_diag.setZero(n);
  J.c_sub.setZero(n);
  J.d_diag.setZero(n);
  J.d_sub.setZero(n);
  for (int i : layout.hv_slots()) {
    const double x_lead = i == 0 ? leader_x : y[i - 1];
    const double v_lead = i == 0 ? leader_v : y[n + i - 1];
    const double h = x_lead - y[i] - p.vehicle_length;
    if (!(h > 0.0)) throw CollisionError(i + 1, t, h);
    const BandoPartials d = bando_ftl_partials(y[i], x_lead, y[n + i], v_lead, p);
    J.c_diag[i] = d.d_x;
    J.d_diag[i] = d.d_v;
    if (i > 0) {
      J.c_sub[i] = d.d_xlead;
      J.d_sub[i] = d.d_vlead;
    }
  }
}

/// out = f_y^T lam.
inline void apply_jacobian_transpose(const JacobianBlocks& J, const Eigen::VectorXd& lam, Eigen::VectorXd& out) {
  const int n = J.size();
  out.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    const double lv = lam[n + i];
    const double lv_next = i + 1 < n ? lam[n + i + 1] : 0.0;
    const double c_next = i + 1 < n ? J.c_sub[i + 1] : 0.0;
    const double d_next = i + 1 < n ? J.d_sub[i + 1] : 0.0;
    out[i] = J.c_diag[i] * lv + c_next * lv_next;
    out[n + i] = lam[i] + J.d_diag[i] * lv + d_next * lv_next;
  }
}

}  // namespace detail

inline JacobianBlocks jacobian_state(double t, const Eigen::VectorXd& y, const PlatoonLayout& layout,
                                     const ModelParams& params, const LeaderTrajectory& leader) {
  JacobianBlocks J;
  detail::fill_jacobian(y, leader.position_at(t), leader.velocity_at(t), t, params, layout, J);
  return J;
}

enum class AdjointScheme { discrete, continuous };

struct AdjointTrajectory {
  double step = 0.0;
  AdjointScheme scheme = AdjointScheme::discrete;
  Eigen::MatrixXd zeta;              // samples x 2n: position costates then velocity costates
  Eigen::MatrixXd step_sensitivity;  // steps x n_av, dJ/du on each step (discrete scheme only)

  int samples() const { return static_cast<int>(zeta.rows()); }
};

namespace detail {

inline void require_same_grid(const StateTrajectory& states, const PlatoonSystem& sys) {
  if (states.samples() != sys.grid.steps() + 1 || std::abs(states.step - sys.grid.state_step) > 1e-12 * states.step)
    throw GridError("state trajectory is not on the problem's state grid");
}

inline AdjointTrajectory discrete_adjoint(const StateTrajectory& states, const Problem& prob, const ControlSchedule& c) {
  const PlatoonSystem& sys = prob.system;
  const std::vector<int> interval = step_intervals(c, sys.grid);
  const std::vector<Eigen::VectorXd> controls = slot_controls(c, sys.layout);
  const int n = sys.size();
  const int r = states.steps();
  const double h = sys.grid.state_step;

  AdjointTrajectory adj;
  adj.step = h;
  adj.scheme = AdjointScheme::discrete;
  adj.zeta = Eigen::MatrixXd::Zero(r + 1, 2 * n);
  adj.step_sensitivity = Eigen::MatrixXd::Zero(r, sys.layout.n_av());

  StepStages st;
  JacobianBlocks J;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(2 * n);  // terminal cost is zero
  Eigen::VectorXd Ly_node, Lu_node, mu, kbar, ybar, tmp;
  std::array<Eigen::VectorXd, 3> kbar_s;

  // L_y of the running cost depends on y only, so one evaluation per node.
  Eigen::VectorXd y_next = states.state(r);
  node_cost(y_next, controls[interval[r - 1]], sys.leader.x[r], sys.leader.v[r], r * h, sys.model, sys.layout,
            prob.objective, &Ly_node, &Lu_node);
  Eigen::VectorXd Ly_next = Ly_node;

  for (int j = r - 1; j >= 0; --j) {
    const Eigen::VectorXd& u = controls[interval[j]];
    const Eigen::VectorXd y = states.state(j);
    mu = lam + 0.5 * h * Ly_next;

    compute_stages(sys, j, y, u, st);
    ybar = mu;
    // stage 3
    kbar_s[2] = (h * Rk3::b[2]) * mu;
    fill_jacobian(st.y[2], st.leader_x[2], st.leader_v[2], st.t[2], sys.model, sys.layout, J);
    apply_jacobian_transpose(J, kbar_s[2], tmp);
    ybar += tmp;
    // stage 2 feeds stage 3 through a32
    kbar_s[1] = (h * Rk3::b[1]) * mu + (h * Rk3::a32) * tmp;
    fill_jacobian(st.y[1], st.leader_x[1], st.leader_v[1], st.t[1], sys.model, sys.layout, J);
    apply_jacobian_transpose(J, kbar_s[1], tmp);
    ybar += tmp;
    // stage 1 feeds stage 2 through a21
    kbar_s[0] = (h * Rk3::b[0]) * mu + (h * Rk3::a21) * tmp;
    fill_jacobian(st.y[0], st.leader_x[0], st.leader_v[0], st.t[0], sys.model, sys.layout, J);
    apply_jacobian_transpose(J, kbar_s[0], tmp);
    ybar += tmp;

    node_cost(y, u, sys.leader.x[j], sys.leader.v[j], j * h, sys.model, sys.layout, prob.objective, &Ly_node,
              &Lu_node);
    lam = ybar + 0.5 * h * Ly_node;
    Ly_next = Ly_node;
    adj.zeta.row(j) = lam.transpose();

    for (int slot : sys.layout.av_slots()) {
      // both trapezoid ends carry this step's control, hence the same L_u
      const double direct = h * Lu_node[slot];
      adj.step_sensitivity(j, sys.layout.control_column(slot)) =
          kbar_s[0][n + slot] + kbar_s[1][n + slot] + kbar_s[2][n + slot] + direct;
    }
  }
  return adj;
}

inline AdjointTrajectory continuous_adjoint(const StateTrajectory& states, const Problem& prob,
                                            const ControlSchedule& c) {
  const PlatoonSystem& sys = prob.system;
  const std::vector<int> interval = step_intervals(c, sys.grid);
  const std::vector<Eigen::VectorXd> controls = slot_controls(c, sys.layout);
  const int n = sys.size();
  const int r = states.steps();
  const double h = sys.grid.state_step;

  AdjointTrajectory adj;
  adj.step = h;
  adj.scheme = AdjointScheme::continuous;
  adj.zeta = Eigen::MatrixXd::Zero(r + 1, 2 * n);

  JacobianBlocks J;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(2 * n);
  Eigen::VectorXd Ly, Lu, ft, f0, f1, ys(2 * n), stage_lam, tmp;
  std::array<Eigen::VectorXd, 3> kappa;

  for (int j = r - 1; j >= 0; --j) {
    const Eigen::VectorXd& u = controls[interval[j]];
    const Eigen::VectorXd y0 = states.state(j);
    const Eigen::VectorXd y1 = states.state(j + 1);
    // one-sided derivatives: the step's own control at both ends
    evaluate_rhs(y0, u, sys.leader.x[j], sys.leader.v[j], j * h, sys.model, sys.layout, f0);
    evaluate_rhs(y1, u, sys.leader.x[j + 1], sys.leader.v[j + 1], (j + 1) * h, sys.model, sys.layout, f1);

    auto slope = [&](double local, const Eigen::VectorXd& l, Eigen::VectorXd& out) {
      for (int q = 0; q < 2 * n; ++q) ys[q] = hermite(y0[q], y1[q], f0[q], f1[q], h, local);
      const double lx = sys.leader.position(j, local);
      const double lv = sys.leader.velocity(j, local);
      const double t = (j + local) * h;
      node_cost(ys, u, lx, lv, t, sys.model, sys.layout, prob.objective, &Ly, &Lu);
      fill_jacobian(ys, lx, lv, t, sys.model, sys.layout, J);
      apply_jacobian_transpose(J, l, tmp);
      out = -Ly - tmp;
    };

    // backward step of length h from t_{j+1}: stage times t_{j+1} - c_s h
    slope(1.0 - Rk3::c[0], lam, kappa[0]);
    stage_lam = lam - (h * Rk3::a21) * kappa[0];
    slope(1.0 - Rk3::c[1], stage_lam, kappa[1]);
    stage_lam = lam - (h * Rk3::a32) * kappa[1];
    slope(1.0 - Rk3::c[2], stage_lam, kappa[2]);
    lam -= h * (Rk3::b[0] * kappa[0] + Rk3::b[1] * kappa[1] + Rk3::b[2] * kappa[2]);
    adj.zeta.row(j) = lam.transpose();
  }
  return adj;
}

}  // namespace detail

/// Backward costate integration on the state grid of `states`.
inline AdjointTrajectory simulate_adjoint_backward(const StateTrajectory& states, const Problem& prob,
                                                   const ControlSchedule& c,
                                                   AdjointScheme scheme = AdjointScheme::discrete) {
  detail::require_same_grid(states, prob.system);
  return scheme == AdjointScheme::discrete ? detail::discrete_adjoint(states, prob, c)
                                           : detail::continuous_adjoint(states, prob, c);
}

/// Gradient of the objective with respect to omega (p x n_av).
inline Eigen::MatrixXd assemble_gradient(const StateTrajectory& states, const AdjointTrajectory& adj,
                                         const ControlSchedule& c, const Problem& prob) {
  const PlatoonSystem& sys = prob.system;
  detail::require_same_grid(states, sys);
  if (adj.samples() != states.samples()) throw GridError("adjoint and state trajectories use different grids");
  const std::vector<int> interval = step_intervals(c, sys.grid);
  const int n = sys.size();
  const double h = sys.grid.state_step;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(c.intervals(), c.n_av());

  if (adj.scheme == AdjointScheme::discrete) {
    for (int j = 0; j < states.steps(); ++j) grad.row(interval[j]) += adj.step_sensitivity.row(j);
    return grad;
  }
  const std::vector<Eigen::VectorXd> controls = detail::slot_controls(c, sys.layout);
  Eigen::VectorXd Ly, Lu;
  for (int j = 0; j < states.steps(); ++j) {
    const Eigen::VectorXd& u = controls[interval[j]];
    for (int end = 0; end < 2; ++end) {
      const int node = j + end;
      detail::node_cost(states.state(node), u, sys.leader.x[node], sys.leader.v[node], node * h, sys.model,
                        sys.layout, prob.objective, &Ly, &Lu);
      for (int slot : sys.layout.av_slots())
        grad(interval[j], sys.layout.control_column(slot)) += 0.5 * h * (Lu[slot] + adj.zeta(node, n + slot));
    }
  }
  return grad;
}

struct ObjectiveEvaluation {
  double value = 0.0;
  Eigen::MatrixXd gradient;
  StateTrajectory states;
};

/// Forward simulation, objective and adjoint gradient in one call.
inline ObjectiveEvaluation evaluate_with_gradient(const Problem& prob, const ControlSchedule& c,
                                                  AdjointScheme scheme = AdjointScheme::discrete) {
  ObjectiveEvaluation out;
  out.states = simulate_forward(prob.system, c);
  out.value = total_objective(out.states, c, prob);
  const AdjointTrajectory adj = simulate_adjoint_backward(out.states, prob, c, scheme);
  out.gradient = assemble_gradient(out.states, adj, c, prob);
  return out;
}

/// Objective of the schedule after a fresh forward simulation.
inline double objective_of(const Problem& prob, const ControlSchedule& c) {
  return total_objective(simulate_forward(prob.system, c), c, prob);
}

/// Central-difference gradient over every omega entry (2 p n_av simulations).
inline Eigen::MatrixXd finite_difference_gradient(const Problem& prob, const ControlSchedule& c, double step) {
  if (!(step > 0.0)) throw ValidationError("finite difference step must be positive");
  Eigen::MatrixXd grad(c.intervals(), c.n_av());
  ControlSchedule probe = c;
  for (int k = 0; k < c.intervals(); ++k)
    for (int m = 0; m < c.n_av(); ++m) {
      const double base = c.omega(k, m);
      probe.omega(k, m) = base + step;
      const double up = objective_of(prob, probe);
      probe.omega(k, m) = base - step;
      const double down = objective_of(prob, probe);
      probe.omega(k, m) = base;
      grad(k, m) = (up - down) / (2.0 * step);
    }
  return grad;
}

/// max |a - b| / max |b| (absolute when b vanishes).
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  const double diff = (a - b).cwiseAbs().maxCoeff();
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace platoon
