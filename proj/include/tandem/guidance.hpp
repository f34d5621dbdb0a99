// Reference-trajectory generation: minimum-time quartic from the current
// state to the target, differential-flatness recovery of the full state and
// input references, and a finite-horizon LQR rollout through the modeled
// dynamics with a disturbance estimate.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tandem/error_lin.hpp"

namespace tandem::guidance {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct InfeasibleStart : std::runtime_error {
  InfeasibleStart() : std::runtime_error("non-finite quartic start condition") {}
};

struct SingularFlatMap : std::runtime_error {
  SingularFlatMap() : std::runtime_error("flat map singular (free-fall or heading-aligned thrust)") {}
};

struct RiccatiDivergence : std::runtime_error {
  RiccatiDivergence() : std::runtime_error("riccati recursion produced non-finite values") {}
};

struct FlatOutput {
  Vec3 r_ref = Vec3::Zero();  // m
  double psi_ref = 0.0;       // rad
};

// Per-axis quartic r(t) = c0 + c1 t + c2 t^2 + c3 t^3 + c4 t^4 meeting
// (r, v, a) at t = 0 and (r, v) at t = T.
struct QuarticTrajectory {
  Eigen::Matrix<double, 3, 5> coeffs = Eigen::Matrix<double, 3, 5>::Zero();
  double duration = 0.0;

  Vec3 position(double t) const {
    const double t2 = t * t;
    Eigen::Matrix<double, 5, 1> b;
    b << 1.0, t, t2, t2 * t, t2 * t2;
    return coeffs * b;
  }
  Vec3 velocity(double t) const {
    const double t2 = t * t;
    Eigen::Matrix<double, 5, 1> b;
    b << 0.0, 1.0, 2.0 * t, 3.0 * t2, 4.0 * t2 * t;
    return coeffs * b;
  }
  Vec3 acceleration(double t) const {
    Eigen::Matrix<double, 5, 1> b;
    b << 0.0, 0.0, 2.0, 6.0 * t, 12.0 * t * t;
    return coeffs * b;
  }
};

namespace detail {

inline Eigen::Matrix<double, 3, 5> quartic_coeffs(const Vec3& r0, const Vec3& v0,
                                                  const Vec3& a0, const Vec3& rf,
                                                  const Vec3& vf, double t) {
  Eigen::Matrix<double, 3, 5> c;
  c.col(0) = r0;
  c.col(1) = v0;
  c.col(2) = a0 / 2.0;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const Vec3 dr = rf - r0 - v0 * t - a0 * t2 / 2.0;
  const Vec3 dv = vf - v0 - a0 * t;
  c.col(3) = (4.0 * dr - t * dv) / t3;
  c.col(4) = (t * dv - 3.0 * dr) / (t3 * t);
  return c;
}

inline double grid_max_accel(const QuarticTrajectory& q, int grid = 100) {
  double worst = 0.0;
  for (int i = 0; i <= grid; ++i) {
    const double t = q.duration * static_cast<double>(i) / grid;
    worst = std::max(worst, q.acceleration(t).norm());
  }
  return worst;
}

}  // namespace detail

// Minimum-time quartic under an acceleration bound, found by bisection on
// the duration over a 100-point grid. The bound is relaxed to the start
// acceleration when that already exceeds it (a(0) is a hard boundary
// condition).
inline QuarticTrajectory plan_quartic(const Vec3& r0, const Vec3& v0,
                                      const Vec3& a0, const Vec3& rf,
                                      const Vec3& vf, double accel_limit,
                                      double t_min = 0.5) {
  if (!r0.allFinite() || !v0.allFinite() || !a0.allFinite()) {
    throw InfeasibleStart();
  }
  const double limit = std::max(accel_limit, a0.norm() * (1.0 + 1e-6) + 1e-9);

  auto make = [&](double t) {
    QuarticTrajectory q;
    q.duration = t;
    q.coeffs = detail::quartic_coeffs(r0, v0, a0, rf, vf, t);
    return q;
  };
  auto feasible = [&](double t) { return detail::grid_max_accel(make(t)) <= limit; };

  if (feasible(t_min)) return make(t_min);
  double lo = t_min;
  double hi = 2.0 * t_min;
  while (!feasible(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1024.0) return make(hi);  // accel decays with T; effectively unreachable
  }
  for (int i = 0; i < 80 && (hi - lo) > 1e-6 * hi; ++i) {
    const double mid = (lo + hi) / 2.0;
    (feasible(mid) ? hi : lo) = mid;
  }
  return make(hi);
}

namespace detail {

// Attitude and thrust demanded by the flat map at time t: the body z axis
// carries the thrust along a_ref - g e3 (minus the modeled drag), and the
// heading pins the remaining freedom.
inline std::pair<Mat3, double> flat_attitude(const QuarticTrajectory& traj,
                                             double psi, double t,
                                             const VehicleParams& p) {
  const double tc = std::clamp(t, 0.0, traj.duration);
  const Vec3 a_ref = traj.acceleration(tc);
  const Vec3 v_ref = traj.velocity(tc);
  const Vec3 g_vec(0.0, 0.0, p.gravity);
  const Vec3 x_c(std::cos(psi), std::sin(psi), 0.0);

  Vec3 t_vec = a_ref - g_vec;
  Mat3 c = Mat3::Identity();
  for (int pass = 0; pass < 2; ++pass) {
    if (t_vec.norm() < 0.1) throw SingularFlatMap();
    const Vec3 b3 = -t_vec.normalized();
    Vec3 b2 = b3.cross(x_c);
    if (b2.norm() < 1e-6) throw SingularFlatMap();
    b2.normalize();
    c.col(0) = b2.cross(b3);
    c.col(1) = b2;
    c.col(2) = b3;
    t_vec = a_ref - g_vec -
            (1.0 / p.mass_kg) * (c * (p.drag_force * (c.transpose() * v_ref)));
  }
  return {c, p.mass_kg * t_vec.norm()};
}

inline Vec3 flat_omega(const QuarticTrajectory& traj, double psi, double t,
                       const VehicleParams& p, double h) {
  const double t1 = std::max(0.0, t - h);
  const double t2 = std::min(traj.duration, t + h);
  if (t2 - t1 < 1e-9) return Vec3::Zero();
  const Mat3 c1 = flat_attitude(traj, psi, t1, p).first;
  const Mat3 c2 = flat_attitude(traj, psi, t2, p).first;
  return log_so3(c1.transpose() * c2) / (t2 - t1);
}

}  // namespace detail

// Recovers the full reference state and input at time t from the flat
// outputs. Angular velocity comes from central differences of the flat
// attitude; the torque follows from Euler's equation plus the modeled
// parasitic drag torque.
inline std::pair<VehicleState, ControlInput> flat_to_state(
    const QuarticTrajectory& traj, double psi, double t,
    const VehicleParams& p) {
  const auto [c, f] = detail::flat_attitude(traj, psi, t, p);
  const double h = 1e-3;
  const Vec3 omega = detail::flat_omega(traj, psi, t, p, h);
  const Vec3 omega_dot = (detail::flat_omega(traj, psi, t + h, p, h) -
                          detail::flat_omega(traj, psi, t - h, p, h)) /
                         (2.0 * h);
  const Vec3 v_ref = traj.velocity(std::clamp(t, 0.0, traj.duration));

  VehicleState x;
  x.pose.C = c;
  x.pose.v = v_ref;
  x.pose.r = traj.position(std::clamp(t, 0.0, traj.duration));
  x.omega = omega;

  ControlInput u;
  u.thrust_n = f;
  u.torque_nm = p.inertia * omega_dot + omega.cross(p.inertia * omega) +
                p.drag_torque_E * (c.transpose() * v_ref) +
                p.drag_torque_F * omega;
  return {x, u};
}

struct ReferenceTrajectory {
  std::vector<ReferencePoint> points;
  double dt_base = 0.02;
  double t0 = 0.0;

  const ReferencePoint& at(double t) const {
    const auto idx = static_cast<std::ptrdiff_t>(std::lround((t - t0) / dt_base));
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    return points[std::clamp<std::ptrdiff_t>(idx, 0, n - 1)];
  }
  double end_time() const { return points.empty() ? t0 : points.back().t; }
};

struct LqrGains {
  std::vector<Eigen::Matrix<double, 4, 12>> k;
};

struct GuidanceConfig {
  double accel_limit_mps2 = 3.0;
  double dt_base = 0.02;
  double min_duration_s = 0.5;
  double tail_s = 15.0;  // reference extension past the quartic end
  Mat12 q_lqr = (Vec12() << 10.0, 10.0, 10.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0,
                 0.1, 0.1, 0.1).finished().asDiagonal();
  Eigen::Matrix4d r_lqr = Eigen::Vector4d(1e-3, 1.0, 1.0, 1.0).asDiagonal();
  Mat12 p_lqr = (Vec12() << 10.0, 10.0, 10.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0,
                 0.1, 0.1, 0.1).finished().asDiagonal();
  Eigen::Vector4d u_min = Eigen::Vector4d(0.0, -200.0, -200.0, -200.0);
  Eigen::Vector4d u_max = Eigen::Vector4d(3000.0, 200.0, 200.0, 200.0);
};

// Generic discrete finite-horizon Riccati backward recursion.
inline std::vector<MatrixXd> riccati_gain_sequence(
    const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b,
    const MatrixXd& q, const MatrixXd& r, const MatrixXd& p_term) {
  std::vector<MatrixXd> gains(a.size());
  MatrixXd p = p_term;
  for (int k = static_cast<int>(a.size()) - 1; k >= 0; --k) {
    const MatrixXd bpb = r + b[k].transpose() * p * b[k];
    const MatrixXd kk = bpb.ldlt().solve(b[k].transpose() * p * a[k]);
    p = q + a[k].transpose() * p * a[k] -
        a[k].transpose() * p * b[k] * kk;
    p = ((p + p.transpose()) / 2.0).eval();
    if (!p.allFinite() || !kk.allFinite()) throw RiccatiDivergence();
    gains[k] = kk;
  }
  return gains;
}

// Refines a coarse reference: linearizes along it, runs the backward Riccati
// recursion, then forward-propagates the closed loop from x0 through the
// modeled dynamics with the velocity-channel disturbance estimate injected
// at every step. The rollout is dynamically consistent by construction and
// its first point equals x0.
inline ReferenceTrajectory lqr_refine(const std::vector<ReferencePoint>& coarse,
                                      const VehicleState& x0, const Vec3& dist,
                                      const VehicleParams& p,
                                      const GuidanceConfig& cfg) {
  if (coarse.empty()) throw std::invalid_argument("empty coarse trajectory");
  const int n = static_cast<int>(coarse.size()) - 1;
  const double dt = cfg.dt_base;

  std::vector<MatrixXd> a(n), b(n);
  for (int k = 0; k < n; ++k) {
    const auto [ac, bc] = linearize_continuous(coarse[k], p);
    const LinearizedModel m = discretize(ac, bc, dt);
    a[k] = m.A_d;
    b[k] = m.B_d;
  }
  const std::vector<MatrixXd> gains =
      riccati_gain_sequence(a, b, cfg.q_lqr, cfg.r_lqr, cfg.p_lqr);

  ReferenceTrajectory out;
  out.dt_base = dt;
  out.t0 = coarse.front().t;
  out.points.resize(coarse.size());

  VehicleState x = x0;
  for (int k = 0; k <= n; ++k) {
    ReferencePoint& pt = out.points[k];
    pt.pose = x.pose;
    pt.omega_r = x.omega;
    pt.h_r = p.inertia * x.omega;
    pt.t = coarse[k].t;
    if (k == n) {
      pt.u_r = out.points[k - 1].u_r;
      break;
    }
    const ErrorState dx = error_state(x, coarse[k], p);
    const Eigen::Vector4d du = -(gains[k] * dx.as_vector());
    const Mat3 dc = exp_so3(dx.xi_phi);
    Eigen::Vector4d u;
    u(0) = coarse[k].u_r.thrust_n + du(0);
    u.tail<3>() = dc.transpose() * coarse[k].u_r.torque_nm + du.tail<3>();
    u = u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
    pt.u_r = ControlInput::from_vector(u);

    x = step_rk4(x, pt.u_r, Vec3::Zero(), p, dt);
    x.pose.v += dist;
  }
  return out;
}

// Plans a fresh reference from the current state: quartic to the target,
// flat-output recovery sampled at the controller rate (held at target hover
// past the quartic end), then the LQR rollout.
inline ReferenceTrajectory replan(const VehicleState& current, const Vec3& a0,
                                  const FlatOutput& target, const Vec3& dist,
                                  const VehicleParams& p,
                                  const GuidanceConfig& cfg, double t_now) {
  const QuarticTrajectory quartic =
      plan_quartic(current.pose.r, current.pose.v, a0, target.r_ref,
                   Vec3::Zero(), cfg.accel_limit_mps2, cfg.min_duration_s);

  const int n = static_cast<int>(
      std::ceil((quartic.duration + cfg.tail_s) / cfg.dt_base));
  std::vector<ReferencePoint> coarse(n + 1);
  const Mat3 c_hover = exp_so3(Vec3(0.0, 0.0, target.psi_ref));
  for (int k = 0; k <= n; ++k) {
    const double tk = k * cfg.dt_base;
    ReferencePoint& pt = coarse[k];
    pt.t = t_now + tk;
    if (tk <= quartic.duration) {
      const auto [xs, us] = flat_to_state(quartic, target.psi_ref, tk, p);
      pt.pose = xs.pose;
      pt.omega_r = xs.omega;
      pt.h_r = p.inertia * xs.omega;
      pt.u_r = us;
    } else {
      pt.pose.C = c_hover;
      pt.pose.v = Vec3::Zero();
      pt.pose.r = target.r_ref;
      pt.omega_r = Vec3::Zero();
      pt.h_r = Vec3::Zero();
      pt.u_r = ControlInput{p.mass_kg * p.gravity, Vec3::Zero()};
    }
  }
  return lqr_refine(coarse, current, dist, p, cfg);
}

}  // namespace tandem::guidance
