// Ground-truth tandem-rotor plant: nonlinear rigid-body dynamics with
// thrust/gravity/drag forces and parasitic torques, RK4 integration,
// Dryden wind gusts, and the actuator mixer.
#pragma once

#include <cmath>
#include <random>

#include "tandem/lie.hpp"

namespace tandem {

struct VehicleParams {
  double mass_kg = 218.0;
  Mat3 inertia = Vec3(26.8, 97.6, 87.2).asDiagonal();  // J_b, kg m^2
  // Rotor drag. The drag force is C D C^T v_rel, so dissipative entries are
  // negative (a positive diagonal would feed energy into the motion).
  Mat3 drag_force = Vec3(-0.5, -0.5, -0.1).asDiagonal();       // D, kg/s
  Mat3 drag_torque_E = Vec3(0.01, 0.01, 0.01).asDiagonal();    // N m s/m
  Mat3 drag_torque_F = Vec3(0.1, 0.1, 0.1).asDiagonal();       // N m s/rad
  double gravity = 9.81;        // m/s^2, +z in NED
  double rotor_arm_m = 2.0;     // mixer geometry

  Vec3 hover_specific_gravity() const { return Vec3(0.0, 0.0, gravity); }
};

struct VehicleState {
  ExtendedPose pose;          // C_ab, v (inertial), r (inertial)
  Vec3 omega = Vec3::Zero();  // rad/s, body angular velocity
};

// u = [f; m_b]. f is the total rotor thrust magnitude (N, nonnegative in
// normal flight); the propulsion force in the body frame is [0, 0, -f],
// i.e. thrust pushes along -b3 and opposes gravity in NED.
struct ControlInput {
  double thrust_n = 0.0;
  Vec3 torque_nm = Vec3::Zero();

  Eigen::Vector4d as_vector() const {
    Eigen::Vector4d u;
    u << thrust_n, torque_nm;
    return u;
  }
  static ControlInput from_vector(const Eigen::Vector4d& u) {
    return ControlInput{u(0), u.tail<3>()};
  }
};

struct RotorForces {
  Vec3 front = Vec3::Zero();  // f^1, b2/b3 components, N
  Vec3 rear = Vec3::Zero();   // f^2
};

// Total force on the body, resolved in the body frame:
//   thrust [0,0,-f] + C^T (C D C^T v_rel) + C^T [0,0,m g]
// Drag acts on the air-relative velocity v - wind.
inline Vec3 body_force(const VehicleState& x, const ControlInput& u,
                       const Vec3& wind, const VehicleParams& p) {
  const Vec3 v_rel = x.pose.v - wind;
  const Mat3& c = x.pose.C;
  Vec3 f = Vec3(0.0, 0.0, -u.thrust_n);
  f += p.drag_force * (c.transpose() * v_rel);
  f += c.transpose() * Vec3(0.0, 0.0, p.mass_kg * p.gravity);
  return f;
}

// Control torque plus parasitic rotor-drag torque -E C^T v_rel - F w.
inline Vec3 body_torque(const VehicleState& x, const ControlInput& u,
                        const Vec3& wind, const VehicleParams& p) {
  const Vec3 v_rel = x.pose.v - wind;
  return u.torque_nm - p.drag_torque_E * (x.pose.C.transpose() * v_rel) -
         p.drag_torque_F * x.omega;
}

struct StateDeriv {
  Mat3 C_dot;
  Vec3 v_dot;
  Vec3 r_dot;
  Vec3 omega_dot;
};

inline StateDeriv dynamics_deriv(const VehicleState& x, const ControlInput& u,
                                 const Vec3& wind, const VehicleParams& p) {
  StateDeriv d;
  d.C_dot = x.pose.C * cross(x.omega);
  d.v_dot = (1.0 / p.mass_kg) * (x.pose.C * body_force(x, u, wind, p));
  d.r_dot = x.pose.v;
  const Vec3 h = p.inertia * x.omega;
  d.omega_dot = p.inertia.inverse() *
                (body_torque(x, u, wind, p) - x.omega.cross(h));
  return d;
}

// Classical RK4 with zero-order-held input and wind. The DCM is projected
// back onto SO(3) after the step.
inline VehicleState step_rk4(const VehicleState& x, const ControlInput& u,
                             const Vec3& wind, const VehicleParams& p,
                             double dt) {
  auto advance = [](const VehicleState& s, const StateDeriv& d, double h) {
    VehicleState out;
    out.pose.C = s.pose.C + h * d.C_dot;
    out.pose.v = s.pose.v + h * d.v_dot;
    out.pose.r = s.pose.r + h * d.r_dot;
    out.omega = s.omega + h * d.omega_dot;
    return out;
  };
  const StateDeriv k1 = dynamics_deriv(x, u, wind, p);
  const StateDeriv k2 = dynamics_deriv(advance(x, k1, dt / 2.0), u, wind, p);
  const StateDeriv k3 = dynamics_deriv(advance(x, k2, dt / 2.0), u, wind, p);
  const StateDeriv k4 = dynamics_deriv(advance(x, k3, dt), u, wind, p);

  VehicleState out;
  out.pose.C = x.pose.C + (dt / 6.0) * (k1.C_dot + 2.0 * k2.C_dot +
                                        2.0 * k3.C_dot + k4.C_dot);
  out.pose.v = x.pose.v + (dt / 6.0) * (k1.v_dot + 2.0 * k2.v_dot +
                                        2.0 * k3.v_dot + k4.v_dot);
  out.pose.r = x.pose.r + (dt / 6.0) * (k1.r_dot + 2.0 * k2.r_dot +
                                        2.0 * k3.r_dot + k4.r_dot);
  out.omega = x.omega + (dt / 6.0) * (k1.omega_dot + 2.0 * k2.omega_dot +
                                      2.0 * k3.omega_dot + k4.omega_dot);
  out.pose.C = orthonormalize(out.pose.C);
  return out;
}

// Wind = steady mean + Dryden gusts. Gusts are per-axis first-order shaping
// filters in the MIL low-altitude form, discretized exactly as OU processes
// so the stationary variance is sigma_i^2 by construction.
struct WindState {
  Vec3 mean_wind = Vec3::Zero();  // m/s, NED
  Vec3 gust = Vec3::Zero();       // m/s, filter state
  double intensity_w0 = 0.0;      // m/s, wind speed at 20 ft
  double altitude_m = 20.0;
  double airspeed_mps = 5.0;

  Vec3 total() const { return mean_wind + gust; }
};

namespace detail {
struct DrydenCoeffs {
  Vec3 sigma;      // m/s per axis
  Vec3 bandwidth;  // V/L per axis, 1/s
};

inline DrydenCoeffs dryden_coeffs(const WindState& w) {
  constexpr double kFtPerM = 3.28084;
  const double h_ft = std::max(1.0, w.altitude_m * kFtPerM);
  const double base = 0.177 + 0.000823 * h_ft;
  const double l_w = h_ft;
  const double l_uv = h_ft / std::pow(base, 1.2);
  const double sigma_w = 0.1 * w.intensity_w0;
  const double sigma_uv = sigma_w / std::pow(base, 0.4);
  const double v_fts = w.airspeed_mps * kFtPerM;
  DrydenCoeffs c;
  c.sigma = Vec3(sigma_uv, sigma_uv, sigma_w);
  c.bandwidth = Vec3(v_fts / l_uv, v_fts / l_uv, v_fts / l_w);
  return c;
}
}  // namespace detail

inline WindState dryden_step(const WindState& w, double dt,
                             std::mt19937_64& rng) {
  const detail::DrydenCoeffs c = detail::dryden_coeffs(w);
  std::normal_distribution<double> n01(0.0, 1.0);
  WindState out = w;
  for (int i = 0; i < 3; ++i) {
    const double phi = std::exp(-c.bandwidth(i) * dt);
    const double sd = c.sigma(i) * std::sqrt(std::max(0.0, 1.0 - phi * phi));
    out.gust(i) = phi * w.gust(i) + sd * n01(rng);
  }
  return out;
}

// Maps u = [f; m] to front/rear rotor b2/b3 force components (b1 components
// are reserved for trimming and stay zero). Roll uses the same lever arm as
// pitch/yaw. The map is linear and invertible.
inline RotorForces mix(const ControlInput& u, const VehicleParams& p) {
  const double l = p.rotor_arm_m;
  const double fy_sum = u.torque_nm.x() / l;   // roll
  const double fy_dif = u.torque_nm.z() / l;   // yaw
  const double fz_dif = u.torque_nm.y() / l;   // pitch
  RotorForces out;
  out.front = Vec3(0.0, (fy_sum + fy_dif) / 2.0,
                   u.thrust_n / 2.0 + fz_dif / 2.0);
  out.rear = Vec3(0.0, (fy_sum - fy_dif) / 2.0,
                  u.thrust_n / 2.0 - fz_dif / 2.0);
  return out;
}

inline ControlInput unmix(const RotorForces& f, const VehicleParams& p) {
  const double l = p.rotor_arm_m;
  ControlInput u;
  u.thrust_n = f.front.z() + f.rear.z();
  u.torque_nm.x() = l * (f.front.y() + f.rear.y());
  u.torque_nm.y() = l * (f.front.z() - f.rear.z());
  u.torque_nm.z() = l * (f.front.y() - f.rear.y());
  return u;
}

}  // namespace tandem
