// Invariant tracking error, the angular-momentum-augmented 12-dim error
// state, continuous linearization about a reference, ZOH discretization,
// and the non-uniform prediction-horizon schedule.
#pragma once

#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "tandem/vehicle.hpp"

namespace tandem {

using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat12x4 = Eigen::Matrix<double, 12, 4>;

// delta_x = [xi_phi; xi_v; xi_r; dh]
struct ErrorState {
  Vec3 xi_phi = Vec3::Zero();  // rad
  Vec3 xi_v = Vec3::Zero();    // m/s
  Vec3 xi_r = Vec3::Zero();    // m
  Vec3 dh = Vec3::Zero();      // N m s

  Vec12 as_vector() const {
    Vec12 v;
    v << xi_phi, xi_v, xi_r, dh;
    return v;
  }
  static ErrorState from_vector(const Vec12& v) {
    return ErrorState{v.head<3>(), v.segment<3>(3), v.segment<3>(6),
                      v.tail<3>()};
  }
};

struct ReferencePoint {
  ExtendedPose pose;            // C_ar, v_r, r_r
  Vec3 omega_r = Vec3::Zero();  // rad/s, resolved in the reference frame
  Vec3 h_r = Vec3::Zero();      // N m s, J * omega_r
  ControlInput u_r;             // feedforward f^r, m^r (torque in F_r)
  double t = 0.0;               // s
};

struct LinearizedModel {
  Mat12 A_d = Mat12::Identity();
  Mat12x4 B_d = Mat12x4::Zero();
  double dt = 0.0;
};

// Left-invariant error dX = X_r^{-1} X in log coordinates, augmented with
// the angular-momentum error dh = dC (J w) - h_r.
inline ErrorState error_state(const VehicleState& x, const ReferencePoint& ref,
                              const VehicleParams& p) {
  const ExtendedPose dx = compose(inverse(ref.pose), x.pose);
  const Se23Tangent xi = log_se23(dx);
  ErrorState e;
  e.xi_phi = xi.phi();
  e.xi_v = xi.v();
  e.xi_r = xi.r();
  e.dh = dx.C * (p.inertia * x.omega) - ref.h_r;
  return e;
}

// Continuous-time Jacobians of the invariant error dynamics about the
// reference. Only reference quantities appear; with D = 0 everything except
// the thrust term drops its attitude dependence.
//
// The attitude row keeps the J^{-1}(J w_r)^x - w_r^x coupling, which is the
// exact first-order term for an anisotropic inertia. It vanishes at hover.
inline std::pair<Mat12, Mat12x4> linearize_continuous(
    const ReferencePoint& ref, const VehicleParams& p) {
  const Mat3 j_inv = p.inertia.inverse();
  const Mat3 wx = cross(ref.omega_r);
  const Vec3 w_r = ref.pose.C.transpose() * ref.pose.v;  // C_ar^T v_r
  const Mat3& d = p.drag_force;
  const double m_inv = 1.0 / p.mass_kg;

  Mat12 a = Mat12::Zero();
  a.block<3, 3>(0, 0) = j_inv * cross(p.inertia * ref.omega_r) - wx;
  a.block<3, 3>(0, 9) = j_inv;
  a.block<3, 3>(3, 0) =
      m_inv * (-cross(d * w_r) + d * cross(w_r) +
               cross(Vec3(0.0, 0.0, ref.u_r.thrust_n)));
  a.block<3, 3>(3, 3) = -wx + m_inv * d;
  a.block<3, 3>(6, 3) = Mat3::Identity();
  a.block<3, 3>(6, 6) = -wx;
  a.block<3, 3>(9, 9) = -wx;

  Mat12x4 b = Mat12x4::Zero();
  b.block<3, 1>(3, 0) = -m_inv * Vec3::UnitZ();
  b.block<3, 3>(9, 1) = Mat3::Identity();
  return {a, b};
}

// Exact zero-order-hold discretization via the Van Loan augmented-matrix
// exponential.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> zoh_discretize(
    const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double dt) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a * dt;
  aug.topRightCorner(n, m) = b * dt;
  const Eigen::MatrixXd e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

inline LinearizedModel discretize(const Mat12& a, const Mat12x4& b,
                                  double dt) {
  auto [ad, bd] = zoh_discretize(a, b, dt);
  LinearizedModel m;
  m.A_d = ad;
  m.B_d = bd;
  m.dt = dt;
  return m;
}

// Non-uniform horizon: a list of (dt, count) segments, fine steps first.
struct HorizonSchedule {
  struct Segment {
    double dt = 0.0;
    int count = 0;
  };
  std::vector<Segment> segments;
  int control_horizon = 0;  // N_u <= N

  int total_steps() const {
    int n = 0;
    for (const auto& s : segments) n += s.count;
    return n;
  }
  double span() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.dt * s.count;
    return t;
  }
  double base_dt() const { return segments.empty() ? 0.0 : segments[0].dt; }
};

struct HorizonStep {
  double t_offset = 0.0;  // start time of the step relative to now
  double dt = 0.0;
};

inline std::vector<HorizonStep> schedule_times(const HorizonSchedule& s) {
  std::vector<HorizonStep> out;
  out.reserve(s.total_steps());
  double t = 0.0;
  for (const auto& seg : s.segments) {
    for (int i = 0; i < seg.count; ++i) {
      out.push_back({t, seg.dt});
      t += seg.dt;
    }
  }
  return out;
}

}  // namespace tandem
