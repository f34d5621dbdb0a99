// Matrix Lie group primitives for SO(3) and SE_2(3): cross/vee maps,
// exponential/logarithm, left Jacobian, composition and inverse.
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace tandem {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

// Rotation logarithm requested at an angle too close to pi. Downstream error
// states are small by construction, so hitting this signals a logic bug.
struct AngleNearPi : std::runtime_error {
  AngleNearPi() : std::runtime_error("rotation angle too close to pi for log") {}
};

// Series branches switch below this angle; truncation error < 1e-16 there.
inline constexpr double kSmallAngle = 1e-4;

inline Mat3 cross(const Vec3& u) {
  Mat3 m;
  m <<    0.0, -u.z(),  u.y(),
        u.z(),    0.0, -u.x(),
       -u.y(),  u.x(),    0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

// Attitude DCM C_ab: maps body-resolved vectors to inertial, v_a = C_ab v_b.
inline bool is_dcm(const Mat3& m, double tol = 1e-9) {
  return (m.transpose() * m - Mat3::Identity()).norm() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

// Polar projection onto SO(3); used at plant-integration boundaries only.
inline Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

inline Mat3 exp_so3(const Vec3& phi) {
  const double a = phi.norm();
  double c1, c2;  // sin(a)/a, (1-cos(a))/a^2
  if (a < kSmallAngle) {
    const double a2 = a * a;
    c1 = 1.0 - a2 / 6.0;
    c2 = 0.5 - a2 / 24.0;
  } else {
    c1 = std::sin(a) / a;
    c2 = (1.0 - std::cos(a)) / (a * a);
  }
  const Mat3 px = cross(phi);
  return Mat3::Identity() + c1 * px + c2 * px * px;
}

inline Vec3 log_so3(const Mat3& c) {
  const double tr = c.trace();
  if (tr <= -1.0 + 1e-6) {
    throw AngleNearPi();
  }
  const Vec3 w = vee(c - c.transpose()) / 2.0;  // sin(a) * axis
  const double cos_a = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
  const double a = std::acos(cos_a);
  if (a < kSmallAngle) {
    // For tiny angles the trace is noisy; ||w|| ~ a is the better estimate.
    const double a2 = w.squaredNorm();
    return w * (1.0 + a2 / 6.0);
  }
  return w * (a / std::sin(a));
}

// SO(3) left Jacobian: exp((phi + J(phi) d)^x) ~ (1 + (J(phi) d)^x) exp(phi^x).
inline Mat3 left_jacobian_so3(const Vec3& phi) {
  const double a = phi.norm();
  double c1, c2;  // (1-cos(a))/a^2, (a-sin(a))/a^3
  if (a < kSmallAngle) {
    const double a2 = a * a;
    c1 = 0.5 - a2 / 24.0;
    c2 = 1.0 / 6.0 - a2 / 120.0;
  } else {
    const double a2 = a * a;
    c1 = (1.0 - std::cos(a)) / a2;
    c2 = (a - std::sin(a)) / (a2 * a);
  }
  const Mat3 px = cross(phi);
  return Mat3::Identity() + c1 * px + c2 * px * px;
}

inline Mat3 left_jacobian_inv_so3(const Vec3& phi) {
  const double a = phi.norm();
  double c;  // 1/a^2 - (1+cos(a))/(2 a sin(a))
  if (a < kSmallAngle) {
    c = 1.0 / 12.0 + a * a / 720.0;
  } else {
    c = 1.0 / (a * a) - (1.0 + std::cos(a)) / (2.0 * a * std::sin(a));
  }
  const Mat3 px = cross(phi);
  return Mat3::Identity() - 0.5 * px + c * px * px;
}

// SE_2(3) element bundling attitude, velocity, and position.
struct ExtendedPose {
  Mat3 C = Mat3::Identity();  // C_ab
  Vec3 v = Vec3::Zero();      // m/s, resolved in the inertial frame
  Vec3 r = Vec3::Zero();      // m, resolved in the inertial frame

  Mat5 as_matrix() const {
    Mat5 m = Mat5::Identity();
    m.topLeftCorner<3, 3>() = C;
    m.block<3, 1>(0, 3) = v;
    m.block<3, 1>(0, 4) = r;
    return m;
  }
};

// Tangent ordering: [xi_phi; xi_v; xi_r].
struct Se23Tangent {
  Vec9 xi = Vec9::Zero();

  Se23Tangent() = default;
  explicit Se23Tangent(const Vec9& x) : xi(x) {}
  Se23Tangent(const Vec3& phi, const Vec3& v, const Vec3& r) {
    xi << phi, v, r;
  }

  Vec3 phi() const { return xi.head<3>(); }
  Vec3 v() const { return xi.segment<3>(3); }
  Vec3 r() const { return xi.tail<3>(); }

  Mat5 hat() const {
    Mat5 m = Mat5::Zero();
    m.topLeftCorner<3, 3>() = cross(phi());
    m.block<3, 1>(0, 3) = v();
    m.block<3, 1>(0, 4) = r();
    return m;
  }
};

inline ExtendedPose exp_se23(const Se23Tangent& xi) {
  ExtendedPose x;
  const Mat3 j = left_jacobian_so3(xi.phi());
  x.C = exp_so3(xi.phi());
  x.v = j * xi.v();
  x.r = j * xi.r();
  return x;
}

inline Se23Tangent log_se23(const ExtendedPose& x) {
  const Vec3 phi = log_so3(x.C);
  const Mat3 jinv = left_jacobian_inv_so3(phi);
  return Se23Tangent(phi, jinv * x.v, jinv * x.r);
}

inline ExtendedPose compose(const ExtendedPose& x1, const ExtendedPose& x2) {
  ExtendedPose out;
  out.C = x1.C * x2.C;
  out.v = x1.C * x2.v + x1.v;
  out.r = x1.C * x2.r + x1.r;
  return out;
}

inline ExtendedPose inverse(const ExtendedPose& x) {
  ExtendedPose out;
  out.C = x.C.transpose();
  out.v = -(out.C * x.v);
  out.r = -(out.C * x.r);
  return out;
}

}  // namespace tandem
