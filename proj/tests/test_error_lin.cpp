#include <catch2/catch_amalgamated.hpp>

#include "support/error_flow.hpp"
#include "support/oracles.hpp"
#include "tandem/error_lin.hpp"

using namespace tandem;
using Catch::Approx;

namespace {

VehicleParams design_model() {
  VehicleParams p;
  p.drag_torque_E.setZero();
  p.drag_torque_F.setZero();
  return p;
}

ReferencePoint hover_ref(const VehicleParams& p, const Mat3& attitude) {
  ReferencePoint ref;
  ref.pose.C = attitude;
  ref.u_r.thrust_n = p.mass_kg * p.gravity;
  return ref;
}

}  // namespace

TEST_CASE("error state at exact tracking is zero") {
  VehicleParams p;
  auto rng = test_support::make_rng(31);
  for (int i = 0; i < 20; ++i) {
    const ReferencePoint ref = test_support::random_reference(rng, p);
    VehicleState x;
    x.pose = ref.pose;
    x.omega = p.inertia.inverse() * ref.h_r;
    const ErrorState e = error_state(x, ref, p);
    REQUIRE(e.as_vector().norm() < 1e-12);
  }
}

TEST_CASE("error state pure translation") {
  VehicleParams p;
  ReferencePoint ref;  // identity pose, h_r = 0
  VehicleState x;
  x.pose.r = Vec3(1.0, 2.0, 3.0);
  const ErrorState e = error_state(x, ref, p);
  REQUIRE((e.xi_r - Vec3(1.0, 2.0, 3.0)).norm() == 0.0);
  REQUIRE(e.xi_phi.norm() == 0.0);
  REQUIRE(e.xi_v.norm() == 0.0);
  REQUIRE(e.dh.norm() == 0.0);
}

TEST_CASE("error state round trip") {
  VehicleParams p;
  auto rng = test_support::make_rng(8);
  for (int i = 0; i < 50; ++i) {
    const ReferencePoint ref = test_support::random_reference(rng, p);
    VehicleState x;
    x.pose.C = test_support::random_rotation(rng, 2.0);
    x.pose.v = test_support::random_vec3(rng, 8.0);
    x.pose.r = test_support::random_vec3(rng, 20.0);
    x.omega = test_support::random_vec3(rng, 0.5);
    const ErrorState e = error_state(x, ref, p);

    // exp of the pose part recomposes inverse(ref) * x.
    const ExtendedPose dx = exp_se23(Se23Tangent(e.xi_phi, e.xi_v, e.xi_r));
    const ExtendedPose direct = compose(inverse(ref.pose), x.pose);
    REQUIRE((dx.as_matrix() - direct.as_matrix()).norm() < 1e-9);

    // Full reconstruction inverts the error map.
    const VehicleState back = test_support::reconstruct_state(ref, e, p);
    REQUIRE((back.pose.C - x.pose.C).norm() < 1e-10);
    REQUIRE((back.pose.v - x.pose.v).norm() < 1e-10);
    REQUIRE((back.pose.r - x.pose.r).norm() < 1e-10);
    REQUIRE((back.omega - x.omega).norm() < 1e-10);

    // Zero error if and only if the state matches the reference.
    if (e.as_vector().norm() > 1e-8) {
      const bool same = (x.pose.C - ref.pose.C).norm() < 1e-10 &&
                        (x.pose.v - ref.pose.v).norm() < 1e-10 &&
                        (x.pose.r - ref.pose.r).norm() < 1e-10;
      REQUIRE_FALSE(same);
    }
  }
}

TEST_CASE("linearization at hover") {
  VehicleParams p = design_model();
  p.drag_force.setZero();
  const ReferencePoint ref = hover_ref(p, Mat3::Identity());
  const auto [a, b] = linearize_continuous(ref, p);

  const double f_r = ref.u_r.thrust_n;
  REQUIRE((a.block<3, 3>(0, 0)).norm() == 0.0);
  REQUIRE((a.block<3, 3>(0, 9) - p.inertia.inverse()).norm() < 1e-14);
  REQUIRE((a.block<3, 3>(3, 0) - cross(Vec3(0, 0, f_r)) / p.mass_kg).norm() < 1e-12);
  REQUIRE((a.block<3, 3>(3, 3)).norm() == 0.0);
  REQUIRE((a.block<3, 3>(6, 3) - Mat3::Identity()).norm() == 0.0);
  REQUIRE((a.block<3, 3>(6, 6)).norm() == 0.0);
  REQUIRE((a.block<3, 3>(9, 9)).norm() == 0.0);
  REQUIRE((b.block<3, 1>(3, 0) + Vec3::UnitZ() / p.mass_kg).norm() == 0.0);
  REQUIRE((b.block<3, 3>(9, 1) - Mat3::Identity()).norm() == 0.0);
  REQUIRE(b.topRows<3>().norm() == 0.0);
  REQUIRE(b.middleRows<3>(6).norm() == 0.0);
}

TEST_CASE("hover jacobians are attitude independent with zero drag") {
  VehicleParams p = design_model();
  p.drag_force.setZero();
  auto rng = test_support::make_rng(14);
  const auto [a0, b0] =
      linearize_continuous(hover_ref(p, Mat3::Identity()), p);
  for (int i = 0; i < 50; ++i) {
    const auto [a, b] =
        linearize_continuous(hover_ref(p, test_support::random_rotation(rng)), p);
    REQUIRE(a == a0);  // bit identical
    REQUIRE(b == b0);
  }
}

TEST_CASE("finite difference validation of the jacobians") {
  VehicleParams p = design_model();
  auto rng = test_support::make_rng(55);
  const double h = 0.002;
  for (int i = 0; i < 10; ++i) {
    test_support::ErrorFlowOracle oracle{p, test_support::random_reference(rng, p)};
    const auto [a_fd, b_fd] = test_support::fd_discrete_jacobians(oracle, h);
    const auto [a, b] = linearize_continuous(oracle.ref0, p);
    const LinearizedModel m = discretize(a, b, h);
    REQUIRE((a_fd - m.A_d).norm() / m.A_d.norm() < 1e-4);
    REQUIRE((b_fd - m.B_d).norm() / m.B_d.norm() < 1e-4);
  }
}

TEST_CASE("small error prediction fidelity") {
  VehicleParams p = design_model();
  auto rng = test_support::make_rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    test_support::ErrorFlowOracle oracle{p, test_support::random_reference(rng, p)};
    Vec12 dx0;
    for (int j = 0; j < 12; ++j) dx0(j) = u(rng);
    dx0 *= 0.01 / dx0.norm();

    const auto [a, b] = linearize_continuous(oracle.ref0, p);
    const LinearizedModel m = discretize(a, b, 0.02);
    const ErrorState nonlinear = oracle.propagate(ErrorState::from_vector(dx0),
                                                  Eigen::Vector4d::Zero(), 0.02);
    const Vec12 linear = m.A_d * dx0;
    REQUIRE((nonlinear.as_vector() - linear).norm() < 1e-5);
  }
}

TEST_CASE("zoh discretization") {
  {
    const auto [ad, bd] = zoh_discretize(Eigen::MatrixXd::Zero(3, 3),
                                         Eigen::MatrixXd::Zero(3, 2), 0.1);
    REQUIRE(ad.isIdentity(1e-14));
    REQUIRE(bd.norm() == 0.0);
  }
  {
    Eigen::MatrixXd b(2, 1);
    b << 1.0, -2.0;
    const auto [ad, bd] = zoh_discretize(Eigen::MatrixXd::Zero(2, 2), b, 0.3);
    REQUIRE(ad.isIdentity(1e-14));
    REQUIRE((bd - 0.3 * b).norm() < 1e-14);
  }
  {
    Eigen::MatrixXd a(1, 1), b(1, 1);
    a << -1.0;
    b << 0.0;
    const auto [ad, bd] = zoh_discretize(a, b, 0.7);
    REQUIRE(std::abs(ad(0, 0) - std::exp(-0.7)) < 1e-12);
  }
}

TEST_CASE("zoh semigroup property on the hover model") {
  VehicleParams p = design_model();
  const ReferencePoint ref = hover_ref(p, Mat3::Identity());
  const auto [a, b] = linearize_continuous(ref, p);
  const double dt = 0.04;
  const LinearizedModel m1 = discretize(a, b, dt);
  const LinearizedModel m2 = discretize(a, b, 2.0 * dt);
  REQUIRE((m2.A_d - m1.A_d * m1.A_d).norm() < 1e-10);
  REQUIRE((m2.B_d - (m1.A_d * m1.B_d + m1.B_d)).norm() < 1e-10);
}

TEST_CASE("horizon schedules") {
  HorizonSchedule case1{{{0.04, 24}, {0.16, 12}, {0.64, 12}}, 10};
  REQUIRE(case1.total_steps() == 48);
  REQUIRE(case1.span() == Approx(10.56));
  const auto steps = schedule_times(case1);
  REQUIRE(steps.size() == 48);
  REQUIRE(steps[0].t_offset == 0.0);
  REQUIRE(steps[0].dt == 0.04);
  REQUIRE(steps[24].t_offset == Approx(0.96));
  REQUIRE(steps[24].dt == 0.16);
  REQUIRE(steps[36].t_offset == Approx(0.96 + 1.92));
  REQUIRE(steps[36].dt == 0.64);
  REQUIRE(steps.back().t_offset + steps.back().dt == Approx(10.56));

  HorizonSchedule case2{{{0.02, 48}}, 10};
  REQUIRE(case2.total_steps() == 48);
  REQUIRE(case2.span() == Approx(0.96));

  HorizonSchedule single{{{1.0, 3}}, 1};
  const auto s = schedule_times(single);
  REQUIRE(s.size() == 3);
  REQUIRE(s[0].t_offset == 0.0);
  REQUIRE(s[1].t_offset == 1.0);
  REQUIRE(s[2].t_offset == 2.0);
  REQUIRE(s[2].dt == 1.0);
}
