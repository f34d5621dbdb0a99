#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "tandem/lie.hpp"

using namespace tandem;
using Catch::Approx;

TEST_CASE("cross operator") {
  REQUIRE(cross(Vec3::Zero()).isZero(0.0));

  const Mat3 e1x = cross(Vec3::UnitX());
  REQUIRE(e1x(1, 2) == -1.0);
  REQUIRE(e1x(2, 1) == 1.0);
  REQUIRE((e1x * Vec3::UnitY() - Vec3::UnitZ()).norm() == 0.0);

  const Vec3 u(1.0, 2.0, 3.0);
  const Vec3 w(4.0, 5.0, 6.0);
  REQUIRE((cross(u) * w - Vec3(-3.0, 6.0, -3.0)).norm() == 0.0);

  auto rng = test_support::make_rng(42);
  for (int i = 0; i < 20; ++i) {
    const Vec3 a = test_support::random_vec3(rng, 5.0);
    REQUIRE((cross(a) + cross(a).transpose()).norm() == 0.0);
    const Vec3 b = test_support::random_vec3(rng, 5.0);
    REQUIRE((cross(a) * b - a.cross(b)).norm() < 1e-14);
  }
}

TEST_CASE("exp_so3 basics") {
  REQUIRE(exp_so3(Vec3::Zero()).isIdentity(0.0));

  // 90 degrees about axis 1 maps e2 to e3.
  const Mat3 c = exp_so3(Vec3(M_PI / 2.0, 0.0, 0.0));
  REQUIRE((c * Vec3::UnitY() - Vec3::UnitZ()).norm() < 1e-12);

  auto rng = test_support::make_rng(7);
  for (int i = 0; i < 100; ++i) {
    const Vec3 phi = test_support::random_rotation_log(rng, 3.0);
    REQUIRE((exp_so3(phi) * exp_so3(-phi) - Mat3::Identity()).norm() < 1e-12);
    REQUIRE(is_dcm(exp_so3(phi), 1e-12));
  }
}

TEST_CASE("log_so3 round trips and branches") {
  REQUIRE(log_so3(Mat3::Identity()).norm() == 0.0);

  const Vec3 phi(0.1, -0.2, 0.3);
  REQUIRE((log_so3(exp_so3(phi)) - phi).norm() < 1e-10);

  // Series branch on a first-order DCM.
  const Vec3 tiny = 1e-8 * Vec3::UnitX();
  const Mat3 c_tiny = Mat3::Identity() + cross(tiny);
  REQUIRE((log_so3(c_tiny) - tiny).norm() < 1e-12);

  // Angle at pi is rejected.
  Mat3 half_turn = Vec3(1.0, -1.0, -1.0).asDiagonal();
  REQUIRE_THROWS_AS(log_so3(half_turn), AngleNearPi);

  auto rng = test_support::make_rng(21);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = test_support::random_rotation_log(rng, M_PI - 1e-3);
    REQUIRE((log_so3(exp_so3(p)) - p).norm() < 1e-9);
    const Mat3 c = test_support::random_rotation(rng, 2.5);
    REQUIRE((exp_so3(log_so3(c)) - c).norm() < 1e-9);
  }
}

TEST_CASE("left jacobian") {
  REQUIRE(left_jacobian_so3(Vec3::Zero()).isIdentity(0.0));

  // Finite-difference check of exp(phi + eps d) against the left Jacobian.
  auto rng = test_support::make_rng(3);
  const double eps = 1e-6;
  for (int i = 0; i < 20; ++i) {
    const Vec3 phi = test_support::random_rotation_log(rng, 2.0);
    const Vec3 d = test_support::random_vec3(rng, 1.0).normalized();
    const Mat3 fd = (exp_so3(phi + eps * d) - exp_so3(phi)) / eps;
    const Mat3 analytic = cross(left_jacobian_so3(phi) * d) * exp_so3(phi);
    REQUIRE((fd - analytic).norm() < 1e-5);
  }

  // Closed form at phi = [pi/2, 0, 0].
  const Vec3 phi(M_PI / 2.0, 0.0, 0.0);
  const double a = phi.norm();
  const Mat3 px = cross(phi);
  const Mat3 expected = Mat3::Identity() +
                        (1.0 - std::cos(a)) / (a * a) * px +
                        (a - std::sin(a)) / (a * a * a) * px * px;
  REQUIRE((left_jacobian_so3(phi) - expected).norm() < 1e-14);
  REQUIRE(expected(1, 1) == Approx(std::sin(a) / a));
  REQUIRE(expected(2, 2) == Approx(std::sin(a) / a));

  // Invertible below the 2 pi singularity, and J(phi) Jinv(phi) = 1.
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = test_support::random_rotation_log(rng, 2.0 * M_PI - 0.1);
    const Mat3 j = left_jacobian_so3(p);
    REQUIRE(std::abs(j.determinant()) > 1e-6);
    REQUIRE((left_jacobian_inv_so3(p) * j - Mat3::Identity()).norm() < 1e-9);
  }
}

TEST_CASE("se23 exponential and logarithm") {
  const ExtendedPose id = exp_se23(Se23Tangent{});
  REQUIRE(id.C.isIdentity(0.0));
  REQUIRE(id.v.norm() == 0.0);
  REQUIRE(id.r.norm() == 0.0);

  // Zero rotation: J(0) = 1 carries v and r through unchanged.
  const Se23Tangent flat(Vec3::Zero(), Vec3(1.0, 2.0, 3.0), Vec3(-1.0, 0.5, 2.0));
  const ExtendedPose x = exp_se23(flat);
  REQUIRE(x.C.isIdentity(0.0));
  REQUIRE((x.v - Vec3(1.0, 2.0, 3.0)).norm() == 0.0);
  REQUIRE((x.r - Vec3(-1.0, 0.5, 2.0)).norm() == 0.0);

  ExtendedPose translation;
  translation.r = Vec3(4.0, 5.0, 6.0);
  const Se23Tangent log_t = log_se23(translation);
  REQUIRE(log_t.phi().norm() == 0.0);
  REQUIRE(log_t.v().norm() == 0.0);
  REQUIRE((log_t.r() - Vec3(4.0, 5.0, 6.0)).norm() == 0.0);

  REQUIRE(log_se23(ExtendedPose{}).xi.norm() == 0.0);

  ExtendedPose near_pi;
  near_pi.C = Vec3(1.0, -1.0, -1.0).asDiagonal();
  REQUIRE_THROWS_AS(log_se23(near_pi), AngleNearPi);

  auto rng = test_support::make_rng(11);
  for (int i = 0; i < 200; ++i) {
    const Se23Tangent xi(test_support::random_rotation_log(rng, 2.0),
                         test_support::random_vec3(rng, 10.0),
                         test_support::random_vec3(rng, 10.0));
    const Se23Tangent back = log_se23(exp_se23(xi));
    REQUIRE((back.xi - xi.xi).norm() < 1e-9);
  }
}

TEST_CASE("se23 exp matches the 5x5 matrix exponential") {
  auto rng = test_support::make_rng(17);
  for (int i = 0; i < 100; ++i) {
    const Se23Tangent xi(test_support::random_rotation_log(rng, 2.5),
                         test_support::random_vec3(rng, 5.0),
                         test_support::random_vec3(rng, 5.0));
    const Mat5 oracle = test_support::taylor_expm(Mat5(xi.hat()));
    REQUIRE((exp_se23(xi).as_matrix() - oracle).norm() < 1e-9);
  }
}

TEST_CASE("group composition and inverse") {
  auto rng = test_support::make_rng(5);
  for (int i = 0; i < 100; ++i) {
    ExtendedPose x;
    x.C = test_support::random_rotation(rng);
    x.v = test_support::random_vec3(rng, 10.0);
    x.r = test_support::random_vec3(rng, 10.0);
    const ExtendedPose e = compose(x, inverse(x));
    REQUIRE((e.C - Mat3::Identity()).norm() < 1e-12);
    REQUIRE(e.v.norm() < 1e-12);
    REQUIRE(e.r.norm() < 1e-12);
  }

  const ExtendedPose id_inv = inverse(ExtendedPose{});
  REQUIRE(id_inv.C.isIdentity(0.0));
  REQUIRE(id_inv.v.norm() == 0.0);
  REQUIRE(id_inv.r.norm() == 0.0);

  // Associativity, checked against the direct 5x5 matrix product.
  for (int i = 0; i < 50; ++i) {
    ExtendedPose a, b, c;
    for (ExtendedPose* x : {&a, &b, &c}) {
      x->C = test_support::random_rotation(rng);
      x->v = test_support::random_vec3(rng, 5.0);
      x->r = test_support::random_vec3(rng, 5.0);
    }
    const ExtendedPose left = compose(compose(a, b), c);
    const ExtendedPose right = compose(a, compose(b, c));
    REQUIRE((left.as_matrix() - right.as_matrix()).norm() < 1e-12);
    const Mat5 direct = a.as_matrix() * b.as_matrix() * c.as_matrix();
    REQUIRE((left.as_matrix() - direct).norm() < 1e-12);
  }
}

TEST_CASE("dcm validation and projection") {
  auto rng = test_support::make_rng(33);
  const Mat3 c = test_support::random_rotation(rng);
  REQUIRE(is_dcm(c));
  Mat3 drifted = c;
  drifted(0, 0) += 1e-4;
  REQUIRE_FALSE(is_dcm(drifted));
  REQUIRE(is_dcm(orthonormalize(drifted)));
  // Projection of a valid rotation is (numerically) itself.
  REQUIRE((orthonormalize(c) - c).norm() < 1e-12);
}
