#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pointpose/pose.hpp"
#include "pointpose/rng.hpp"
#include "pointpose/so3.hpp"

using namespace pointpose;

namespace {

constexpr double kPi = std::numbers::pi;

// Random unit axis times an angle drawn uniformly from [lo, hi].
AxisAngle random_axis_angle(std::mt19937_64& gen, double lo, double hi) {
  Vec3 axis;
  do {
    axis = Vec3(normal(gen), normal(gen), normal(gen));
  } while (axis.norm() < 1e-6);
  axis.normalize();
  return AxisAngle(axis * uniform_in(gen, lo, hi));
}

}  // namespace

TEST_CASE("skew matrix layout and properties") {
  CHECK(skew(Vec3::Zero()).isZero(0.0));

  Mat3 expected;
  // clang-format off
  expected <<  0, -3,  2,
               3,  0, -1,
              -2,  1,  0;
  // clang-format on
  CHECK((skew(Vec3(1, 2, 3)) - expected).norm() == doctest::Approx(0.0));

  const Vec3 r(0.3, -0.7, 1.1);
  CHECK((skew(r) + skew(r).transpose()).norm() == doctest::Approx(0.0));

  // skew(r) * v = r x v
  std::mt19937_64 gen(7);
  for (int i = 0; i < 20; ++i) {
    const Vec3 a(normal(gen), normal(gen), normal(gen));
    const Vec3 b(normal(gen), normal(gen), normal(gen));
    CHECK((skew(a) * b - a.cross(b)).norm() < 1e-14);
  }
}

TEST_CASE("exp_map basic values") {
  CHECK((exp_map(AxisAngle()) - Mat3::Identity()).norm() == doctest::Approx(0.0));

  Mat3 quarter_x;
  // clang-format off
  quarter_x << 1, 0,  0,
               0, 0, -1,
               0, 1,  0;
  // clang-format on
  CHECK((exp_map(AxisAngle(kPi / 2, 0, 0)) - quarter_x).norm() < 1e-12);

  const Mat3 half_x = exp_map(AxisAngle(kPi, 0, 0));
  CHECK((half_x - Vec3(1, -1, -1).asDiagonal().toDenseMatrix()).norm() < 1e-12);
}

TEST_CASE("exp_map always lands on SO(3)") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 200; ++i) {
    const Mat3 R = exp_map(random_axis_angle(gen, 0.0, 4.0 * kPi));
    CHECK(is_rotation_matrix(R, 1e-9));
  }
}

TEST_CASE("log_map basic values and rejection") {
  CHECK(log_map(Mat3::Identity()).r.norm() == doctest::Approx(0.0));

  // Half turn about x; the canonical axis sign makes the result exact.
  const AxisAngle half = log_map(Vec3(1, -1, -1).asDiagonal().toDenseMatrix());
  CHECK((half.r - Vec3(kPi, 0, 0)).norm() < 1e-12);

  CHECK_THROWS_AS(log_map(2.0 * Mat3::Identity()), std::invalid_argument);
  CHECK_THROWS_AS(log_map(Vec3(1, 1, -1).asDiagonal().toDenseMatrix()),
                  std::invalid_argument);
  Mat3 sheared = Mat3::Identity();
  sheared(0, 1) = 0.01;
  CHECK_THROWS_AS(log_map(sheared), std::invalid_argument);
}

TEST_CASE("exp/log round trips across the angle range") {
  std::mt19937_64 gen(2024);
  double worst_aa = 0.0;
  double worst_R = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const AxisAngle aa = random_axis_angle(gen, 1e-6, kPi - 1e-6);
    const Mat3 R = exp_map(aa);
    const AxisAngle back = log_map(R);
    worst_aa = std::max(worst_aa, (back.r - aa.r).norm());
    worst_R = std::max(worst_R, (exp_map(back) - R).norm());
  }
  CHECK(worst_aa < 1e-9);
  CHECK(worst_R < 1e-9);
}

TEST_CASE("round trips at the branch seams") {
  std::mt19937_64 gen(5);
  // exp_map series switch at 1e-4, log_map near-pi switch at 3.0.
  for (double theta : {0.5e-4, 0.99e-4, 1.01e-4, 2.0e-4, 2.999999, 3.000001,
                       3.1, kPi - 1e-9, kPi - 1e-12}) {
    for (int i = 0; i < 10; ++i) {
      const AxisAngle aa = random_axis_angle(gen, theta, theta);
      const AxisAngle back = log_map(exp_map(aa));
      // Within rounding of pi the axis sign is a convention, not recoverable.
      const double err = std::min((back.r - aa.r).norm(), (back.r + aa.r).norm());
      CHECK(err < 1e-9);
      CHECK((exp_map(back) - exp_map(aa)).norm() < 1e-9);
    }
  }
}

TEST_CASE("log_map at exactly pi uses the sign convention") {
  // Axis with a zero leading component; first nonzero must come out positive.
  const Vec3 axis = Vec3(0, -3, 4).normalized();
  const Mat3 R = exp_map(AxisAngle(axis * kPi));
  const AxisAngle back = log_map(R);
  CHECK(back.r[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(back.r[1] > 0.0);
  CHECK((exp_map(back) - R).norm() < 1e-9);
}

TEST_CASE("geodesic distance values") {
  std::mt19937_64 gen(3);
  const Mat3 R = exp_map(random_axis_angle(gen, 0.3, 2.0));
  // Clamped arccos caps the same-rotation distance near acos(1 - 1e-7).
  CHECK(geodesic_distance(R, R) < 5e-4);
  CHECK(geodesic_distance(Mat3::Identity(), exp_map(AxisAngle(kPi / 2, 0, 0))) ==
        doctest::Approx(kPi / 2).epsilon(1e-12));

  for (int i = 0; i < 50; ++i) {
    const Mat3 a = exp_map(random_axis_angle(gen, 0.0, kPi));
    const Mat3 b = exp_map(random_axis_angle(gen, 0.0, kPi));
    CHECK(geodesic_distance(a, b) == doctest::Approx(geodesic_distance(b, a)));
  }
}

TEST_CASE("geodesic distance equals relative log norm") {
  std::mt19937_64 gen(17);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = exp_map(random_axis_angle(gen, 0.0, kPi - 0.01));
    const AxisAngle rel = random_axis_angle(gen, 0.01, kPi - 0.01);
    const Mat3 b = exp_map(rel) * a;
    const double viaLog = log_map(b * a.transpose()).r.norm();
    CHECK(std::abs(geodesic_distance(b, a) - viaLog) < 1e-9);
    CHECK(std::abs(geodesic_distance(b, a) - rel.r.norm()) < 1e-6);
  }
}

TEST_CASE("quaternion to axis-angle") {
  const double s = std::sqrt(2.0) / 2.0;
  const AxisAngle aa = quat_to_axis_angle({s, s, 0, 0});
  CHECK((aa.r - Vec3(kPi / 2, 0, 0)).norm() < 1e-9);

  // q and -q, and any positive scaling, give the same rotation.
  std::mt19937_64 gen(23);
  for (int i = 0; i < 50; ++i) {
    Quaternion q{normal(gen), normal(gen), normal(gen), normal(gen)};
    const Quaternion nq{-q.w, -q.x, -q.y, -q.z};
    const Quaternion sq{3.7 * q.w, 3.7 * q.x, 3.7 * q.y, 3.7 * q.z};
    const Vec3 r = quat_to_axis_angle(q).r;
    CHECK((r - quat_to_axis_angle(nq).r).norm() < 1e-12);
    CHECK((r - quat_to_axis_angle(sq).r).norm() < 1e-12);
    CHECK(r.norm() <= kPi + 1e-12);
  }

  CHECK(quat_to_axis_angle({1, 0, 0, 0}).r.norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(quat_to_axis_angle({0, 0, 0, 0}), std::invalid_argument);

  // Agreement with the matrix route on generic rotations.
  for (int i = 0; i < 50; ++i) {
    Quaternion q{normal(gen), normal(gen), normal(gen), normal(gen)};
    const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
    if (n < 0.1) continue;
    const AxisAngle aa2 = quat_to_axis_angle(q);
    // Build the matrix from the normalized quaternion directly.
    const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
    Mat3 R;
    // clang-format off
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y);
    // clang-format on
    CHECK((exp_map(aa2) - R).norm() < 1e-6);
  }
}

TEST_CASE("canonicalize wraps into [0, pi]") {
  const Vec3 axis = Vec3(1, 2, -1).normalized();

  const AxisAngle big = canonicalize(AxisAngle(axis * (kPi + 0.5)));
  CHECK(big.angle() == doctest::Approx(kPi - 0.5));
  CHECK((big.r.normalized() + axis).norm() < 1e-12);

  const AxisAngle wrapped = canonicalize(AxisAngle(axis * (2.0 * kPi + 0.3)));
  CHECK(wrapped.angle() == doctest::Approx(0.3));
  CHECK((wrapped.r.normalized() - axis).norm() < 1e-9);

  CHECK(canonicalize(AxisAngle()).r.norm() == 0.0);

  // Same rotation before and after.
  std::mt19937_64 gen(31);
  for (int i = 0; i < 50; ++i) {
    const AxisAngle aa = random_axis_angle(gen, 0.0, 4.0 * kPi);
    const AxisAngle c = canonicalize(aa);
    CHECK(c.angle() <= kPi + 1e-12);
    CHECK((exp_map(c) - exp_map(aa)).norm() < 1e-9);
  }
}

TEST_CASE("random rotations are deterministic and uniform in angle") {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 10; ++i) {
    CHECK((random_rotation(a).r - random_rotation(b).r).norm() == 0.0);
  }

  // Uniform SO(3) has angle density (1 - cos t) / pi on [0, pi], whose mean
  // is pi/2 + 2/pi = 2.2074. MC std over 10k draws is about 0.0065.
  std::mt19937_64 gen(42);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const AxisAngle aa = random_rotation(gen);
    CHECK(aa.angle() <= kPi + 1e-12);
    sum += geodesic_distance(Mat3::Identity(), exp_map(aa));
  }
  CHECK(std::abs(sum / 10000.0 - (kPi / 2 + 2.0 / kPi)) < 0.05);
}

TEST_CASE("pose composition and inverse") {
  std::mt19937_64 gen(55);
  for (int i = 0; i < 20; ++i) {
    const Pose p{random_axis_angle(gen, 0.1, kPi - 0.1),
                 Vec3(normal(gen), normal(gen), normal(gen))};
    const Pose q{random_axis_angle(gen, 0.1, kPi - 0.1),
                 Vec3(normal(gen), normal(gen), normal(gen))};
    const Vec3 x(normal(gen), normal(gen), normal(gen));

    const RigidTransform Tp = to_transform(p);
    const RigidTransform Tq = to_transform(q);
    CHECK((to_transform(compose(p, q))(x) - Tp(Tq(x))).norm() < 1e-12);

    const Pose id = compose(p, inverse(p));
    CHECK(id.rotation.angle() < 1e-7);
    CHECK(id.translation.norm() < 1e-12);
  }
}
