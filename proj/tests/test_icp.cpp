#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "pointpose/icp.hpp"
#include "pointpose/kdtree.hpp"
#include "pointpose/rng.hpp"

using namespace pointpose;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Vec3> random_cloud(std::size_t n, double half_extent,
                               std::mt19937_64& gen) {
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    p = Vec3(uniform_in(gen, -half_extent, half_extent),
             uniform_in(gen, -half_extent, half_extent),
             uniform_in(gen, -half_extent, half_extent));
  }
  return pts;
}

AxisAngle random_axis_angle(std::mt19937_64& gen, double angle) {
  Vec3 axis;
  do {
    axis = Vec3(normal(gen), normal(gen), normal(gen));
  } while (axis.norm() < 1e-6);
  return AxisAngle(axis.normalized() * angle);
}

std::optional<KdTree3::Hit> brute_nearest(std::span<const Vec3> pts,
                                          const Vec3& q, double radius) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d2 = std::isinf(radius) ? std::numeric_limits<double>::infinity()
                                      : radius * radius;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = (pts[i] - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
      best_d2 = d2;
      best = i;
    }
  }
  if (best == std::numeric_limits<std::size_t>::max()) return std::nullopt;
  return KdTree3::Hit{best, std::sqrt(best_d2)};
}

}  // namespace

TEST_CASE("kd-tree agrees with brute force, ties and radii included") {
  std::mt19937_64 gen(404);
  auto pts = random_cloud(2000, 1.0, gen);
  // Exact duplicates to exercise the tie rule.
  for (int i = 0; i < 20; ++i) pts.push_back(pts[i]);
  const KdTree3 tree(pts);

  const double inf = std::numeric_limits<double>::infinity();
  for (int q = 0; q < 500; ++q) {
    const Vec3 query(uniform_in(gen, -1.2, 1.2), uniform_in(gen, -1.2, 1.2),
                     uniform_in(gen, -1.2, 1.2));
    for (double radius : {0.02, 0.1, inf}) {
      const auto a = tree.nearest(query, radius);
      const auto b = brute_nearest(pts, query, radius);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        CHECK(a->index == b->index);
        CHECK(a->distance == b->distance);
      }
    }
  }

  // Query sitting exactly on a duplicated point: lowest index wins.
  const auto dup = tree.nearest(pts[3]);
  REQUIRE(dup.has_value());
  CHECK(dup->index == 3);
  CHECK(dup->distance == 0.0);
}

TEST_CASE("kd-tree radius is inclusive and can reject everything") {
  const std::vector<Vec3> pts = {{1, 0, 0}, {0, 2, 0}};
  const KdTree3 tree(pts);
  CHECK_FALSE(tree.nearest(Vec3::Zero(), 0.5).has_value());
  const auto at_radius = tree.nearest(Vec3::Zero(), 1.0);
  REQUIRE(at_radius.has_value());
  CHECK(at_radius->index == 0);
  CHECK(KdTree3(std::vector<Vec3>{}).nearest(Vec3::Zero()) == std::nullopt);
}

TEST_CASE("best_rigid_transform recovers exact alignments") {
  std::mt19937_64 gen(11);
  const auto src = random_cloud(50, 0.5, gen);
  const Pose gt{random_axis_angle(gen, 1.3), Vec3(0.2, -0.1, 0.8)};
  const RigidTransform T = to_transform(gt);

  std::vector<Vec3> dst(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = T(src[i]);

  const Pose est = best_rigid_transform(src, dst);
  CHECK(geodesic_distance(exp_map(est.rotation), T.R) < 5e-4);
  CHECK((exp_map(est.rotation) - T.R).norm() < 1e-12);
  CHECK((est.translation - gt.translation).norm() < 1e-12);
}

TEST_CASE("best_rigid_transform stays proper under mirrored data") {
  std::mt19937_64 gen(13);
  const auto src = random_cloud(40, 0.5, gen);
  std::vector<Vec3> dst(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = Vec3(-src[i].x(), src[i].y(), src[i].z());
  }
  const Pose est = best_rigid_transform(src, dst);
  CHECK(exp_map(est.rotation).determinant() == doctest::Approx(1.0));
}

TEST_CASE("best_rigid_transform rejects degenerate inputs") {
  const std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(best_rigid_transform(two, two), std::invalid_argument);

  std::vector<Vec3> line(10), line_dst(10);
  for (int i = 0; i < 10; ++i) {
    line[i] = Vec3(0.1 * i, 0, 0);
    line_dst[i] = Vec3(0, 0.1 * i, 0);
  }
  CHECK_THROWS_AS(best_rigid_transform(line, line_dst), std::runtime_error);

  std::vector<Vec3> coincident(5, Vec3(1, 2, 3));
  CHECK_THROWS_AS(best_rigid_transform(coincident, coincident), std::runtime_error);
}

TEST_CASE("icp fixed point: aligned init stays put") {
  std::mt19937_64 gen(21);
  ObjectModel model = make_model(random_cloud(400, 0.05, gen), 0);
  const Pose gt{random_axis_angle(gen, 0.9), Vec3(0.0, 0.1, 0.9)};
  const RigidTransform T = to_transform(gt);

  PointCloud observed;
  for (const Vec3& p : model.points) observed.points.push_back(T(p));

  const IcpResult res = icp_refine(model, observed, gt);
  CHECK_FALSE(res.starved);
  REQUIRE(!res.residuals.empty());
  CHECK(res.residuals[0] < 1e-12);
  CHECK(res.iterations <= 2);
  CHECK(geodesic_distance(exp_map(res.pose.rotation), T.R) < 5e-4);
  CHECK((res.pose.translation - gt.translation).norm() < 1e-12);
}

TEST_CASE("icp recovers small perturbations without noise") {
  std::mt19937_64 gen(33);
  ObjectModel model = make_model(random_cloud(512, 0.05, gen), 0);
  IcpConfig cfg;
  cfg.initial_radius = 0.05;

  for (int trial = 0; trial < 10; ++trial) {
    const Pose gt{random_axis_angle(gen, uniform_in(gen, 0.2, 1.5)),
                  Vec3(uniform_in(gen, -0.1, 0.1), uniform_in(gen, -0.1, 0.1),
                       uniform_in(gen, 0.6, 1.2))};
    const RigidTransform T = to_transform(gt);
    PointCloud observed;
    for (const Vec3& p : model.points) observed.points.push_back(T(p));

    // Perturb the rotation in place and the translation additively; a
    // world-frame compose would swing the far-away object by centimeters.
    Pose init;
    init.rotation = log_map(
        exp_map(random_axis_angle(gen, uniform_in(gen, 0.0, 5.0 * kPi / 180.0))) * T.R);
    init.translation =
        gt.translation + Vec3(uniform_in(gen, -0.005, 0.005),
                              uniform_in(gen, -0.005, 0.005),
                              uniform_in(gen, -0.005, 0.005));
    const IcpResult res = icp_refine(model, observed, init, cfg);

    CHECK_FALSE(res.starved);
    CHECK(geodesic_distance(exp_map(res.pose.rotation), T.R) < 1e-3);
    CHECK((res.pose.translation - gt.translation).norm() < 1e-4);
    CHECK(res.iterations <= cfg.max_iterations);
  }
}

TEST_CASE("icp starves gracefully when nothing is in range") {
  std::mt19937_64 gen(55);
  ObjectModel model = make_model(random_cloud(100, 0.05, gen), 0);
  PointCloud observed;
  for (const Vec3& p : model.points) observed.points.push_back(p + Vec3(5, 5, 5));

  const Pose init{AxisAngle(0.1, 0, 0), Vec3(0.01, 0, 0)};
  const IcpResult res = icp_refine(model, observed, init);
  CHECK(res.starved);
  CHECK((res.pose.rotation.r - init.rotation.r).norm() == 0.0);
  CHECK((res.pose.translation - init.translation).norm() == 0.0);
  CHECK(res.residuals.empty());

  const IcpResult empty = icp_refine(model, PointCloud{}, init);
  CHECK(empty.starved);
}

TEST_CASE("icp respects the model point cap deterministically") {
  std::mt19937_64 gen(77);
  ObjectModel model = make_model(random_cloud(3000, 0.05, gen), 0);
  const Pose gt{random_axis_angle(gen, 0.4), Vec3(0, 0, 0.8)};
  PointCloud observed;
  const RigidTransform T = to_transform(gt);
  for (const Vec3& p : model.points) observed.points.push_back(T(p));

  IcpConfig cfg;
  cfg.initial_radius = 0.05;
  cfg.max_model_points = 256;
  Pose init;
  init.rotation = log_map(exp_map(AxisAngle(0.02, -0.01, 0.03)) * T.R);
  init.translation = gt.translation + Vec3(0.002, 0.001, -0.003);

  const IcpResult a = icp_refine(model, observed, init, cfg);
  const IcpResult b = icp_refine(model, observed, init, cfg);
  CHECK((a.pose.rotation.r - b.pose.rotation.r).norm() == 0.0);
  CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
  CHECK(geodesic_distance(exp_map(a.pose.rotation), T.R) < 1e-3);
}
