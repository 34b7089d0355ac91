#include <doctest.h>

#include <cmath>
#include <random>

#include "rgbdi/spline.hpp"

#include "oracles.hpp"

using namespace rgbdi;

namespace {

std::vector<PoseKnot> sample_poses(double rate_hz, double duration,
                                   const std::function<RigidTransform(double)>& f) {
  std::vector<PoseKnot> out;
  const int n = static_cast<int>(duration * rate_hz) + 1;
  for (int i = 0; i < n; ++i) {
    PoseKnot k;
    k.t = i / rate_hz;
    k.T = f(k.t);
    out.push_back(k);
  }
  return out;
}

}  // namespace

TEST_SUITE("spline") {

TEST_CASE("constant pose list gives a constant spline with zero derivatives") {
  RigidTransform T;
  T.translation = Vec3(0.4, -0.2, 1.0);
  T.rotation = exp_rotation(Vec3(0.3, 0.1, -0.2));
  const auto poses = sample_poses(30.0, 2.0, [&](double) { return T; });
  const TrajectorySpline sp = TrajectorySpline::fit(poses, 10);

  for (double t = sp.startTime(); t <= sp.endTime(); t += 0.17) {
    const RigidTransform P = sp.pose(t);
    CHECK((P.translation - T.translation).norm() < 1e-12);
    CHECK(P.rotation.angularDistance(T.rotation) < 1e-12);
    CHECK(sp.velocityWorld(t).norm() < 1e-12);
    CHECK(sp.accelerationWorld(t).norm() < 1e-12);
    CHECK(sp.angularVelocityBody(t).norm() < 1e-9);
  }
}

TEST_CASE("constant velocity line is reproduced exactly") {
  const Vec3 v(0.2, -0.1, 0.05);
  const auto poses = sample_poses(30.0, 2.0, [&](double t) {
    RigidTransform T;
    T.translation = Vec3(1, 2, 3) + v * t;
    return T;
  });
  const TrajectorySpline sp = TrajectorySpline::fit(poses, 10);
  for (double t = sp.startTime(); t <= sp.endTime(); t += 0.1) {
    CHECK((sp.pose(t).translation - (Vec3(1, 2, 3) + v * t)).norm() < 1e-10);
    CHECK((sp.velocityWorld(t) - v).norm() < 1e-9);
    CHECK(sp.accelerationWorld(t).norm() < 1e-8);
  }
}

TEST_CASE("circle yields the analytic angular velocity") {
  const double w = 0.5;
  const double radius = 1.5;
  const auto poses = sample_poses(30.0, 4.0, [&](double t) {
    RigidTransform T;
    T.translation = radius * Vec3(std::cos(w * t), std::sin(w * t), 0.0);
    T.rotation = exp_rotation(Vec3(0, 0, w * t));
    return T;
  });
  const TrajectorySpline sp = TrajectorySpline::fit(poses, 10);
  for (double t = sp.startTime() + 0.2; t <= sp.endTime() - 0.2; t += 0.13) {
    CHECK((sp.angularVelocityBody(t) - Vec3(0, 0, w)).norm() < 1e-4);
  }
}

TEST_CASE("knots are interpolated to 1e-6 on a smooth random trajectory") {
  std::mt19937_64 rng(31);
  const oracle::BodySignal sig = oracle::BodySignal::random(rng, 0.6, 0.4, 0.8);
  const auto poses = sample_poses(30.0, 3.0, [&](double t) {
    RigidTransform T;
    // integrate nothing; just synthesize smooth curves from the signal bank
    T.translation = Vec3(std::sin(1.1 * t), 0.5 * std::cos(0.9 * t),
                         0.3 * std::sin(0.7 * t + 0.4));
    T.rotation = exp_rotation(0.5 * sig.gyro(0.3 * t));
    return T;
  });
  const TrajectorySpline sp = TrajectorySpline::fit(poses, 10);
  for (std::size_t i = 0; i < poses.size(); i += 10) {
    const RigidTransform P = sp.pose(poses[i].t);
    CHECK((P.translation - poses[i].T.translation).norm() < 1e-6);
    CHECK(P.rotation.angularDistance(poses[i].T.rotation) < 1e-6);
  }
}

TEST_CASE("too few poses is an error") {
  std::vector<PoseKnot> poses(3);
  for (int i = 0; i < 3; ++i) poses[i].t = i * 0.1;
  CHECK_THROWS(TrajectorySpline::fit(poses, 1));
  CHECK_THROWS(TrajectorySpline::fit({}, 10));
}

TEST_CASE("derivatives are continuous across segment boundaries") {
  std::mt19937_64 rng(37);
  const auto poses = sample_poses(30.0, 3.0, [&](double t) {
    RigidTransform T;
    T.translation = Vec3(std::sin(t), std::cos(1.3 * t), 0.2 * t);
    T.rotation = exp_rotation(Vec3(0.2 * std::sin(t), 0.3 * std::cos(t), 0.1 * t));
    return T;
  });
  const TrajectorySpline sp = TrajectorySpline::fit(poses, 10);
  const double dt_knot = sp.knotSpacing();
  const double eps = 1e-7;
  for (int k = 1; k + 1 < 9; ++k) {
    const double tk = sp.startTime() + k * dt_knot;
    CHECK((sp.velocityWorld(tk - eps) - sp.velocityWorld(tk + eps)).norm() <
          1e-5);
    CHECK((sp.accelerationWorld(tk - eps) - sp.accelerationWorld(tk + eps))
              .norm() < 1e-4);
    CHECK((sp.angularVelocityBody(tk - eps) - sp.angularVelocityBody(tk + eps))
              .norm() < 1e-5);
  }
}

}  // TEST_SUITE
