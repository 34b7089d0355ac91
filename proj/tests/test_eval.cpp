#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "rgbdi/eval.hpp"
#include "rgbdi/manifold.hpp"

using namespace rgbdi;

namespace {

// closed-form quaternion absolute orientation, used as an independent
// alignment oracle
Alignment horn_align(const std::vector<Vec3>& from,
                     const std::vector<Vec3>& to) {
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (size_t i = 0; i < from.size(); ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= from.size();
  ct /= to.size();
  Mat3 M = Mat3::Zero();
  for (size_t i = 0; i < from.size(); ++i) {
    M += (from[i] - cf) * (to[i] - ct).transpose();
  }
  Eigen::Matrix4d N;
  const double tr = M.trace();
  const Vec3 delta(M(1, 2) - M(2, 1), M(2, 0) - M(0, 2), M(0, 1) - M(1, 0));
  N(0, 0) = tr;
  N.block<3, 1>(1, 0) = delta;
  N.block<1, 3>(0, 1) = delta.transpose();
  N.block<3, 3>(1, 1) = M + M.transpose() - tr * Mat3::Identity();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(N);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  Alignment a;
  a.R = Quat(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
  a.t = ct - a.R * cf;
  return a;
}

double horn_rmse(const Trajectory& est, const Trajectory& truth) {
  std::vector<Vec3> from, to;
  for (const auto& [i, j] : associate_poses(est, truth)) {
    from.push_back(est[i].T.translation);
    to.push_back(truth[j].T.translation);
  }
  const Alignment a = horn_align(from, to);
  double sumsq = 0.0;
  for (size_t k = 0; k < from.size(); ++k) {
    sumsq += (a.apply(from[k]) - to[k]).squaredNorm();
  }
  return std::sqrt(sumsq / from.size());
}

Trajectory smooth_trajectory(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Vec3 amp(nd(rng), nd(rng), nd(rng));
  const Vec3 axis = Vec3(nd(rng), nd(rng), nd(rng)).normalized();
  Trajectory traj;
  for (int k = 0; k < n; ++k) {
    const double t = k / 30.0;
    PoseKnot p;
    p.t = t;
    p.T.translation = Vec3(std::sin(0.5 * t), 0.3 * t, std::cos(0.7 * t))
                          .cwiseProduct(amp);
    p.T.rotation = exp_rotation(axis * 0.2 * t);
    traj.push_back(p);
  }
  return traj;
}

Trajectory perturb(const Trajectory& truth, double sigma, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  Trajectory est = truth;
  for (PoseKnot& p : est) {
    p.T.translation += Vec3(nd(rng), nd(rng), nd(rng));
  }
  return est;
}

Trajectory transform_all(const Trajectory& traj, const RigidTransform& T) {
  Trajectory out = traj;
  for (PoseKnot& p : out) p.T = T * p.T;
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("ate of a trajectory against itself is zero") {
  Trajectory truth = smooth_trajectory(200, 1);
  AteResult r = ate_rmse(truth, truth);
  CHECK(r.rmse < 1e-12);
  CHECK(r.pairs == truth.size());
}

TEST_CASE("ate removes any rigid offset of the whole estimate") {
  Trajectory truth = smooth_trajectory(150, 2);
  Trajectory noisy = perturb(truth, 0.01, 3);
  const double base = ate_rmse(noisy, truth).rmse;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform T;
    T.rotation = exp_rotation(Vec3(nd(rng), nd(rng), nd(rng)));
    T.translation = 5.0 * Vec3(nd(rng), nd(rng), nd(rng));
    // exact copy of the truth aligns to zero
    CHECK(ate_rmse(transform_all(truth, T), truth).rmse < 1e-9);
    // and the metric itself is gauge invariant
    CHECK(std::abs(ate_rmse(transform_all(noisy, T), truth).rmse - base) <
          1e-9);
  }
}

TEST_CASE("ate matches an independent closed-form alignment oracle") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    Trajectory truth = smooth_trajectory(120, 100 + seed);
    Trajectory est = perturb(truth, 0.01, 200 + seed);
    const double mine = ate_rmse(est, truth).rmse;
    const double oracle = horn_rmse(est, truth);
    CHECK(std::abs(mine - oracle) < 1e-6);
    CHECK(mine > 0.005);  // perturbation actually registered
  }
}

TEST_CASE("association applies the 20 ms nearest-timestamp gate") {
  Trajectory truth = smooth_trajectory(100, 5);
  Trajectory est = truth;
  for (PoseKnot& p : est) p.t += 0.005;
  CHECK(associate_poses(est, truth).size() == est.size());

  // sparse truth: 1 Hz, estimate offset beyond the gate
  Trajectory sparse;
  for (int k = 0; k < 10; ++k) {
    PoseKnot p;
    p.t = k * 1.0;
    sparse.push_back(p);
  }
  Trajectory late = sparse;
  for (PoseKnot& p : late) p.t += 0.05;
  CHECK(associate_poses(late, sparse).empty());
  CHECK_THROWS_AS((void)ate_rmse(late, sparse), std::runtime_error);

  // exactly two overlapping pairs is still insufficient
  Trajectory two = sparse;
  for (size_t i = 2; i < two.size(); ++i) two[i].t += 0.05;
  CHECK(associate_poses(two, sparse).size() == 2);
  CHECK_THROWS_AS((void)ate_rmse(two, sparse), std::runtime_error);
}

TEST_CASE("dropping a twentieth of the poses barely moves the metric") {
  Trajectory truth = smooth_trajectory(900, 6);
  Trajectory est = perturb(truth, 0.01, 7);
  const double full = ate_rmse(est, truth).rmse;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Trajectory dropped;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const PoseKnot& p : est) {
      if (u(rng) > 0.05) dropped.push_back(p);
    }
    const double d = ate_rmse(dropped, truth).rmse;
    CHECK(std::abs(d - full) <= 3.0 * (0.05 / std::sqrt(900.0)) * full);
  }
}

TEST_CASE("reconstruction error vanishes exactly on scene surfaces") {
  Scenario sc = make_scenario("room");
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Vec3> pts;
  // points on the walls
  for (int i = 0; i < 50; ++i) {
    pts.emplace_back(3.0, u(rng) * 1.2, 1.5 + u(rng) * 0.7);
    pts.emplace_back(u(rng), -2.5, 1.5 + u(rng) * 0.7);
    pts.emplace_back(u(rng), 1.2 * u(rng), 0.0);
  }
  // points on the sphere
  for (int i = 0; i < 50; ++i) {
    const Vec3 dir = Vec3(u(rng), u(rng), u(rng)).normalized();
    pts.push_back(Vec3(1.6, 1.2, 0.45) + 0.45 * dir);
  }
  CHECK(reconstruction_error(pts, sc.scene) < 1e-12);
}

TEST_CASE("uniform 5 mm normal offset reads back as 0.005") {
  SceneModel scene;
  Primitive pl;
  pl.kind = Primitive::kPlane;
  pl.n = Vec3::UnitZ();
  pl.c = 0.0;
  scene.primitives().push_back(pl);
  Primitive sp;
  sp.kind = Primitive::kSphere;
  sp.center = Vec3(0, 0, 50);  // far away so the plane never wins
  sp.radius = 1.0;
  scene.primitives().push_back(sp);

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) {
    pts.emplace_back(u(rng), u(rng), 0.005);
    const Vec3 dir = Vec3(u(rng), u(rng), u(rng)).normalized();
    pts.push_back(sp.center + (sp.radius + 0.005) * dir);
  }
  CHECK(reconstruction_error(pts, scene) == doctest::Approx(0.005).epsilon(1e-9));
}

TEST_CASE("reconstruction error equals a brute-force primitive minimum") {
  Scenario sc = make_scenario("room");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-2.9, 2.9), uy(-2.4, 2.4),
      uz(0.05, 2.9);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(ux(rng), uy(rng), uz(rng));

  auto brute = [&](const Vec3& p) {
    double best = 1e18;
    for (const Primitive& pr : sc.scene.primitives()) {
      double d = 1e18;
      if (pr.kind == Primitive::kPlane) {
        d = std::abs(pr.n.normalized().dot(p) - pr.c / pr.n.norm());
      } else if (pr.kind == Primitive::kSphere) {
        d = std::abs((p - pr.center).norm() - pr.radius);
      } else {
        const Vec3 c = 0.5 * (pr.box_min + pr.box_max);
        const Vec3 h = 0.5 * (pr.box_max - pr.box_min);
        const Vec3 q = (p - c).cwiseAbs() - h;
        if ((q.array() <= 0.0).all()) {
          d = -q.maxCoeff();
        } else {
          d = q.cwiseMax(0.0).norm();
        }
      }
      best = std::min(best, d);
    }
    return best;
  };
  double expect = 0.0;
  for (const Vec3& p : pts) expect += brute(p);
  expect /= pts.size();
  CHECK(reconstruction_error(pts, sc.scene) ==
        doctest::Approx(expect).epsilon(1e-12));

  // a supplied alignment is applied before the distance lookup
  RigidTransform T;
  T.rotation = exp_rotation(Vec3(0.3, -0.2, 0.5));
  T.translation = Vec3(1, 2, 3);
  std::vector<Vec3> moved;
  const RigidTransform Tinv = T.inverse();
  for (const Vec3& p : pts) moved.push_back(Tinv.rotation * p + Tinv.translation);
  Alignment a;
  a.R = T.rotationMatrix();
  a.t = T.translation;
  CHECK(reconstruction_error(moved, sc.scene, a) ==
        doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_AS((void)reconstruction_error({}, sc.scene),
                  std::invalid_argument);
}

TEST_CASE("drift curve is zero for a perfect estimate") {
  Trajectory truth = smooth_trajectory(150, 12);
  auto curve = drift_curve(truth, truth);
  REQUIRE(curve.size() == truth.size());
  CHECK(curve.front().distance == 0.0);
  for (size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].error < 1e-12);
    if (i > 0) CHECK(curve[i].distance >= curve[i - 1].distance);
  }
}

TEST_CASE("linear drift produces a linear curve with the right slope") {
  Trajectory truth, est;
  for (int k = 0; k <= 300; ++k) {
    const double t = k / 30.0;
    PoseKnot p;
    p.t = t;
    p.T.translation = Vec3(t, 0, 0);  // 1 m/s
    truth.push_back(p);
    p.T.translation += Vec3(0, 0.01 * t, 0);
    est.push_back(p);
  }
  auto curve = drift_curve(est, truth);
  REQUIRE(curve.size() == truth.size());
  for (const DriftPoint& d : curve) {
    CHECK(std::abs(d.error - 0.01 * d.distance) < 1e-9);
  }
  CHECK(curve.back().distance == doctest::Approx(10.0));
}

TEST_CASE("drift registration cancels a rigid offset of the estimate") {
  Trajectory truth = smooth_trajectory(200, 13);
  Trajectory est = perturb(truth, 0.02, 14);
  auto base = drift_curve(est, truth);
  RigidTransform T;
  T.rotation = exp_rotation(Vec3(1.0, -0.4, 0.2));
  T.translation = Vec3(-3, 7, 2);
  auto moved = drift_curve(transform_all(est, T), truth);
  REQUIRE(base.size() == moved.size());
  for (size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(base[i].error - moved[i].error) < 1e-9);
    CHECK(base[i].distance == moved[i].distance);
  }
}

TEST_SUITE_END();
