#include "rgbdi/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgbdi {

namespace {

// cumulative cubic B-spline basis and derivatives on u in [0,1]
inline void cumulative_basis(double u, double b[4], double db[4],
                             double ddb[4]) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  b[0] = 1.0;
  b[1] = (u3 - 3.0 * u2 + 3.0 * u + 5.0) / 6.0;
  b[2] = (-2.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
  b[3] = u3 / 6.0;
  db[0] = 0.0;
  db[1] = 0.5 * (u - 1.0) * (u - 1.0);
  db[2] = (-6.0 * u2 + 6.0 * u + 3.0) / 6.0;
  db[3] = 0.5 * u2;
  ddb[0] = 0.0;
  ddb[1] = u - 1.0;
  ddb[2] = 1.0 - 2.0 * u;
  ddb[3] = u;
}

}  // namespace

void TrajectorySpline::evaluate(double t, Quat* q, Vec3* p, Vec3* v,
                                Vec3* a) const {
  const int segments = knot_count_ - 1;
  double x = (t - t0_) / dt_;
  int s = static_cast<int>(std::floor(x));
  s = std::clamp(s, 0, segments - 1);
  const double u = std::clamp(x - s, 0.0, 1.0);

  double b[4], db[4], ddb[4];
  cumulative_basis(u, b, db, ddb);

  if (p || v || a) {
    Vec3 pos = cp_[s];
    Vec3 vel = Vec3::Zero();
    Vec3 acc = Vec3::Zero();
    for (int j = 1; j < 4; ++j) {
      const Vec3 d = cp_[s + j] - cp_[s + j - 1];
      pos += b[j] * d;
      vel += db[j] * d;
      acc += ddb[j] * d;
    }
    if (p) *p = pos;
    if (v) *v = vel / dt_;
    if (a) *a = acc / (dt_ * dt_);
  }
  if (q) {
    Quat rot = cq_[s];
    for (int j = 1; j < 4; ++j) {
      const Vec3 omega =
          log_rotation(cq_[s + j - 1].conjugate() * cq_[s + j]);
      rot = rot * exp_rotation(b[j] * omega);
    }
    *q = rot.normalized();
  }
}

RigidTransform TrajectorySpline::pose(double t) const {
  RigidTransform T;
  evaluate(t, &T.rotation, &T.translation, nullptr, nullptr);
  return T;
}

Vec3 TrajectorySpline::velocityWorld(double t) const {
  Vec3 v;
  evaluate(t, nullptr, nullptr, &v, nullptr);
  return v;
}

Vec3 TrajectorySpline::accelerationWorld(double t) const {
  Vec3 a;
  evaluate(t, nullptr, nullptr, nullptr, &a);
  return a;
}

Vec3 TrajectorySpline::angularVelocityBody(double t) const {
  const double h = 1e-4;
  const double lo = std::max(startTime(), t - h);
  const double hi = std::min(endTime(), t + h);
  Quat qa, qb;
  evaluate(lo, &qa, nullptr, nullptr, nullptr);
  evaluate(hi, &qb, nullptr, nullptr, nullptr);
  return log_rotation(qa.conjugate() * qb) / (hi - lo);
}

TrajectorySpline TrajectorySpline::fit(const std::vector<PoseKnot>& poses,
                                       int subsample) {
  if (subsample < 1) throw std::invalid_argument("subsample must be >= 1");
  std::vector<PoseKnot> knots;
  for (std::size_t i = 0; i < poses.size(); i += subsample)
    knots.push_back(poses[i]);
  const int count = static_cast<int>(knots.size());
  if (count < 4)
    throw std::runtime_error("spline fit needs at least 4 retained knots");

  const double dt = knots[1].t - knots[0].t;
  for (int i = 1; i < count; ++i) {
    if (std::abs(knots[i].t - knots[i - 1].t - dt) > 1e-9)
      throw std::runtime_error("spline fit needs uniformly spaced knots");
  }

  TrajectorySpline sp;
  sp.t0_ = knots[0].t;
  sp.dt_ = dt;
  sp.knot_count_ = count;
  sp.cp_.assign(count + 2, Vec3::Zero());
  sp.cq_.assign(count + 2, Quat::Identity());
  for (int i = 0; i < count; ++i) {
    sp.cp_[i + 1] = knots[i].T.translation;
    sp.cq_[i + 1] = knots[i].T.rotation.normalized();
  }

  // Jacobi-style interpolation fit: the collocation weights are near
  // (1/6, 2/3, 1/6), so a gain of 1.5 contracts the knot error geometrically
  const double gain = 1.5;
  for (int iter = 0; iter < 500; ++iter) {
    sp.cp_[0] = 2.0 * sp.cp_[1] - sp.cp_[2];
    sp.cp_[count + 1] = 2.0 * sp.cp_[count] - sp.cp_[count - 1];
    sp.cq_[0] =
        sp.cq_[1] * exp_rotation(-log_rotation(sp.cq_[1].conjugate() * sp.cq_[2]));
    sp.cq_[count + 1] =
        sp.cq_[count] *
        exp_rotation(-log_rotation(sp.cq_[count].conjugate() * sp.cq_[count - 1]));

    double worst = 0.0;
    std::vector<Vec3> dp(count);
    std::vector<Vec3> dr(count);
    for (int i = 0; i < count; ++i) {
      Quat q;
      Vec3 p;
      sp.evaluate(knots[i].t, &q, &p, nullptr, nullptr);
      dp[i] = knots[i].T.translation - p;
      dr[i] = log_rotation(q.conjugate() * knots[i].T.rotation);
      worst = std::max(worst, std::max(dp[i].norm(), dr[i].norm()));
    }
    if (worst < 1e-13) break;
    for (int i = 0; i < count; ++i) {
      sp.cp_[i + 1] += gain * dp[i];
      sp.cq_[i + 1] = (sp.cq_[i + 1] * exp_rotation(gain * dr[i])).normalized();
    }
  }
  return sp;
}

}  // namespace rgbdi
