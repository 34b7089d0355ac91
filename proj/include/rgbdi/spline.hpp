#pragma once

#include <vector>

#include "rgbdi/manifold.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

struct PoseKnot {
  double t = 0.0;
  RigidTransform T;
};

// uniform cubic B-spline position + cumulative cubic B-spline orientation,
// fit so that the curve interpolates the retained knots
class TrajectorySpline {
 public:
  // keeps every `subsample`-th pose as a knot; throws if fewer than four
  // knots remain or timestamps are not uniform
  static TrajectorySpline fit(const std::vector<PoseKnot>& poses,
                              int subsample = 10);

  double startTime() const { return t0_; }
  double endTime() const { return t0_ + dt_ * (knot_count_ - 1); }
  double knotSpacing() const { return dt_; }

  RigidTransform pose(double t) const;
  Vec3 velocityWorld(double t) const;
  Vec3 accelerationWorld(double t) const;
  // body rates of the spline frame, from a symmetric quaternion difference
  Vec3 angularVelocityBody(double t) const;

 private:
  TrajectorySpline() = default;
  void evaluate(double t, Quat* q, Vec3* p, Vec3* v, Vec3* a) const;

  double t0_ = 0.0;
  double dt_ = 1.0;
  int knot_count_ = 0;
  // padded: index 0 is the virtual control before the first knot
  std::vector<Vec3> cp_;
  std::vector<Quat> cq_;
};

}  // namespace rgbdi
