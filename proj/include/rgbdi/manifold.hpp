#pragma once

#include "rgbdi/types.hpp"

namespace rgbdi {

Mat3 skew(const Vec3& v);

/// Axis-angle vector -> unit quaternion (Hamilton), rotation of angle |a|
/// about a/|a|. Series fallback near zero.
Quat exp_rotation(const Vec3& a);

/// Unit quaternion -> minimal axis-angle vector, |result| <= pi.
/// At angle pi the axis sign is canonicalized (largest component positive).
Vec3 log_rotation(const Quat& q);

// SO(3) right Jacobian and its inverse; left versions follow from
// Jl(phi) = Jr(-phi).
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inv(const Vec3& phi);

struct RigidTransform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform Identity() { return {}; }

  Mat3 rotationMatrix() const { return rotation.toRotationMatrix(); }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = (rotation * rhs.rotation).normalized();
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

/// Full estimation state attached to one camera frame.
struct State {
  Vec3 p_WC = Vec3::Zero();        // camera position in world
  Quat q_WC = Quat::Identity();    // camera orientation in world
  Vec3 v_IIS = Vec3::Zero();       // IMU velocity in the inertial frame
  Vec3 b_g = Vec3::Zero();         // gyro bias
  Vec3 b_a = Vec3::Zero();         // accelerometer bias
  Quat q_IW = Quat::Identity();    // world-in-inertial orientation

  RigidTransform T_WC() const { return {q_WC, p_WC}; }

  // Gravity acceleration expressed in the world frame.
  Vec3 gravityInWorld(double magnitude) const {
    return q_IW.conjugate() * Vec3(0.0, 0.0, -magnitude);
  }
};

/// x boxplus delta: vector blocks add, quaternion blocks are left-multiplied
/// by the exponential of their perturbation.
State boxplus(const State& x, const Tangent& delta);

/// a boxminus b, the inverse of boxplus in the tangent space of b.
Tangent boxminus(const State& a, const State& b);

}  // namespace rgbdi
