#pragma once

#include "rgbdi/camera.hpp"
#include "rgbdi/imu.hpp"
#include "rgbdi/manifold.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

enum class ImuMode { kFull, kGyroOnly, kOff };

using Mat18 = Eigen::Matrix<double, 18, 18>;

/// Inertial residual between two frames: prediction from x0 across the
/// preintegrated window, boxminus the estimate x1. 18 rows in state tangent
/// order. W is the information matrix mapped from the preintegration
/// covariance; the gravity attitude rows act as a stiff equality.
struct ImuFactor {
  Tangent e = Tangent::Zero();
  Mat18 J0 = Mat18::Zero();
  Mat18 J1 = Mat18::Zero();
  Mat18 W = Mat18::Zero();
};

ImuFactor evaluate_imu_factor(const Preintegration& pre, const State& x0,
                              const State& x1, const RigidTransform& T_CS,
                              ImuMode mode = ImuMode::kFull);

/// One scalar residual row touching the pose blocks of the two states.
/// J columns: translation then rotation perturbation (3 + 3).
struct PointResidual {
  bool valid = false;
  double e = 0.0;
  Eigen::Matrix<double, 1, 6> J0 = Eigen::Matrix<double, 1, 6>::Zero();
  Eigen::Matrix<double, 1, 6> J1 = Eigen::Matrix<double, 1, 6>::Zero();
};

/// Intensity difference after warping a current-frame point (pixel uv1,
/// depth d1, intensity i1) into the reference image.
PointResidual photometric_residual(const ImageF& I_ref, const Intrinsics& K,
                                   const RigidTransform& T_WC0,
                                   const RigidTransform& T_WC1,
                                   const Vec2& uv1, double d1, double i1);

/// Point-to-plane distance of a current-frame point against a model point
/// and normal held fixed in world coordinates. Touches only x1.
PointResidual icp_residual(const RigidTransform& T_WC1, const Vec3& p_C1,
                           const Vec3& p_W_model, const Vec3& n_W_model);

}  // namespace rgbdi
