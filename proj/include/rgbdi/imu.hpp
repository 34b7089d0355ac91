#pragma once

#include <vector>

#include "rgbdi/manifold.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct ImuParams {
  double rate_hz = 200.0;
  double sigma_g = 12.0e-4;   // rate noise density [rad/s/sqrt(Hz)]
  double sigma_a = 8.0e-3;    // accel noise density [m/s^2/sqrt(Hz)]
  double sigma_bg = 4.0e-6;   // gyro bias random walk density
  double sigma_ba = 2.0e-5;   // accel bias random walk density
  double sat_g = 7.8;         // gyro saturation [rad/s]
  double sat_a = 176.0;       // accel saturation [m/s^2]
  double gravity = kDefaultGravity;
};

/// Relative motion integrated in the sensor frame between two camera frames,
/// linearized at fixed biases. Error state order: rotation, velocity,
/// position, gyro bias, accel bias (15 total, rotation as a right
/// perturbation of the accumulated delta).
class Preintegration {
 public:
  Preintegration() = default;
  Preintegration(const Vec3& bg_lin, const Vec3& ba_lin, const ImuParams& params)
      : bg_lin_(bg_lin), ba_lin_(ba_lin), params_(params) {}

  /// Midpoint step across [s0.t, s1.t].
  void integrate(const ImuSample& s0, const ImuSample& s1);

  /// Feed every interval of a sample run covering [t0, t1]. Samples outside
  /// the window are clipped, boundary values interpolated linearly.
  void integrateWindow(const std::vector<ImuSample>& samples, double t0,
                       double t1);

  double deltaT() const { return dt_sum_; }
  const Quat& deltaR() const { return dq_; }
  const Vec3& deltaV() const { return dv_; }
  const Vec3& deltaP() const { return dp_; }
  const Eigen::Matrix<double, 15, 15>& covariance() const { return cov_; }

  const Mat3& jRbg() const { return j_r_bg_; }
  const Mat3& jVbg() const { return j_v_bg_; }
  const Mat3& jVba() const { return j_v_ba_; }
  const Mat3& jPbg() const { return j_p_bg_; }
  const Mat3& jPba() const { return j_p_ba_; }

  const Vec3& biasGyroLin() const { return bg_lin_; }
  const Vec3& biasAccelLin() const { return ba_lin_; }
  const ImuParams& params() const { return params_; }

  /// Deltas re-expanded to first order around updated bias estimates.
  Quat deltaRCorrected(const Vec3& bg) const;
  Vec3 deltaVCorrected(const Vec3& bg, const Vec3& ba) const;
  Vec3 deltaPCorrected(const Vec3& bg, const Vec3& ba) const;

 private:
  Vec3 bg_lin_ = Vec3::Zero();
  Vec3 ba_lin_ = Vec3::Zero();
  ImuParams params_;

  double dt_sum_ = 0.0;
  Quat dq_ = Quat::Identity();
  Vec3 dv_ = Vec3::Zero();
  Vec3 dp_ = Vec3::Zero();

  Mat3 j_r_bg_ = Mat3::Zero();
  Mat3 j_v_bg_ = Mat3::Zero();
  Mat3 j_v_ba_ = Mat3::Zero();
  Mat3 j_p_bg_ = Mat3::Zero();
  Mat3 j_p_ba_ = Mat3::Zero();

  Eigen::Matrix<double, 15, 15> cov_ = Eigen::Matrix<double, 15, 15>::Zero();
};

/// Propagate state x0 across the preintegrated window. T_CS maps sensor
/// frame points into the camera frame. Biases and the gravity attitude
/// carry over unchanged.
State predict_state(const State& x0, const Preintegration& pre,
                    const RigidTransform& T_CS);

}  // namespace rgbdi
