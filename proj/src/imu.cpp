#include "rgbdi/imu.hpp"

#include <algorithm>
#include <cmath>

namespace rgbdi {

void Preintegration::integrate(const ImuSample& s0, const ImuSample& s1) {
  const double dt = s1.t - s0.t;
  if (dt <= 0.0) return;

  const Vec3 w_mid = 0.5 * (s0.gyro + s1.gyro) - bg_lin_;
  const Vec3 a0 = s0.accel - ba_lin_;
  const Vec3 a1 = s1.accel - ba_lin_;

  const Vec3 dtheta = w_mid * dt;
  const Quat e = exp_rotation(dtheta);
  const Mat3 jr = so3_right_jacobian(dtheta);

  const Mat3 R0 = dq_.toRotationMatrix();
  const Quat dq_next = (dq_ * e).normalized();
  const Mat3 R1 = dq_next.toRotationMatrix();

  // force endpoints in the delta frame; velocity integrates the trapezoid,
  // position the exact double integral of the linear-in-time force model
  const Vec3 f0 = R0 * a0;
  const Vec3 f1 = R1 * a1;

  const Mat3 j_r_next = e.toRotationMatrix().transpose() * j_r_bg_ - jr * dt;
  const Mat3 df0_dbg = -R0 * skew(a0) * j_r_bg_;
  const Mat3 df1_dbg = -R1 * skew(a1) * j_r_next;

  j_p_bg_ += j_v_bg_ * dt + dt * dt * (df0_dbg / 3.0 + df1_dbg / 6.0);
  j_p_ba_ += j_v_ba_ * dt - dt * dt * (R0 / 3.0 + R1 / 6.0);
  j_v_bg_ += 0.5 * (df0_dbg + df1_dbg) * dt;
  j_v_ba_ += -0.5 * (R0 + R1) * dt;
  j_r_bg_ = j_r_next;

  // error propagation, same linearization in stochastic form
  using Mat15 = Eigen::Matrix<double, 15, 15>;
  Mat15 F = Mat15::Identity();
  const Mat3 A = e.toRotationMatrix().transpose();
  const Mat3 dphi1_dbg = -jr * dt;

  F.block<3, 3>(0, 0) = A;
  F.block<3, 3>(0, 9) = dphi1_dbg;
  F.block<3, 3>(3, 0) = -0.5 * (R0 * skew(a0) + R1 * skew(a1) * A) * dt;
  F.block<3, 3>(3, 9) = -0.5 * R1 * skew(a1) * dphi1_dbg * dt;
  F.block<3, 3>(3, 12) = -0.5 * (R0 + R1) * dt;
  F.block<3, 3>(6, 0) =
      -dt * dt * (R0 * skew(a0) / 3.0 + R1 * skew(a1) * A / 6.0);
  F.block<3, 3>(6, 3) = Mat3::Identity() * dt;
  F.block<3, 3>(6, 9) = -dt * dt / 6.0 * R1 * skew(a1) * dphi1_dbg;
  F.block<3, 3>(6, 12) = -dt * dt * (R0 / 3.0 + R1 / 6.0);

  // noise inputs: one effective midpoint rate noise and one accel noise per
  // step, variances matching the continuous white noise limit
  Eigen::Matrix<double, 15, 6> G = Eigen::Matrix<double, 15, 6>::Zero();
  G.block<3, 3>(0, 0) = -jr * dt;
  G.block<3, 3>(3, 0) = -0.5 * R1 * skew(a1) * G.block<3, 3>(0, 0) * dt;
  G.block<3, 3>(3, 3) = -0.5 * (R0 + R1) * dt;
  G.block<3, 3>(6, 0) = -dt * dt / 6.0 * R1 * skew(a1) * G.block<3, 3>(0, 0);
  G.block<3, 3>(6, 3) = -dt * dt * (R0 / 3.0 + R1 / 6.0);

  Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
  Q.diagonal().segment<3>(0).setConstant(params_.sigma_g * params_.sigma_g / dt);
  Q.diagonal().segment<3>(3).setConstant(params_.sigma_a * params_.sigma_a / dt);

  cov_ = F * cov_ * F.transpose() + G * Q * G.transpose();
  cov_.block<3, 3>(9, 9) +=
      Mat3::Identity() * params_.sigma_bg * params_.sigma_bg * dt;
  cov_.block<3, 3>(12, 12) +=
      Mat3::Identity() * params_.sigma_ba * params_.sigma_ba * dt;

  dp_ += dv_ * dt + dt * dt * (f0 / 3.0 + f1 / 6.0);
  dv_ += 0.5 * (f0 + f1) * dt;
  dq_ = dq_next;
  dt_sum_ += dt;
}

namespace {

ImuSample lerp(const ImuSample& a, const ImuSample& b, double t) {
  const double u = (t - a.t) / (b.t - a.t);
  ImuSample s;
  s.t = t;
  s.gyro = (1.0 - u) * a.gyro + u * b.gyro;
  s.accel = (1.0 - u) * a.accel + u * b.accel;
  return s;
}

}  // namespace

void Preintegration::integrateWindow(const std::vector<ImuSample>& samples,
                                     double t0, double t1) {
  if (samples.size() < 2 || t1 <= t0) return;
  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const ImuSample& a = samples[i];
    const ImuSample& b = samples[i + 1];
    if (b.t <= t0 || a.t >= t1) continue;
    const ImuSample lo = (a.t < t0) ? lerp(a, b, t0) : a;
    const ImuSample hi = (b.t > t1) ? lerp(a, b, t1) : b;
    integrate(lo, hi);
  }
}

Quat Preintegration::deltaRCorrected(const Vec3& bg) const {
  return (dq_ * exp_rotation(j_r_bg_ * (bg - bg_lin_))).normalized();
}

Vec3 Preintegration::deltaVCorrected(const Vec3& bg, const Vec3& ba) const {
  return dv_ + j_v_bg_ * (bg - bg_lin_) + j_v_ba_ * (ba - ba_lin_);
}

Vec3 Preintegration::deltaPCorrected(const Vec3& bg, const Vec3& ba) const {
  return dp_ + j_p_bg_ * (bg - bg_lin_) + j_p_ba_ * (ba - ba_lin_);
}

State predict_state(const State& x0, const Preintegration& pre,
                    const RigidTransform& T_CS) {
  const double dt = pre.deltaT();
  const Quat dq = pre.deltaRCorrected(x0.b_g);
  const Vec3 dv = pre.deltaVCorrected(x0.b_g, x0.b_a);
  const Vec3 dp = pre.deltaPCorrected(x0.b_g, x0.b_a);

  const Quat q_WS0 = (x0.q_WC * T_CS.rotation).normalized();
  const Quat q_WI = x0.q_IW.conjugate();
  const Vec3 g_I(0.0, 0.0, -pre.params().gravity);

  State x1 = x0;
  x1.q_WC = (q_WS0 * dq * T_CS.rotation.conjugate()).normalized();
  x1.v_IIS = x0.v_IIS + g_I * dt + (x0.q_IW * q_WS0) * dv;

  const Vec3 p_WS0 = x0.p_WC + x0.q_WC * T_CS.translation;
  const Vec3 p_WS1 =
      p_WS0 + q_WI * (x0.v_IIS * dt + 0.5 * g_I * dt * dt) + q_WS0 * dp;
  x1.p_WC = p_WS1 - x1.q_WC * T_CS.translation;
  return x1;
}

}  // namespace rgbdi
