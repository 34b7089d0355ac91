#include "rgbdi/residuals.hpp"

namespace rgbdi {

namespace {

// pseudo noise density tying the gravity attitude of consecutive states
constexpr double kGravityTieSigma = 1e-6;

}  // namespace

ImuFactor evaluate_imu_factor(const Preintegration& pre, const State& x0,
                              const State& x1, const RigidTransform& T_CS,
                              ImuMode mode) {
  ImuFactor f;
  const double dt = pre.deltaT();

  const Vec3 dbg = x0.b_g - pre.biasGyroLin();
  const Vec3 c = pre.jRbg() * dbg;
  const Quat dq = pre.deltaRCorrected(x0.b_g);
  const Vec3 dv = pre.deltaVCorrected(x0.b_g, x0.b_a);
  const Vec3 dp = pre.deltaPCorrected(x0.b_g, x0.b_a);

  const Mat3 R_WC0 = x0.q_WC.toRotationMatrix();
  const Mat3 R_CS = T_CS.rotationMatrix();
  const Mat3 R_WS0 = R_WC0 * R_CS;
  const Mat3 R_IW = x0.q_IW.toRotationMatrix();
  const Mat3 R_WI = R_IW.transpose();
  const Mat3 R_IS0 = R_IW * R_WS0;
  const Vec3 g_I(0.0, 0.0, -pre.params().gravity);
  const Vec3 p_CS = T_CS.translation;

  const Quat q_WC1_hat =
      (x0.q_WC * T_CS.rotation * dq * T_CS.rotation.conjugate()).normalized();
  const Mat3 R_WC1_hat = q_WC1_hat.toRotationMatrix();
  const Vec3 v1_hat = x0.v_IIS + g_I * dt + R_IS0 * dv;
  const Vec3 p_WS0 = x0.p_WC + R_WC0 * p_CS;
  const Vec3 p_WS1_hat =
      p_WS0 + R_WI * (x0.v_IIS * dt + 0.5 * g_I * dt * dt) + R_WS0 * dp;
  const Vec3 p_WC1_hat = p_WS1_hat - R_WC1_hat * p_CS;

  const Vec3 e_r = p_WC1_hat - x1.p_WC;
  const Vec3 e_a = log_rotation(q_WC1_hat * x1.q_WC.conjugate());
  const Vec3 e_v = v1_hat - x1.v_IIS;
  const Vec3 e_g = log_rotation(x0.q_IW * x1.q_IW.conjugate());

  f.e.segment<3>(kIdxPos) = e_r;
  f.e.segment<3>(kIdxRot) = e_a;
  f.e.segment<3>(kIdxVel) = e_v;
  f.e.segment<3>(kIdxBg) = x0.b_g - x1.b_g;
  f.e.segment<3>(kIdxBa) = x0.b_a - x1.b_a;
  f.e.segment<3>(kIdxGrav) = e_g;

  const Mat3 R_WC1 = x1.q_WC.toRotationMatrix();
  const Mat3 jr_inv_ea = so3_right_jacobian_inv(e_a);
  const Mat3 jl_inv_ea = so3_right_jacobian_inv(-e_a);
  const Mat3 jr_inv_eg = so3_right_jacobian_inv(e_g);
  const Mat3 jl_inv_eg = so3_right_jacobian_inv(-e_g);

  // response of the corrected rotation delta to the gyro bias
  const Mat3 rot_bias = R_WC1 * R_CS * so3_right_jacobian(c) * pre.jRbg();

  auto& J0 = f.J0;
  J0.block<3, 3>(kIdxPos, kIdxPos) = Mat3::Identity();
  J0.block<3, 3>(kIdxPos, kIdxRot) = -skew(R_WC0 * p_CS) - skew(R_WS0 * dp) +
                                     skew(R_WC1_hat * p_CS);
  J0.block<3, 3>(kIdxPos, kIdxVel) = R_WI * dt;
  J0.block<3, 3>(kIdxPos, kIdxBg) =
      R_WS0 * pre.jPbg() + R_WC1_hat * skew(p_CS) * R_CS *
                               so3_right_jacobian(c) * pre.jRbg();
  J0.block<3, 3>(kIdxPos, kIdxBa) = R_WS0 * pre.jPba();
  J0.block<3, 3>(kIdxPos, kIdxGrav) =
      R_WI * skew(x0.v_IIS * dt + 0.5 * g_I * dt * dt);

  J0.block<3, 3>(kIdxRot, kIdxRot) = jl_inv_ea;
  J0.block<3, 3>(kIdxRot, kIdxBg) = jr_inv_ea * rot_bias;

  J0.block<3, 3>(kIdxVel, kIdxRot) = -R_IW * skew(R_WS0 * dv);
  J0.block<3, 3>(kIdxVel, kIdxVel) = Mat3::Identity();
  J0.block<3, 3>(kIdxVel, kIdxBg) = R_IS0 * pre.jVbg();
  J0.block<3, 3>(kIdxVel, kIdxBa) = R_IS0 * pre.jVba();
  J0.block<3, 3>(kIdxVel, kIdxGrav) = -skew(R_IS0 * dv);

  J0.block<3, 3>(kIdxBg, kIdxBg) = Mat3::Identity();
  J0.block<3, 3>(kIdxBa, kIdxBa) = Mat3::Identity();
  J0.block<3, 3>(kIdxGrav, kIdxGrav) = jl_inv_eg;

  auto& J1 = f.J1;
  J1.block<3, 3>(kIdxPos, kIdxPos) = -Mat3::Identity();
  J1.block<3, 3>(kIdxRot, kIdxRot) = -jr_inv_ea;
  J1.block<3, 3>(kIdxVel, kIdxVel) = -Mat3::Identity();
  J1.block<3, 3>(kIdxBg, kIdxBg) = -Mat3::Identity();
  J1.block<3, 3>(kIdxBa, kIdxBa) = -Mat3::Identity();
  J1.block<3, 3>(kIdxGrav, kIdxGrav) = -jr_inv_eg;

  // map the 15 dof preintegration covariance into residual space
  Eigen::Matrix<double, 18, 15> M = Eigen::Matrix<double, 18, 15>::Zero();
  M.block<3, 3>(kIdxPos, 0) = R_WC1_hat * skew(p_CS) * R_CS;
  M.block<3, 3>(kIdxPos, 6) = R_WS0;
  M.block<3, 3>(kIdxRot, 0) = jr_inv_ea * R_WC1 * R_CS;
  M.block<3, 3>(kIdxVel, 3) = R_IS0;
  M.block<3, 3>(kIdxBg, 9) = Mat3::Identity();
  M.block<3, 3>(kIdxBa, 12) = Mat3::Identity();

  Mat18 cov = M * pre.covariance() * M.transpose();
  cov.block<3, 3>(kIdxGrav, kIdxGrav) =
      Mat3::Identity() * kGravityTieSigma * kGravityTieSigma * std::max(dt, 1e-3);

  if (mode == ImuMode::kGyroOnly) {
    // trust only rotation propagation, gyro bias walk and the gravity tie;
    // weight them by their marginal covariance, drop everything else
    const int keep[3] = {kIdxRot, kIdxBg, kIdxGrav};
    Eigen::Matrix<double, 9, 9> sub;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        sub.block<3, 3>(3 * i, 3 * j) = cov.block<3, 3>(keep[i], keep[j]);
    sub.diagonal().array() += 1e-18;
    const Eigen::Matrix<double, 9, 9> sub_inf =
        sub.ldlt().solve(Eigen::Matrix<double, 9, 9>::Identity());
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        f.W.block<3, 3>(keep[i], keep[j]) = sub_inf.block<3, 3>(3 * i, 3 * j);
  } else {
    cov.diagonal().array() += 1e-18;
    f.W = cov.ldlt().solve(Mat18::Identity());
  }
  f.W = 0.5 * (f.W + f.W.transpose()).eval();
  return f;
}

PointResidual photometric_residual(const ImageF& I_ref, const Intrinsics& K,
                                   const RigidTransform& T_WC0,
                                   const RigidTransform& T_WC1,
                                   const Vec2& uv1, double d1, double i1) {
  PointResidual r;
  const Vec3 p_C1 = K.backproject(uv1, d1);
  const Vec3 p_W = T_WC1 * p_C1;
  const RigidTransform T_C0W = T_WC0.inverse();
  const Vec3 p_C0 = T_C0W * p_W;
  if (p_C0.z() < kMinDepth) return r;
  const Vec2 uv0 = K.project(p_C0);
  if (!K.inBounds(uv0, 1.0)) return r;

  double gu, gv;
  const double i0 = bilinear_with_gradient(I_ref, uv0.x(), uv0.y(), &gu, &gv);
  r.e = i0 - i1;

  Eigen::Matrix<double, 1, 2> g;
  g << gu, gv;
  Eigen::Matrix<double, 2, 3> du_dp;
  const double iz = 1.0 / p_C0.z();
  du_dp << K.fx * iz, 0.0, -K.fx * p_C0.x() * iz * iz,
           0.0, K.fy * iz, -K.fy * p_C0.y() * iz * iz;
  const Eigen::Matrix<double, 1, 3> de_dp = g * du_dp;

  const Mat3 R0t = T_C0W.rotationMatrix();
  r.J1.leftCols<3>() = de_dp * R0t;
  r.J1.rightCols<3>() = de_dp * (-R0t * skew(T_WC1.rotation * p_C1));
  r.J0.leftCols<3>() = -de_dp * R0t;
  r.J0.rightCols<3>() = de_dp * (R0t * skew(p_W - T_WC0.translation));
  r.valid = true;
  return r;
}

PointResidual icp_residual(const RigidTransform& T_WC1, const Vec3& p_C1,
                           const Vec3& p_W_model, const Vec3& n_W_model) {
  PointResidual r;
  const Vec3 p_W = T_WC1 * p_C1;
  r.e = n_W_model.dot(p_W - p_W_model);
  r.J1.leftCols<3>() = n_W_model.transpose();
  r.J1.rightCols<3>() =
      ((T_WC1.rotation * p_C1).cross(n_W_model)).transpose();
  r.valid = true;
  return r;
}

}  // namespace rgbdi
