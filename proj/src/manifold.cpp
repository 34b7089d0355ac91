#include "rgbdi/manifold.hpp"

#include <cmath>

namespace rgbdi {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat exp_rotation(const Vec3& a) {
  const double angle = a.norm();
  double w, s;
  if (angle < kSmallAngle) {
    const double a2 = angle * angle;
    w = 1.0 - a2 / 8.0;
    s = 0.5 - a2 / 48.0;
  } else {
    w = std::cos(0.5 * angle);
    s = std::sin(0.5 * angle) / angle;
  }
  Quat q(w, s * a.x(), s * a.y(), s * a.z());
  q.normalize();
  return q;
}

Vec3 log_rotation(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();

  const Vec3 v(q.x(), q.y(), q.z());
  const double vn = v.norm();
  if (vn < kSmallAngle) {
    // angle ~ 0: log(q) ~ 2 v / w with cubic correction
    return v * (2.0 / q.w()) * (1.0 - vn * vn / (3.0 * q.w() * q.w()));
  }
  double angle = 2.0 * std::atan2(vn, q.w());
  Vec3 axis = v / vn;
  if (angle > M_PI) {
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  if (std::abs(angle - M_PI) < 1e-12) {
    // pi is a branch point: fix the axis sign so log is single-valued
    int k;
    axis.cwiseAbs().maxCoeff(&k);
    if (axis[k] < 0.0) axis = -axis;
  }
  return angle * axis;
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 W = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * W + W * W / 6.0;
  }
  const double a2 = angle * angle;
  const double c1 = (1.0 - std::cos(angle)) / a2;
  const double c2 = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() - c1 * W + c2 * W * W;
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 W = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + W * W / 12.0;
  }
  const double c = 1.0 / (angle * angle) -
                   (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

State boxplus(const State& x, const Tangent& delta) {
  State out = x;
  out.p_WC += delta.segment<3>(kIdxPos);
  out.q_WC = (exp_rotation(delta.segment<3>(kIdxRot)) * x.q_WC).normalized();
  out.v_IIS += delta.segment<3>(kIdxVel);
  out.b_g += delta.segment<3>(kIdxBg);
  out.b_a += delta.segment<3>(kIdxBa);
  out.q_IW = (exp_rotation(delta.segment<3>(kIdxGrav)) * x.q_IW).normalized();
  return out;
}

Tangent boxminus(const State& a, const State& b) {
  Tangent d;
  d.segment<3>(kIdxPos) = a.p_WC - b.p_WC;
  d.segment<3>(kIdxRot) = log_rotation(a.q_WC * b.q_WC.conjugate());
  d.segment<3>(kIdxVel) = a.v_IIS - b.v_IIS;
  d.segment<3>(kIdxBg) = a.b_g - b.b_g;
  d.segment<3>(kIdxBa) = a.b_a - b.b_a;
  d.segment<3>(kIdxGrav) = log_rotation(a.q_IW * b.q_IW.conjugate());
  return d;
}

}  // namespace rgbdi
