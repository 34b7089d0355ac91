#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rgbdi {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

using Vec2f = Eigen::Vector2f;
using Vec3f = Eigen::Vector3f;

// Minimal local coordinates of a full state: one 3-vector per block, in this
// fixed order.
using Tangent = Eigen::Matrix<double, 18, 1>;

inline constexpr int kTangentDim = 18;
inline constexpr int kIdxPos = 0;   // delta r
inline constexpr int kIdxRot = 3;   // delta alpha
inline constexpr int kIdxVel = 6;   // delta v
inline constexpr int kIdxBg = 9;    // delta b_g
inline constexpr int kIdxBa = 12;   // delta b_a
inline constexpr int kIdxGrav = 15; // delta g (world-in-inertial orientation)

inline constexpr double kDefaultGravity = 9.81; // m/s^2

}  // namespace rgbdi
