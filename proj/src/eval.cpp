#include "rgbdi/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgbdi {

std::vector<std::pair<size_t, size_t>> associate_poses(
    const Trajectory& estimate, const Trajectory& truth, double max_dt) {
  std::vector<std::pair<size_t, size_t>> pairs;
  if (truth.empty()) return pairs;
  std::vector<double> times(truth.size());
  for (size_t j = 0; j < truth.size(); ++j) times[j] = truth[j].t;
  for (size_t i = 0; i < estimate.size(); ++i) {
    const double t = estimate[i].t;
    const auto it = std::lower_bound(times.begin(), times.end(), t);
    size_t j = std::min<size_t>(it - times.begin(), truth.size() - 1);
    if (j > 0 && std::abs(times[j - 1] - t) < std::abs(times[j] - t)) --j;
    if (std::abs(times[j] - t) <= max_dt) pairs.emplace_back(i, j);
  }
  return pairs;
}

Alignment align_rigid(const std::vector<Vec3>& from,
                      const std::vector<Vec3>& to) {
  if (from.size() != to.size() || from.size() < 3) {
    throw std::invalid_argument("rigid alignment needs >= 3 point pairs");
  }
  MatX src(3, from.size()), dst(3, to.size());
  for (size_t i = 0; i < from.size(); ++i) {
    src.col(i) = from[i];
    dst.col(i) = to[i];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  Alignment a;
  a.R = T.topLeftCorner<3, 3>();
  a.t = T.topRightCorner<3, 1>();
  return a;
}

AteResult ate_rmse(const Trajectory& estimate, const Trajectory& truth,
                   double max_dt) {
  const auto pairs = associate_poses(estimate, truth, max_dt);
  if (pairs.size() < 3) {
    throw std::runtime_error("insufficient trajectory overlap: " +
                             std::to_string(pairs.size()) + " pairs");
  }
  std::vector<Vec3> from, to;
  from.reserve(pairs.size());
  to.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    from.push_back(estimate[i].T.translation);
    to.push_back(truth[j].T.translation);
  }
  AteResult res;
  res.pairs = pairs.size();
  res.alignment = align_rigid(from, to);
  double sumsq = 0.0;
  for (size_t k = 0; k < from.size(); ++k) {
    sumsq += (res.alignment.apply(from[k]) - to[k]).squaredNorm();
  }
  res.rmse = std::sqrt(sumsq / from.size());
  return res;
}

double reconstruction_error(const std::vector<Vec3>& points,
                            const SceneModel& scene,
                            const Alignment& map_to_scene) {
  if (points.empty()) throw std::invalid_argument("empty reconstruction");
  double sum = 0.0;
  for (const Vec3& p : points) {
    sum += scene.nearestSurfaceDistance(map_to_scene.apply(p));
  }
  return sum / points.size();
}

std::vector<DriftPoint> drift_curve(const Trajectory& estimate,
                                    const Trajectory& truth, double max_dt) {
  const auto pairs = associate_poses(estimate, truth, max_dt);
  std::vector<DriftPoint> curve;
  if (pairs.empty()) return curve;
  const RigidTransform T_reg =
      truth[pairs.front().second].T * estimate[pairs.front().first].T.inverse();
  double distance = 0.0;
  Vec3 prev = truth[pairs.front().second].T.translation;
  for (const auto& [i, j] : pairs) {
    const Vec3 p_true = truth[j].T.translation;
    distance += (p_true - prev).norm();
    prev = p_true;
    DriftPoint d;
    d.distance = distance;
    d.error = (T_reg.rotation * estimate[i].T.translation +
               T_reg.translation - p_true)
                  .norm();
    curve.push_back(d);
  }
  return curve;
}

}  // namespace rgbdi
