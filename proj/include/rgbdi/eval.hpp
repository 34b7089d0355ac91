#pragma once

#include <utility>
#include <vector>

#include "rgbdi/scene.hpp"
#include "rgbdi/spline.hpp"

namespace rgbdi {

using Trajectory = std::vector<PoseKnot>;

inline constexpr double kAssocGate = 0.02;        // seconds
inline constexpr double kTrackingFailureAte = 1.0;  // meters

// nearest-timestamp pairs (estimate index, truth index) within the gate
std::vector<std::pair<size_t, size_t>> associate_poses(
    const Trajectory& estimate, const Trajectory& truth,
    double max_dt = kAssocGate);

// least-squares rotation+translation (no scale) mapping `from` onto `to`
struct Alignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
};

Alignment align_rigid(const std::vector<Vec3>& from,
                      const std::vector<Vec3>& to);

struct AteResult {
  double rmse = 0.0;
  size_t pairs = 0;
  Alignment alignment;  // estimate frame -> truth frame
};

// throws on fewer than 3 associated pairs
AteResult ate_rmse(const Trajectory& estimate, const Trajectory& truth,
                   double max_dt = kAssocGate);

// mean unsigned distance to the nearest scene surface; `map_to_scene` is the
// rigid alignment carried over from the trajectory comparison
double reconstruction_error(const std::vector<Vec3>& points,
                            const SceneModel& scene,
                            const Alignment& map_to_scene = Alignment());

struct DriftPoint {
  double distance = 0.0;  // cumulative ground-truth path length
  double error = 0.0;     // instantaneous position error
};

// first associated poses registered, no further alignment
std::vector<DriftPoint> drift_curve(const Trajectory& estimate,
                                    const Trajectory& truth,
                                    double max_dt = kAssocGate);

inline bool tracking_failed(double ate, bool solver_failure) {
  return solver_failure || ate > kTrackingFailureAte;
}

}  // namespace rgbdi
