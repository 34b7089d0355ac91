#pragma once

#include <array>

#include "rgbdi/camera.hpp"
#include "rgbdi/imu.hpp"
#include "rgbdi/residuals.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

struct TrackerConfig {
  std::array<int, 3> iterations{10, 5, 4};  // coarse to fine
  double convergence_delta = 1e-6;
  double lambda_min = 1e-6;
  double lambda_max = 1e8;
  double sigma_intensity = 4.0;
  double sigma_disparity = 5.5;      // pixels, before scaling
  double disparity_scale = 11.0;     // sigma_disparity / this = effective px
  double baseline_m = 0.075;
  double assoc_max_dist = 0.10;      // m
  double assoc_max_angle_deg = 30.0;
  bool use_huber = false;            // optional, delta = 3 sigma
  ImuMode imu_mode = ImuMode::kFull;
  int pixel_stride = 1;
};

/// Gaussian prior on one state in its tangent space: cost
/// 0.5 (d - H^-1 b)^T H (d - H^-1 b), d = x boxminus x_ref.
struct Prior {
  State x_ref;
  Mat18 H = Mat18::Zero();
  Tangent b = Tangent::Zero();
};

/// Model geometry rendered into a reference camera: per-pixel world-frame
/// points and normals, zero where empty.
struct ModelView {
  RigidTransform T_WC;
  Intrinsics K;
  ImageV3 vertices_W;
  ImageV3 normals_W;

  bool empty() const { return vertices_W.data.empty(); }
};

struct NormalEquations {
  Eigen::Matrix<double, 36, 36> H = Eigen::Matrix<double, 36, 36>::Zero();
  Eigen::Matrix<double, 36, 1> b = Eigen::Matrix<double, 36, 1>::Zero();
  double cost = 0.0;
  int rgb_terms = 0;
  int icp_terms = 0;
};

struct TrackOutcome {
  State x0;
  State x1;
  Prior prior;               // marginal prior anchored at x1
  bool solver_failure = false;
  double cost = 0.0;
  int rgb_terms = 0;
  int icp_terms = 0;
  int iterations = 0;        // accepted Gauss-Newton steps, all levels
};

/// Depth standard deviation of a disparity-limited sensor at depth d.
double sigma_depth(double d, double fx, double sigma_disp_eff,
                   double baseline_m);

/// State and prior for a sequence assumed to start at rest: identity first
/// camera pose (it defines the world frame), gravity attitude from the
/// leading accelerometer samples, conservative velocity and bias priors.
struct InitialConditions {
  State x0;
  Prior prior;
};

InitialConditions initialize_from_rest(const std::vector<ImuSample>& samples,
                                       const ImuParams& prm,
                                       double sigma_ba_prior,
                                       const RigidTransform& T_CS);

/// Initial guess for the next state; honors what the selected inertial mode
/// can actually predict.
State predict_state_mode(const State& x0, const Preintegration& pre,
                         const RigidTransform& T_CS, ImuMode mode);

class Tracker {
 public:
  explicit Tracker(const TrackerConfig& cfg = TrackerConfig{}) : cfg_(cfg) {}

  const TrackerConfig& config() const { return cfg_; }

  /// Accumulate H = sum J^T W J and b = -sum J^T W e over the photometric,
  /// geometric, inertial and prior terms at one pyramid level.
  NormalEquations buildNormalEquations(const State& x0, const State& x1,
                                       const Prior& prior,
                                       const FramePyramid& prev,
                                       const ModelView& model,
                                       const FramePyramid& cur, int level,
                                       const Preintegration& pre,
                                       const RigidTransform& T_CS) const;

  /// Full tracking cycle: coarse-to-fine damped Gauss-Newton over both
  /// states, then marginalization of x0 into a prior on x1.
  TrackOutcome track(const State& x0, const Prior& prior,
                     const FramePyramid& prev, const ModelView& model,
                     const FramePyramid& cur, const Preintegration& pre,
                     const RigidTransform& T_CS) const;

  /// Schur complement onto the second state. ne must carry the prior block.
  static Prior marginalize(const NormalEquations& ne, const State& x1);

  /// Rebase the prior onto a new linearization point, shifting b to first
  /// order and leaving H untouched.
  static void prior_correction(Prior& prior, const State& new_lin);

 private:
  TrackerConfig cfg_;
};

}  // namespace rgbdi
