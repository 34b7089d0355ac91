#pragma once

#include <string>
#include <vector>

#include "rgbdi/deformation.hpp"
#include "rgbdi/eval.hpp"
#include "rgbdi/io.hpp"
#include "rgbdi/surfel_map.hpp"
#include "rgbdi/tracker.hpp"

namespace rgbdi {

// an externally supplied loop-closure pair: when the pipeline reaches
// `frame`, deform the map so q_s lands on q_d
struct ExternalConstraint {
  int frame = 0;
  Vec3 q_s = Vec3::Zero();
  Vec3 q_d = Vec3::Zero();
};

struct PipelineConfig {
  TrackerConfig tracker;
  MapConfig map;
  GraphConfig graph;
  ImuParams imu;
  RigidTransform T_CS;
  int pyramid_levels = 3;
  bool slam = false;              // deformation graph + loop closures
  bool prefilter = true;          // depth + intensity denoising before tracking
  double init_window_s = 0.5;     // leading rest interval used to initialize
  double init_sigma_ba = 0.1;

  // ground-truth-assisted revisit matcher (synthetic harness)
  double loop_max_dist = 0.5;       // m between true positions
  double loop_max_angle_deg = 40.0; // between true optical axes
  int loop_cooldown = 60;           // frames between closures
  int loop_pixel_stride = 8;        // constraint sampling grid
  int loop_max_constraints = 300;
  int loop_min_constraints = 20;
  int loop_pin_target = 300;        // inactive surfels pinned per closure

  std::vector<ExternalConstraint> external_constraints;
};

// on-disk sequence: images + imu + metadata as written by simulate_sequence
struct SequenceData {
  std::string dir;
  Intrinsics K;
  double frame_rate = 30.0;
  int n_frames = 0;
  std::vector<ImuSample> imu;
  Config meta;
  Trajectory groundtruth;  // empty when the sequence ships none

  double frameTime(int k) const { return t0 + k / frame_rate; }
  double t0 = 0.0;
  std::string framePath(const char* kind, int k) const;
  void loadFrame(int k, ImageF* intensity, ImageF* depth) const;
};

SequenceData load_sequence(const std::string& dir);

struct FrameLog {
  int frame = 0;
  double t = 0.0;
  Vec3 v_W = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  double cost = 0.0;
  int rgb_terms = 0;
  int icp_terms = 0;
  int iterations = 0;
  bool failed = false;       // dead-reckoning mode
  bool loop_closure = false;
};

void write_frame_log(const std::string& path,
                     const std::vector<FrameLog>& log);

struct PipelineResult {
  Trajectory trajectory;
  std::vector<FrameLog> log;
  bool tracking_failed = false;
  int failure_frame = -1;
  int loop_closures = 0;
};

// frame-by-frame odometry/SLAM over a loaded sequence; on solver failure the
// remaining frames are dead-reckoned from the inertial stream and flagged
PipelineResult run_pipeline(const SequenceData& seq, const PipelineConfig& cfg,
                            SurfelMap* map_out = nullptr);

// every tunable constant with its default, grouped into sections
Config default_run_config();

// PipelineConfig from "section.key" entries; unknown keys are ignored so
// sequence metadata can be layered in directly
PipelineConfig make_pipeline_config(const Config& c);

// remap a sequence's metadata (camera/noise/imu snapshot) onto the tracking
// keys it should preset
Config sequence_tracking_overrides(const Config& meta);

}  // namespace rgbdi
