#include "rgbdi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace rgbdi {

namespace fs = std::filesystem;

std::string SequenceData::framePath(const char* kind, int k) const {
  char name[64];
  std::snprintf(name, sizeof(name), "frame_%06d.png", k);
  return (fs::path(dir) / kind / name).string();
}

void SequenceData::loadFrame(int k, ImageF* intensity, ImageF* depth) const {
  *intensity = read_intensity_png(framePath("intensity", k));
  *depth = read_depth_png(framePath("depth", k));
}

SequenceData load_sequence(const std::string& dir) {
  SequenceData seq;
  seq.dir = dir;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error(dir + ": not a sequence directory");
  }

  const fs::path cfg_path = fs::path(dir) / "config.txt";
  if (fs::exists(cfg_path)) seq.meta = Config::load(cfg_path.string());

  seq.frame_rate = seq.meta.num("frame_rate", 30.0);
  seq.n_frames = seq.meta.integer("frames", 0);
  if (seq.n_frames <= 0) {
    while (fs::exists(seq.framePath("intensity", seq.n_frames))) {
      ++seq.n_frames;
    }
  }
  if (seq.n_frames <= 0) {
    throw std::runtime_error(dir + ": no intensity frames found");
  }

  if (seq.meta.has("camera.fx")) {
    seq.K.fx = seq.meta.num("camera.fx", 0.0);
    seq.K.fy = seq.meta.num("camera.fy", 0.0);
    seq.K.cx = seq.meta.num("camera.cx", 0.0);
    seq.K.cy = seq.meta.num("camera.cy", 0.0);
    seq.K.width = seq.meta.integer("camera.width", 0);
    seq.K.height = seq.meta.integer("camera.height", 0);
  } else {
    const ImageF probe = read_intensity_png(seq.framePath("intensity", 0));
    seq.K = default_intrinsics(probe.width, probe.height);
  }

  const fs::path imu_path = fs::path(dir) / "imu.csv";
  if (fs::exists(imu_path)) seq.imu = read_imu_csv(imu_path.string());

  const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
  if (fs::exists(gt_path)) {
    seq.groundtruth = read_trajectory_tum(gt_path.string());
    if (!seq.groundtruth.empty()) seq.t0 = seq.groundtruth.front().t;
  } else if (!seq.imu.empty()) {
    seq.t0 = seq.imu.front().t;
  }
  return seq;
}

void write_frame_log(const std::string& path,
                     const std::vector<FrameLog>& log) {
  std::string out =
      "frame,timestamp_s,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz,"
      "cost,rgb_terms,icp_terms,iterations,failed,loop_closure\n";
  char line[512];
  for (const FrameLog& f : log) {
    std::snprintf(line, sizeof(line),
                  "%d,%.9f,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,"
                  "%.9e,%d,%d,%d,%d,%d\n",
                  f.frame, f.t, f.v_W.x(), f.v_W.y(), f.v_W.z(), f.bg.x(),
                  f.bg.y(), f.bg.z(), f.ba.x(), f.ba.y(), f.ba.z(), f.cost,
                  f.rgb_terms, f.icp_terms, f.iterations, f.failed ? 1 : 0,
                  f.loop_closure ? 1 : 0);
    out += line;
  }
  atomic_write(path, out);
}

namespace {

Vec3 velocity_in_world(const State& x) {
  return x.q_IW.conjugate() * x.v_IIS;
}

FrameLog make_log(int frame, double t, const State& x) {
  FrameLog f;
  f.frame = frame;
  f.t = t;
  f.v_W = velocity_in_world(x);
  f.bg = x.b_g;
  f.ba = x.b_a;
  return f;
}

ModelView to_model_view(ModelRender&& render, const RigidTransform& T_WC,
                        const Intrinsics& K) {
  ModelView mv;
  mv.T_WC = T_WC;
  mv.K = K;
  mv.vertices_W = std::move(render.vertices_W);
  mv.normals_W = std::move(render.normals_W);
  return mv;
}

// ground-truth-assisted revisit detection: the true pose returns to a spot
// mapped long enough ago to have gone inactive
int find_revisit(const Trajectory& truth, int k, int inactive_after,
                 double max_dist, double max_angle_deg) {
  const int latest = k - inactive_after - 1;
  if (latest < 0 || k >= static_cast<int>(truth.size())) return -1;
  const Vec3 p = truth[k].T.translation;
  const Vec3 axis = truth[k].T.rotation * Vec3::UnitZ();
  const double cos_tol = std::cos(max_angle_deg * M_PI / 180.0);
  int best = -1;
  double best_dist = max_dist;
  for (int j = 0; j <= latest; ++j) {
    const double d = (truth[j].T.translation - p).norm();
    if (d > best_dist) continue;
    const Vec3 axis_j = truth[j].T.rotation * Vec3::UnitZ();
    if (axis.dot(axis_j) < cos_tol) continue;
    best = j;
    best_dist = d;
  }
  return best;
}

struct LoopCloser {
  const PipelineConfig& cfg;
  DeformationGraph graph;
  std::vector<RelativeConstraint> history;
  std::vector<Vec3> path;     // camera positions feeding node sampling
  int next_allowed = 0;

  explicit LoopCloser(const PipelineConfig& c) : cfg(c), graph(c.graph) {}

  void recordPose(const Vec3& p) { path.push_back(p); }

  // returns true when a closure was applied; corrects x1's pose in place
  bool close(const std::vector<SurfaceConstraint>& surface, SurfelMap* map,
             State* x1, Prior* prior, int frame, int reactivate_up_to) {
    if (surface.size() < static_cast<size_t>(cfg.loop_min_constraints)) {
      return false;
    }
    graph.buildFromPositions(path);
    if (graph.nodes().empty()) return false;

    std::vector<SurfaceConstraint> pins;
    int n_inactive = 0;
    for (const Surfel& s : map->surfels()) {
      if (!map->isActive(s, frame)) ++n_inactive;
    }
    const int stride = std::max(1, n_inactive / cfg.loop_pin_target);
    int seen = 0;
    for (const Surfel& s : map->surfels()) {
      if (map->isActive(s, frame)) continue;
      if (seen++ % stride == 0) pins.push_back({s.position, s.position});
    }

    const Vec3 g_W = x1->gravityInWorld(cfg.imu.gravity);
    graph.optimize(surface, pins, history, g_W);
    graph.deformSurfels(&map->surfels());

    RigidTransform correction;
    if (graph.blendedRigid(x1->p_WC, &correction)) {
      const RigidTransform T_new = correction * x1->T_WC();
      x1->p_WC = T_new.translation;
      x1->q_WC = T_new.rotation;
      // carry the prior through the same rigid correction: its anchor moves
      // with the pose and the pose blocks of the tangent rotate along, so the
      // prior keeps pulling toward the corrected pose instead of the stale one
      const Mat3 Rc = correction.rotationMatrix();
      Mat18 G = Mat18::Identity();
      G.block<3, 3>(kIdxPos, kIdxPos) = Rc;
      G.block<3, 3>(kIdxRot, kIdxRot) = Rc;
      prior->H = (G * prior->H * G.transpose()).eval();
      prior->b = (G * prior->b).eval();
      prior->x_ref.p_WC = x1->p_WC;
      prior->x_ref.q_WC = x1->q_WC;
    }

    for (const SurfaceConstraint& c : surface) {
      Vec3 moved;
      if (graph.deformPoint(c.q_s, &moved)) {
        history.push_back({moved, c.q_d});
      }
    }

    map->reactivate(reactivate_up_to, frame);
    next_allowed = frame + cfg.loop_cooldown;
    return true;
  }
};

// constraint pairs for one closure: points of the current frame placed where
// current tracking says they are (q_s) and where the revisited map segment
// implies they should be (q_d)
std::vector<SurfaceConstraint> sample_constraints(
    const FramePyramid& cur, const Intrinsics& K, const RigidTransform& T_est,
    const RigidTransform& T_corr, int stride, int max_count) {
  std::vector<SurfaceConstraint> out;
  const ImageF& depth = cur.depth[0];
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (d <= 0.0) continue;
      const Vec3 p = K.backproject(Vec2(u, v), d);
      out.push_back({T_est * p, T_corr * p});
    }
  }
  if (static_cast<int>(out.size()) > max_count) {
    std::vector<SurfaceConstraint> thin;
    const double step = static_cast<double>(out.size()) / max_count;
    for (int i = 0; i < max_count; ++i) {
      thin.push_back(out[static_cast<size_t>(i * step)]);
    }
    out.swap(thin);
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const SequenceData& seq, const PipelineConfig& cfg,
                            SurfelMap* map_out) {
  if (seq.n_frames < 1) throw std::invalid_argument("empty sequence");
  PipelineResult res;

  const ImuMode mode = cfg.tracker.imu_mode;
  const bool use_imu = mode != ImuMode::kOff && !seq.imu.empty();

  std::vector<ImuSample> init_window;
  if (use_imu) {
    for (const ImuSample& s : seq.imu) {
      if (s.t > seq.t0 + cfg.init_window_s) break;
      init_window.push_back(s);
    }
  }
  InitialConditions init = initialize_from_rest(init_window, cfg.imu,
                                                cfg.init_sigma_ba, cfg.T_CS);
  State x = init.x0;
  Prior prior = init.prior;

  Tracker tracker(cfg.tracker);
  SurfelMap map(cfg.map);
  LoopCloser closer(cfg);

  const bool gt_loops =
      cfg.slam && static_cast<int>(seq.groundtruth.size()) >= seq.n_frames;

  const double fb = cfg.tracker.baseline_m * seq.K.fx;
  const double sigma_disp =
      cfg.prefilter ? cfg.tracker.sigma_disparity / cfg.tracker.disparity_scale *
                          (seq.K.width / 640.0)
                    : 0.0;
  const auto prefiltered_pyramid = [&](const ImageF& intensity,
                                       const ImageF& depth) {
    if (!cfg.prefilter) {
      return build_pyramid(intensity, depth, seq.K, cfg.pyramid_levels);
    }
    return build_pyramid(blur_intensity(intensity),
                         smooth_depth(depth, fb, sigma_disp), seq.K,
                         cfg.pyramid_levels);
  };

  ImageF intensity, depth;
  seq.loadFrame(0, &intensity, &depth);
  FramePyramid prev = prefiltered_pyramid(intensity, depth);
  map.fuse(prev.intensity[0], prev.depth[0], prev.vertices[0], prev.normals[0],
           seq.K, x.T_WC(), 0);
  closer.recordPose(x.p_WC);

  res.trajectory.push_back({seq.frameTime(0), x.T_WC()});
  res.log.push_back(make_log(0, seq.frameTime(0), x));

  for (int k = 1; k < seq.n_frames; ++k) {
    const double t_prev = seq.frameTime(k - 1);
    const double t_cur = seq.frameTime(k);

    Preintegration pre(x.b_g, x.b_a, cfg.imu);
    if (use_imu) pre.integrateWindow(seq.imu, t_prev, t_cur);

    FrameLog log = make_log(k, t_cur, x);

    if (res.tracking_failed) {
      x = predict_state_mode(x, pre, cfg.T_CS, mode);
      log = make_log(k, t_cur, x);
      log.failed = true;
      res.trajectory.push_back({t_cur, x.T_WC()});
      res.log.push_back(log);
      continue;
    }

    seq.loadFrame(k, &intensity, &depth);
    FramePyramid cur = prefiltered_pyramid(intensity, depth);

    const State x1_guess = predict_state_mode(x, pre, cfg.T_CS, mode);
    ModelView model = to_model_view(
        map.renderModel(x1_guess.T_WC(), seq.K, k), x1_guess.T_WC(), seq.K);

    TrackOutcome out = tracker.track(x, prior, prev, model, cur, pre, cfg.T_CS);

    if (out.solver_failure) {
      res.tracking_failed = true;
      res.failure_frame = k;
      x = predict_state_mode(x, pre, cfg.T_CS, mode);
      log = make_log(k, t_cur, x);
      log.failed = true;
      res.trajectory.push_back({t_cur, x.T_WC()});
      res.log.push_back(log);
      prev = std::move(cur);
      continue;
    }

    x = out.x1;
    prior = out.prior;
    map.fuse(cur.intensity[0], cur.depth[0], cur.vertices[0], cur.normals[0],
             seq.K, x.T_WC(), k);

    log = make_log(k, t_cur, x);
    log.cost = out.cost;
    log.rgb_terms = out.rgb_terms;
    log.icp_terms = out.icp_terms;
    log.iterations = out.iterations;

    if (cfg.slam && k >= closer.next_allowed) {
      std::vector<SurfaceConstraint> surface;
      int reactivate_up_to = -1;

      for (const ExternalConstraint& c : cfg.external_constraints) {
        if (c.frame == k) surface.push_back({c.q_s, c.q_d});
      }
      if (!surface.empty()) {
        reactivate_up_to = k - cfg.map.inactive_after - 1;
      } else if (gt_loops) {
        const int j = find_revisit(seq.groundtruth, k, cfg.map.inactive_after,
                                   cfg.loop_max_dist, cfg.loop_max_angle_deg);
        if (j >= 0) {
          const RigidTransform T_corr = res.trajectory[j].T *
                                        seq.groundtruth[j].T.inverse() *
                                        seq.groundtruth[k].T;
          surface = sample_constraints(cur, seq.K, x.T_WC(), T_corr,
                                       cfg.loop_pixel_stride,
                                       cfg.loop_max_constraints);
          reactivate_up_to = j;
        }
      }

      if (!surface.empty() &&
          closer.close(surface, &map, &x, &prior, k, reactivate_up_to)) {
        ++res.loop_closures;
        log.loop_closure = true;
        log.v_W = velocity_in_world(x);
      }
    }

    closer.recordPose(x.p_WC);
    res.trajectory.push_back({t_cur, x.T_WC()});
    res.log.push_back(log);
    prev = std::move(cur);
  }

  if (map_out) *map_out = std::move(map);
  return res;
}

Config default_run_config() {
  Config c;
  c.set("seed", 0);
  c.set("profile", "synthetic");

  c.set("camera.width", 160);
  c.set("camera.height", 120);

  c.set("pipeline.imu", "full");
  c.set("pipeline.slam", false);
  c.set("pipeline.prefilter", true);
  c.set("pipeline.levels", 3);
  c.set("pipeline.init_window_s", 0.5);
  c.set("pipeline.init_sigma_ba", 0.1);

  c.set("tracker.iterations_coarse", 10);
  c.set("tracker.iterations_mid", 5);
  c.set("tracker.iterations_fine", 4);
  c.set("tracker.convergence_delta", 1e-6);
  c.set("tracker.lambda_min", 1e-6);
  c.set("tracker.lambda_max", 1e8);
  c.set("tracker.sigma_intensity", 4.0);
  c.set("tracker.sigma_disparity", 5.5);
  c.set("tracker.disparity_scaling", 11.0);
  c.set("tracker.baseline_m", 0.075);
  c.set("tracker.assoc_max_dist", 0.10);
  c.set("tracker.assoc_max_angle_deg", 30.0);
  c.set("tracker.huber", false);
  c.set("tracker.pixel_stride", 1);

  c.set("map.fuse_max_dist", 0.05);
  c.set("map.fuse_max_angle_deg", 20.0);
  c.set("map.inactive_after", 200);
  c.set("map.radius_scale", std::sqrt(2.0));
  c.set("map.min_splat_px", 0.5);
  c.set("map.max_splat_px", 3.0);

  c.set("graph.node_spacing", 0.3);
  c.set("graph.k_neighbors", 4);
  c.set("graph.w_rot", 1.0);
  c.set("graph.w_reg", 10.0);
  c.set("graph.w_con", 100.0);
  c.set("graph.w_imu", 100.0);
  c.set("graph.max_iterations", 50);
  c.set("graph.convergence_delta", 1e-6);
  c.set("graph.coverage_radius", 3.0);

  c.set("imu.rate_hz", 200.0);
  c.set("imu.sigma_g", 12.0e-4);
  c.set("imu.sigma_a", 8.0e-3);
  c.set("imu.sigma_bg", 4.0e-6);
  c.set("imu.sigma_ba", 2.0e-5);
  c.set("imu.sat_g", 7.8);
  c.set("imu.sat_a", 176.0);
  c.set("imu.gravity", kDefaultGravity);

  c.set("loop.max_dist", 0.5);
  c.set("loop.max_angle_deg", 40.0);
  c.set("loop.cooldown", 60);
  c.set("loop.pixel_stride", 8);
  c.set("loop.max_constraints", 300);
  c.set("loop.min_constraints", 20);
  c.set("loop.pin_target", 300);
  return c;
}

PipelineConfig make_pipeline_config(const Config& c) {
  PipelineConfig p;
  TrackerConfig& t = p.tracker;
  t.iterations[0] = c.integer("tracker.iterations_coarse", t.iterations[0]);
  t.iterations[1] = c.integer("tracker.iterations_mid", t.iterations[1]);
  t.iterations[2] = c.integer("tracker.iterations_fine", t.iterations[2]);
  t.convergence_delta = c.num("tracker.convergence_delta", t.convergence_delta);
  t.lambda_min = c.num("tracker.lambda_min", t.lambda_min);
  t.lambda_max = c.num("tracker.lambda_max", t.lambda_max);
  t.sigma_intensity = c.num("tracker.sigma_intensity", t.sigma_intensity);
  t.sigma_disparity = c.num("tracker.sigma_disparity", t.sigma_disparity);
  t.disparity_scale = c.num("tracker.disparity_scaling", t.disparity_scale);
  t.baseline_m = c.num("tracker.baseline_m", t.baseline_m);
  t.assoc_max_dist = c.num("tracker.assoc_max_dist", t.assoc_max_dist);
  t.assoc_max_angle_deg =
      c.num("tracker.assoc_max_angle_deg", t.assoc_max_angle_deg);
  t.use_huber = c.flag("tracker.huber", t.use_huber);
  t.pixel_stride = c.integer("tracker.pixel_stride", t.pixel_stride);

  const std::string imu_mode = c.str("pipeline.imu", "full");
  if (imu_mode == "full") {
    t.imu_mode = ImuMode::kFull;
  } else if (imu_mode == "gyro") {
    t.imu_mode = ImuMode::kGyroOnly;
  } else if (imu_mode == "off") {
    t.imu_mode = ImuMode::kOff;
  } else {
    throw std::invalid_argument("pipeline.imu must be full, gyro or off: " +
                                imu_mode);
  }
  p.slam = c.flag("pipeline.slam", p.slam);
  p.prefilter = c.flag("pipeline.prefilter", p.prefilter);
  p.pyramid_levels = c.integer("pipeline.levels", p.pyramid_levels);
  p.init_window_s = c.num("pipeline.init_window_s", p.init_window_s);
  p.init_sigma_ba = c.num("pipeline.init_sigma_ba", p.init_sigma_ba);

  MapConfig& m = p.map;
  m.fuse_max_dist = c.num("map.fuse_max_dist", m.fuse_max_dist);
  m.fuse_max_angle_deg = c.num("map.fuse_max_angle_deg", m.fuse_max_angle_deg);
  m.inactive_after = c.integer("map.inactive_after", m.inactive_after);
  m.radius_scale = c.num("map.radius_scale", m.radius_scale);
  m.min_splat_px = c.num("map.min_splat_px", m.min_splat_px);
  m.max_splat_px = c.num("map.max_splat_px", m.max_splat_px);

  GraphConfig& g = p.graph;
  g.node_spacing = c.num("graph.node_spacing", g.node_spacing);
  g.k_neighbors = c.integer("graph.k_neighbors", g.k_neighbors);
  g.w_rot = c.num("graph.w_rot", g.w_rot);
  g.w_reg = c.num("graph.w_reg", g.w_reg);
  g.w_con = c.num("graph.w_con", g.w_con);
  g.w_imu = c.num("graph.w_imu", g.w_imu);
  g.max_iterations = c.integer("graph.max_iterations", g.max_iterations);
  g.convergence_delta = c.num("graph.convergence_delta", g.convergence_delta);
  g.coverage_radius = c.num("graph.coverage_radius", 3.0);

  ImuParams& i = p.imu;
  i.rate_hz = c.num("imu.rate_hz", i.rate_hz);
  i.sigma_g = c.num("imu.sigma_g", i.sigma_g);
  i.sigma_a = c.num("imu.sigma_a", i.sigma_a);
  i.sigma_bg = c.num("imu.sigma_bg", i.sigma_bg);
  i.sigma_ba = c.num("imu.sigma_ba", i.sigma_ba);
  i.sat_g = c.num("imu.sat_g", i.sat_g);
  i.sat_a = c.num("imu.sat_a", i.sat_a);
  i.gravity = c.num("imu.gravity", i.gravity);

  p.loop_max_dist = c.num("loop.max_dist", p.loop_max_dist);
  p.loop_max_angle_deg = c.num("loop.max_angle_deg", p.loop_max_angle_deg);
  p.loop_cooldown = c.integer("loop.cooldown", p.loop_cooldown);
  p.loop_pixel_stride = c.integer("loop.pixel_stride", p.loop_pixel_stride);
  p.loop_max_constraints =
      c.integer("loop.max_constraints", p.loop_max_constraints);
  p.loop_min_constraints =
      c.integer("loop.min_constraints", p.loop_min_constraints);
  p.loop_pin_target = c.integer("loop.pin_target", p.loop_pin_target);
  return p;
}

Config sequence_tracking_overrides(const Config& meta) {
  Config out;
  // zero noise figures (noiseless renders) keep the nominal weights; the
  // tracker cannot use an infinite information term
  const std::pair<const char*, const char*> remap[] = {
      {"noise.sigma_intensity", "tracker.sigma_intensity"},
      {"noise.sigma_disparity", "tracker.sigma_disparity"},
      {"noise.disparity_scaling", "tracker.disparity_scaling"},
      {"noise.baseline_factor_m", "tracker.baseline_m"},
  };
  for (const auto& [from, to] : remap) {
    if (meta.num(from, 0.0) > 0.0) out.set(to, meta.str(from, ""));
  }
  for (const auto& [key, value] : meta.entries()) {
    if (key.rfind("imu.", 0) == 0) out.set(key, value);
  }
  return out;
}

}  // namespace rgbdi
