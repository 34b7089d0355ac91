#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rgbdi/pipeline.hpp"
#include "rgbdi/synth.hpp"

using namespace rgbdi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Intrinsics parse_resolution(const std::string& spec) {
  int w = 0, h = 0;
  if (std::sscanf(spec.c_str(), "%dx%d", &w, &h) != 2 || w < 16 || h < 16) {
    throw CLI::ValidationError("--resolution", "expected WxH, e.g. 160x120");
  }
  return default_intrinsics(w, h);
}

Vec3 vec3_of(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::runtime_error("expected a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Texture texture_of(const json& j) {
  Texture t;
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") {
    t.kind = TextureKind::kUniform;
  } else if (kind == "ramp") {
    t.kind = TextureKind::kRamp;
  } else if (kind == "checker") {
    t.kind = TextureKind::kChecker;
  } else if (kind == "sine") {
    t.kind = TextureKind::kSine;
  } else {
    throw std::runtime_error("unknown texture kind: " + kind);
  }
  t.base = j.value("base", t.base);
  t.amplitude = j.value("amplitude", t.amplitude);
  if (j.contains("dir")) t.dir = vec3_of(j["dir"]);
  if (j.contains("dir2")) t.dir2 = vec3_of(j["dir2"]);
  t.scale = j.value("scale", t.scale);
  t.phase = j.value("phase", t.phase);
  t.low_texture = j.value("low_texture", t.low_texture);
  return t;
}

// a scene file: primitives plus an explicit timed pose list
Scenario scenario_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error(path + ": cannot open scene file");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }

  Scenario sc;
  sc.name = j.value("name", fs::path(path).stem().string());
  sc.frame_rate = j.value("frame_rate", 30.0);
  for (const json& p : j.at("primitives")) {
    Primitive prim;
    const std::string kind = p.at("kind").get<std::string>();
    if (kind == "plane") {
      prim.kind = Primitive::kPlane;
      prim.n = vec3_of(p.at("n"));
      prim.c = p.at("c").get<double>();
    } else if (kind == "box") {
      prim.kind = Primitive::kBox;
      prim.box_min = vec3_of(p.at("min"));
      prim.box_max = vec3_of(p.at("max"));
    } else if (kind == "sphere") {
      prim.kind = Primitive::kSphere;
      prim.center = vec3_of(p.at("center"));
      prim.radius = p.at("radius").get<double>();
    } else {
      throw std::runtime_error(path + ": unknown primitive kind " + kind);
    }
    if (p.contains("texture")) prim.texture = texture_of(p["texture"]);
    sc.scene.primitives().push_back(prim);
  }
  for (const json& row : j.at("poses")) {
    if (!row.is_array() || row.size() != 8) {
      throw std::runtime_error(path +
                               ": pose rows are [t tx ty tz qx qy qz qw]");
    }
    PoseKnot k;
    k.t = row[0].get<double>();
    k.T.translation =
        Vec3(row[1].get<double>(), row[2].get<double>(), row[3].get<double>());
    k.T.rotation = Quat(row[7].get<double>(), row[4].get<double>(),
                        row[5].get<double>(), row[6].get<double>())
                       .normalized();
    sc.poses.push_back(k);
  }
  if (sc.poses.size() < 4) {
    throw std::runtime_error(path + ": need at least 4 poses");
  }
  sc.duration = sc.poses.back().t - sc.poses.front().t;
  return sc;
}

NoiseProfile profile_from_config(const Config& c, const std::string& name) {
  NoiseProfile p = make_profile(name);
  p.sigma_intensity = c.num("noise.sigma_intensity", p.sigma_intensity);
  p.sigma_disparity = c.num("noise.sigma_disparity", p.sigma_disparity);
  p.disparity_scaling = c.num("noise.disparity_scaling", p.disparity_scaling);
  p.baseline_factor_m = c.num("noise.baseline_factor_m", p.baseline_factor_m);
  p.init_sigma_bg = c.num("noise.init_sigma_bg", p.init_sigma_bg);
  p.init_sigma_ba = c.num("noise.init_sigma_ba", p.init_sigma_ba);
  p.imu.rate_hz = c.num("imu.rate_hz", p.imu.rate_hz);
  p.imu.sigma_g = c.num("imu.sigma_g", p.imu.sigma_g);
  p.imu.sigma_a = c.num("imu.sigma_a", p.imu.sigma_a);
  p.imu.sigma_bg = c.num("imu.sigma_bg", p.imu.sigma_bg);
  p.imu.sigma_ba = c.num("imu.sigma_ba", p.imu.sigma_ba);
  p.imu.sat_g = c.num("imu.sat_g", p.imu.sat_g);
  p.imu.sat_a = c.num("imu.sat_a", p.imu.sat_a);
  p.imu.gravity = c.num("imu.gravity", p.imu.gravity);
  return p;
}

// tracking-weight keys implied by a named noise profile
Config profile_overrides(const NoiseProfile& p) {
  Config c;
  c.set("tracker.sigma_intensity", p.sigma_intensity);
  c.set("tracker.sigma_disparity", p.sigma_disparity);
  c.set("tracker.disparity_scaling", p.disparity_scaling);
  c.set("tracker.baseline_m", p.baseline_factor_m);
  c.set("pipeline.init_sigma_ba", p.init_sigma_ba);
  c.set("imu.sigma_g", p.imu.sigma_g);
  c.set("imu.sigma_a", p.imu.sigma_a);
  c.set("imu.sigma_bg", p.imu.sigma_bg);
  c.set("imu.sigma_ba", p.imu.sigma_ba);
  return c;
}

std::vector<ExternalConstraint> read_constraints(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error(path + ": cannot open");
  std::vector<ExternalConstraint> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ExternalConstraint c;
    if (std::sscanf(line.c_str(), "%d %lf %lf %lf %lf %lf %lf", &c.frame,
                    &c.q_s.x(), &c.q_s.y(), &c.q_s.z(), &c.q_d.x(),
                    &c.q_d.y(), &c.q_d.z()) != 7) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected \"frame qsx qsy qsz qdx qdy qdz\"");
    }
    out.push_back(c);
  }
  return out;
}

std::vector<Vec3> read_map_points(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error(path + ": cannot open");
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    Vec3 p;
    if (std::sscanf(line.c_str(), "%lf %lf %lf", &p.x(), &p.y(), &p.z()) !=
        3) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed surfel line");
    }
    pts.push_back(p);
  }
  return pts;
}

// reconstruct the scene-from-world transform the generator used: refit the
// spline the same way and take its pose at the first frame time
std::optional<RigidTransform> scene_from_world(const Config& meta) {
  const std::string scenario = meta.str("scenario", "");
  if (scenario.empty()) return std::nullopt;
  Scenario sc;
  try {
    sc = make_scenario(scenario);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  std::vector<PoseKnot> poses = sc.poses;
  const size_t frames =
      static_cast<size_t>(meta.integer("frames", int(poses.size())));
  if (frames >= 4 && frames < poses.size()) poses.resize(frames);
  const int sub = choose_spline_subsample(
      poses.size(), meta.integer("spline_subsample", 10));
  const TrajectorySpline spline = TrajectorySpline::fit(poses, sub);
  return spline.pose(poses.front().t);
}

int cmd_simulate(const std::string& scene, const std::string& out_dir,
                 uint64_t seed, const std::string& resolution,
                 const std::string& profile, double duration,
                 const std::string& config_path) {
  Config file_cfg;
  if (!config_path.empty()) file_cfg = Config::load(config_path);

  Scenario sc;
  if (fs::exists(scene) && fs::is_regular_file(scene)) {
    sc = scenario_from_file(scene);
  } else {
    sc = make_scenario(scene);
  }

  SimulateOptions opt;
  opt.K = parse_resolution(resolution);
  opt.profile = profile_from_config(file_cfg, profile);
  opt.seed = seed;
  opt.duration = duration;
  opt.spline_subsample = file_cfg.integer("spline_subsample", 10);
  simulate_sequence(sc, opt, out_dir);

  std::cout << "wrote " << out_dir << " (" << sc.name << ", "
            << opt.K.width << "x" << opt.K.height << ", profile "
            << opt.profile.name << ", seed " << seed << ")\n";
  return 0;
}

int cmd_track(const std::string& seq_dir, const std::string& out_dir,
              const std::string& imu_mode, const std::string& slam,
              const std::string& profile, const std::string& config_path,
              const std::string& constraints_path, uint64_t seed) {
  const SequenceData seq = load_sequence(seq_dir);

  Config run = default_run_config();
  run.update(sequence_tracking_overrides(seq.meta));
  if (!profile.empty()) {
    run.update(profile_overrides(make_profile(profile)));
    run.set("profile", profile);
  }
  if (!config_path.empty()) run.update(Config::load(config_path));
  if (!imu_mode.empty()) run.set("pipeline.imu", imu_mode);
  if (!slam.empty()) run.set("pipeline.slam", slam == "on");
  run.set("seed", static_cast<int>(seed));
  run.set("sequence", seq_dir);

  PipelineConfig cfg = make_pipeline_config(run);
  if (!constraints_path.empty()) {
    cfg.external_constraints = read_constraints(constraints_path);
    run.set("constraints", constraints_path);
  }

  fs::create_directories(out_dir);
  run.save((fs::path(out_dir) / "config.txt").string());

  SurfelMap map;
  const PipelineResult res = run_pipeline(seq, cfg, &map);

  write_trajectory_tum((fs::path(out_dir) / "trajectory.txt").string(),
                       res.trajectory);
  write_frame_log((fs::path(out_dir) / "frames.csv").string(), res.log);
  {
    std::ostringstream os;
    map.saveAscii(os);
    atomic_write((fs::path(out_dir) / "map.txt").string(), os.str());
  }

  json report;
  report["frames"] = res.trajectory.size();
  report["tracking_failed"] = res.tracking_failed;
  report["failure_frame"] = res.failure_frame;
  report["loop_closures"] = res.loop_closures;
  report["surfels"] = map.size();
  atomic_write((fs::path(out_dir) / "report.json").string(),
               report.dump(2) + "\n");

  std::cout << "tracked " << res.trajectory.size() << " frames -> " << out_dir
            << (res.tracking_failed
                    ? " [TRACKING FAILED at frame " +
                          std::to_string(res.failure_frame) +
                          ", dead-reckoned the rest]"
                    : "")
            << (res.loop_closures > 0
                    ? " (" + std::to_string(res.loop_closures) +
                          " loop closures)"
                    : "")
            << "\n";
  return res.tracking_failed ? 2 : 0;
}

int cmd_eval(const std::string& estimate, const std::string& seq_dir,
             std::string out_dir, const std::string& map_path) {
  if (out_dir.empty()) out_dir = fs::path(estimate).parent_path().string();
  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);

  const std::vector<PoseKnot> est = read_trajectory_tum(estimate);
  const fs::path gt_path = fs::path(seq_dir) / "groundtruth.txt";
  const std::vector<PoseKnot> truth = read_trajectory_tum(gt_path.string());

  const AteResult ate = ate_rmse(est, truth);
  const auto drift = drift_curve(est, truth);

  bool solver_failed = false;
  const fs::path run_report = fs::path(estimate).parent_path() / "report.json";
  if (fs::exists(run_report)) {
    std::ifstream in(run_report);
    json j;
    in >> j;
    solver_failed = j.value("tracking_failed", false);
  }
  const bool failed = tracking_failed(ate.rmse, solver_failed);

  Config meta;
  const fs::path meta_path = fs::path(seq_dir) / "config.txt";
  if (fs::exists(meta_path)) meta = Config::load(meta_path.string());

  std::optional<double> recon;
  if (!map_path.empty()) {
    const auto T_EW = scene_from_world(meta);
    if (T_EW.has_value()) {
      const std::vector<Vec3> pts = read_map_points(map_path);
      const Scenario sc = make_scenario(meta.str("scenario", ""));
      // map points live in the estimate's world frame; register them to the
      // ground truth, then carry them into the scene frame
      Alignment to_scene;
      to_scene.R = T_EW->rotationMatrix() * ate.alignment.R;
      to_scene.t = T_EW->rotationMatrix() * ate.alignment.t + T_EW->translation;
      recon = reconstruction_error(pts, sc.scene, to_scene);
    }
  }

  {
    std::string csv = "distance_m,error_m\n";
    char line[80];
    for (const DriftPoint& d : drift) {
      std::snprintf(line, sizeof(line), "%.9f,%.9f\n", d.distance, d.error);
      csv += line;
    }
    atomic_write((fs::path(out_dir) / "drift.csv").string(), csv);
  }

  json report;
  report["estimate"] = estimate;
  report["sequence"] = seq_dir;
  report["ate_rmse_m"] = ate.rmse;
  report["pairs"] = ate.pairs;
  report["tracking_failed"] = failed;
  report["reconstruction_error_m"] =
      recon.has_value() ? json(*recon) : json(nullptr);
  report["drift_distance_m"] = drift.empty() ? 0.0 : drift.back().distance;
  report["drift_final_error_m"] = drift.empty() ? 0.0 : drift.back().error;
  atomic_write((fs::path(out_dir) / "report.json").string(),
               report.dump(2) + "\n");

  std::printf("ATE RMSE: %.6f m over %zu pairs%s\n", ate.rmse, ate.pairs,
              failed ? " [TRACKING FAILED]" : "");
  if (recon.has_value()) {
    std::printf("reconstruction error: %.6f m\n", *recon);
  }
  if (!drift.empty()) {
    std::printf("drift: %.6f m after %.3f m travelled\n", drift.back().error,
                drift.back().distance);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D-inertial tracking and mapping toolkit"};
  app.require_subcommand(1);

  std::string scene, out_dir, resolution = "160x120", profile = "synthetic";
  std::string config_path;
  uint64_t seed = 0;
  double duration = -1.0;
  auto* sim = app.add_subcommand("simulate", "render a synthetic sequence");
  sim->add_option("--scene", scene,
                  "scenario name (see --list) or scene JSON file")
      ->required();
  sim->add_option("--out", out_dir, "output sequence directory")->required();
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--resolution", resolution, "image size WxH");
  sim->add_option("--profile", profile, "noise profile")
      ->check(CLI::IsMember({"synthetic", "real"}));
  sim->add_option("--duration", duration, "truncate to this many seconds");
  sim->add_option("--config", config_path, "key = value overrides");
  sim->add_flag_callback(
      "--list",
      [] {
        for (const std::string& n : scenario_names()) std::cout << n << "\n";
        std::exit(0);
      },
      "print shipped scenario names and exit");

  std::string seq_dir, imu_mode, slam, track_profile, constraints;
  auto* trk = app.add_subcommand("track", "run odometry/SLAM on a sequence");
  trk->add_option("--sequence", seq_dir, "sequence directory")->required();
  trk->add_option("--out", out_dir, "output directory")->required();
  trk->add_option("--imu", imu_mode, "inertial mode")
      ->check(CLI::IsMember({"full", "gyro", "off"}));
  trk->add_option("--slam", slam, "map deformation on revisits")
      ->check(CLI::IsMember({"on", "off"}));
  trk->add_option("--profile", track_profile, "noise profile for weights")
      ->check(CLI::IsMember({"synthetic", "real"}));
  trk->add_option("--config", config_path, "key = value overrides");
  trk->add_option("--constraints", constraints,
                  "loop-closure constraint file (frame qs qd per line)");
  trk->add_option("--seed", seed, "RNG seed recorded in the snapshot");

  std::string estimate, map_path;
  auto* evl = app.add_subcommand("eval", "score an estimated trajectory");
  evl->add_option("--estimate", estimate, "trajectory file (TUM format)")
      ->required();
  evl->add_option("--sequence", seq_dir, "sequence directory with ground truth")
      ->required();
  evl->add_option("--out", out_dir, "report directory (default: beside estimate)");
  evl->add_option("--map", map_path, "map export to score against the scene");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(scene, out_dir, seed, resolution, profile, duration,
                          config_path);
    }
    if (trk->parsed()) {
      return cmd_track(seq_dir, out_dir, imu_mode, slam, track_profile,
                       config_path, constraints, seed);
    }
    return cmd_eval(estimate, seq_dir, out_dir, map_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
