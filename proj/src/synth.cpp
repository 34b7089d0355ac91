#include "rgbdi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace rgbdi {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double GaussianRng::uniform() {
  return ((engine_() >> 11) + 1) * 0x1.0p-53;
}

double GaussianRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

Vec3 GaussianRng::normal3() {
  const double x = normal(), y = normal(), z = normal();
  return Vec3(x, y, z);
}

uint64_t substream(uint64_t seed, uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

NoiseProfile make_profile(const std::string& name) {
  NoiseProfile p;
  p.name = name;
  if (name == "synthetic") {
    return p;
  }
  if (name == "real") {
    p.imu.sigma_a = 8.0e-2;
    p.static_accel_bias = Vec3(0.060, 0.258, 0.126);
    p.init_sigma_ba = 1.0;
    p.sigma_intensity = 1.0;
    return p;
  }
  throw std::invalid_argument("unknown noise profile: " + name);
}

NoiseProfile noiseless(NoiseProfile prof) {
  prof.imu.sigma_g = 0.0;
  prof.imu.sigma_a = 0.0;
  prof.imu.sigma_bg = 0.0;
  prof.imu.sigma_ba = 0.0;
  prof.static_accel_bias = Vec3::Zero();
  prof.init_sigma_bg = 0.0;
  prof.init_sigma_ba = 0.0;
  prof.sigma_intensity = 0.0;
  prof.sigma_disparity = 0.0;
  return prof;
}

ImuSequence sample_imu(const TrajectorySpline& spline, const Vec3& gravity_W,
                       const NoiseProfile& prof, uint64_t seed) {
  const ImuParams& ip = prof.imu;
  const double dt = 1.0 / ip.rate_hz;
  const double span = spline.endTime() - spline.startTime();
  if (span < dt) throw std::invalid_argument("spline shorter than one interval");
  const int n = static_cast<int>(std::floor(span * ip.rate_hz + 1e-9)) + 1;

  GaussianRng rng(seed);
  Vec3 bg = prof.init_sigma_bg * rng.normal3();
  Vec3 ba = prof.static_accel_bias + prof.init_sigma_ba * rng.normal3();
  const double wg = ip.sigma_g * std::sqrt(ip.rate_hz);
  const double wa = ip.sigma_a * std::sqrt(ip.rate_hz);
  const double rg = ip.sigma_bg * std::sqrt(dt);
  const double ra = ip.sigma_ba * std::sqrt(dt);

  ImuSequence out;
  out.measured.reserve(n);
  out.bias_g.reserve(n);
  out.bias_a.reserve(n);
  for (int j = 0; j < n; ++j) {
    const double t = spline.startTime() + j * dt;
    const RigidTransform T = spline.pose(t);
    ImuSample s;
    s.t = t;
    s.gyro = spline.angularVelocityBody(t) + bg + wg * rng.normal3();
    s.accel = T.rotation.conjugate() * (spline.accelerationWorld(t) - gravity_W) +
              ba + wa * rng.normal3();
    for (int k = 0; k < 3; ++k) {
      s.gyro[k] = std::clamp(s.gyro[k], -ip.sat_g, ip.sat_g);
      s.accel[k] = std::clamp(s.accel[k], -ip.sat_a, ip.sat_a);
    }
    out.measured.push_back(s);
    out.bias_g.push_back(bg);
    out.bias_a.push_back(ba);
    bg += rg * rng.normal3();
    ba += ra * rng.normal3();
  }
  return out;
}

void add_image_noise(RenderedFrame* frame, const NoiseProfile& prof,
                     const Intrinsics& K, uint64_t seed) {
  GaussianRng rng(seed);
  if (prof.sigma_intensity > 0.0) {
    for (float& v : frame->intensity.data) {
      v = std::clamp(v + static_cast<float>(prof.sigma_intensity * rng.normal()),
                     0.f, 255.f);
    }
  }
  if (prof.sigma_disparity > 0.0) {
    const double fb = prof.baseline_factor_m * K.fx;
    // sigma is quoted at the 640-wide native sensor; downsampling averages
    // disparity, so in the output's own pixel units it shrinks like fx and
    // the metric depth noise stays resolution-independent
    const double sigma_eff =
        prof.sigma_disparity / prof.disparity_scaling * (K.width / 640.0);
    for (float& d : frame->depth.data) {
      if (d <= 0.f) continue;
      const double disp = fb / d + sigma_eff * rng.normal();
      d = disp > fb / 50.0 ? static_cast<float>(fb / disp) : 0.f;
    }
  }
}

int choose_spline_subsample(size_t n_poses, int requested) {
  if (n_poses < 4) throw std::invalid_argument("need at least 4 poses");
  const size_t last = n_poses - 1;
  for (int s = std::max(1, requested); s >= 1; --s) {
    if (last % s == 0 && last / s >= 3) return s;
  }
  throw std::invalid_argument("no usable subsampling");
}

void simulate_sequence(const Scenario& scenario, const SimulateOptions& opt,
                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<PoseKnot> poses = scenario.poses;
  if (opt.duration > 0.0) {
    while (!poses.empty() && poses.back().t > opt.duration + 1e-9) {
      poses.pop_back();
    }
  }
  const int sub = choose_spline_subsample(poses.size(), opt.spline_subsample);
  const TrajectorySpline spline = TrajectorySpline::fit(poses, sub);

  fs::create_directories(fs::path(out_dir) / "intensity");
  fs::create_directories(fs::path(out_dir) / "depth");

  const RigidTransform T_EW = spline.pose(poses.front().t);
  const RigidTransform T_WE = T_EW.inverse();
  const Vec3 g_E(0.0, 0.0, -opt.profile.imu.gravity);

  ImuSequence imu =
      sample_imu(spline, g_E, opt.profile, substream(opt.seed, 1u << 20));
  write_imu_csv((fs::path(out_dir) / "imu.csv").string(), imu.measured);

  std::vector<PoseKnot> gt;
  std::vector<StateRecord> states;
  char name[64];
  for (size_t k = 0; k < poses.size(); ++k) {
    const double t = poses[k].t;
    const RigidTransform T_EC = spline.pose(t);
    RenderedFrame f = render_frame(scenario.scene, opt.K, T_EC);
    add_image_noise(&f, opt.profile, opt.K, substream(opt.seed, k));
    std::snprintf(name, sizeof(name), "frame_%06zu.png", k);
    write_intensity_png((fs::path(out_dir) / "intensity" / name).string(),
                        f.intensity);
    write_depth_png((fs::path(out_dir) / "depth" / name).string(), f.depth);

    gt.push_back({t, T_WE * T_EC});
    StateRecord r;
    r.t = t;
    r.v_W = T_WE.rotation * spline.velocityWorld(t);
    const size_t j = std::min<size_t>(
        imu.measured.size() - 1,
        static_cast<size_t>(std::lround((t - spline.startTime()) *
                                        opt.profile.imu.rate_hz)));
    r.bg = imu.bias_g[j];
    r.ba = imu.bias_a[j];
    states.push_back(r);
  }
  write_trajectory_tum((fs::path(out_dir) / "groundtruth.txt").string(), gt);
  write_state_csv((fs::path(out_dir) / "gt_state.csv").string(), states);

  Config cfg;
  cfg.set("scenario", scenario.name);
  cfg.set("seed", static_cast<int>(opt.seed));
  cfg.set("frames", static_cast<int>(poses.size()));
  cfg.set("frame_rate", scenario.frame_rate);
  cfg.set("spline_subsample", sub);
  cfg.set("camera.width", opt.K.width);
  cfg.set("camera.height", opt.K.height);
  cfg.set("camera.fx", opt.K.fx);
  cfg.set("camera.fy", opt.K.fy);
  cfg.set("camera.cx", opt.K.cx);
  cfg.set("camera.cy", opt.K.cy);
  cfg.set("noise.profile", opt.profile.name);
  cfg.set("noise.sigma_intensity", opt.profile.sigma_intensity);
  cfg.set("noise.sigma_disparity", opt.profile.sigma_disparity);
  cfg.set("noise.disparity_scaling", opt.profile.disparity_scaling);
  cfg.set("noise.baseline_factor_m", opt.profile.baseline_factor_m);
  cfg.set("imu.rate_hz", opt.profile.imu.rate_hz);
  cfg.set("imu.sigma_g", opt.profile.imu.sigma_g);
  cfg.set("imu.sigma_a", opt.profile.imu.sigma_a);
  cfg.set("imu.sigma_bg", opt.profile.imu.sigma_bg);
  cfg.set("imu.sigma_ba", opt.profile.imu.sigma_ba);
  cfg.set("imu.gravity", opt.profile.imu.gravity);
  cfg.save((fs::path(out_dir) / "config.txt").string());
}

}  // namespace rgbdi
