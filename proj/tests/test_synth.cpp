#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rgbdi/residuals.hpp"
#include "rgbdi/synth.hpp"

using namespace rgbdi;
namespace fs = std::filesystem;

namespace {

std::vector<PoseKnot> static_poses(int n, const RigidTransform& T) {
  std::vector<PoseKnot> poses;
  for (int k = 0; k < n; ++k) poses.push_back({k / 30.0, T});
  return poses;
}

const Vec3 kGravityE(0.0, 0.0, -9.81);

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("rgbdi_synth_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("stationary imu with zero noise measures only gravity reaction") {
  auto poses = static_poses(61, RigidTransform::Identity());
  TrajectorySpline spline =
      TrajectorySpline::fit(poses, choose_spline_subsample(poses.size(), 10));
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 3);
  REQUIRE(seq.measured.size() > 100);
  for (const ImuSample& s : seq.measured) {
    CHECK(s.gyro.norm() < 1e-9);
    CHECK((s.accel - Vec3(0, 0, 9.81)).norm() < 1e-9);
  }
}

TEST_CASE("constant-velocity translation is indistinguishable from rest") {
  std::vector<PoseKnot> poses;
  for (int k = 0; k < 61; ++k) {
    RigidTransform T;
    T.translation = (k / 30.0) * Vec3(0.3, 0.2, 0.1);
    poses.push_back({k / 30.0, T});
  }
  TrajectorySpline spline = TrajectorySpline::fit(poses, 10);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 3);
  for (const ImuSample& s : seq.measured) {
    CHECK(s.gyro.norm() < 1e-7);
    CHECK((s.accel - Vec3(0, 0, 9.81)).norm() < 1e-6);
  }
}

TEST_CASE("stationary gyro variance matches the white noise density") {
  auto poses = static_poses(1501, RigidTransform::Identity());
  TrajectorySpline spline = TrajectorySpline::fit(poses, 10);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  prof.imu.sigma_g = 12.0e-4;
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 99);
  REQUIRE(seq.measured.size() >= 10000);
  double sum = 0.0, sumsq = 0.0;
  size_t n = 0;
  for (const ImuSample& s : seq.measured) {
    for (int a = 0; a < 3; ++a) {
      sum += s.gyro[a];
      sumsq += s.gyro[a] * s.gyro[a];
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  const double expect = 12.0e-4 * 12.0e-4 * 200.0;
  CHECK(std::abs(var - expect) < 0.10 * expect);
}

TEST_CASE("biases random-walk with the configured drift density") {
  auto poses = static_poses(1501, RigidTransform::Identity());
  TrajectorySpline spline = TrajectorySpline::fit(poses, 10);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  prof.imu.sigma_bg = 4.0e-6;
  // accumulate many independent walks and compare the terminal variance
  double sumsq = 0.0;
  size_t n = 0;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    ImuSequence seq = sample_imu(spline, kGravityE, prof, seed);
    const double t = 50.0;
    const size_t j = static_cast<size_t>(t * 200);
    REQUIRE(j < seq.bias_g.size());
    for (int a = 0; a < 3; ++a) {
      sumsq += seq.bias_g[j][a] * seq.bias_g[j][a];
      ++n;
    }
    CHECK(seq.bias_g[0].norm() == 0.0);  // init sigma zeroed
  }
  const double expect = 4.0e-6 * 4.0e-6 * 50.0;
  CHECK(std::abs(sumsq / n - expect) < 0.35 * expect);
}

TEST_CASE("real profile applies the static accelerometer bias") {
  auto poses = static_poses(61, RigidTransform::Identity());
  TrajectorySpline spline = TrajectorySpline::fit(poses, 10);
  NoiseProfile prof = noiseless(make_profile("real"));
  prof.static_accel_bias = make_profile("real").static_accel_bias;
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 3);
  const Vec3 expect = Vec3(0, 0, 9.81) + Vec3(0.060, 0.258, 0.126);
  for (const ImuSample& s : seq.measured) {
    CHECK((s.accel - expect).norm() < 1e-9);
  }
  CHECK((seq.bias_a[0] - Vec3(0.060, 0.258, 0.126)).norm() < 1e-12);
}

TEST_CASE("saturation clips each channel") {
  std::vector<PoseKnot> poses;
  for (int k = 0; k < 61; ++k) {
    const double t = k / 30.0;
    RigidTransform T;
    T.rotation = exp_rotation(Vec3(0, 0, 9.5 * t));  // 9.5 rad/s spin
    poses.push_back({t, T});
  }
  TrajectorySpline spline = TrajectorySpline::fit(poses, 2);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 3);
  double peak = 0.0;
  for (const ImuSample& s : seq.measured) {
    peak = std::max(peak, s.gyro.cwiseAbs().maxCoeff());
  }
  CHECK(peak <= 7.8 + 1e-12);
  CHECK(peak == doctest::Approx(7.8));
}

TEST_CASE("intensity noise statistics match sigma") {
  RenderedFrame f;
  f.intensity = ImageF(1000, 1000, 128.f);
  f.depth = ImageF(1000, 1000, 0.f);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  prof.sigma_intensity = 4.0;
  const Intrinsics K = default_intrinsics(1000, 1000);
  add_image_noise(&f, prof, K, 17);
  double sum = 0.0, sumsq = 0.0;
  for (float v : f.intensity.data) {
    sum += v - 128.0;
    sumsq += (v - 128.0) * (v - 128.0);
  }
  const double n = f.intensity.data.size();
  const double std = std::sqrt(sumsq / n - (sum / n) * (sum / n));
  CHECK(std::abs(std - 4.0) < 0.04);
  CHECK(std::abs(sum / n) < 0.02);
}

TEST_CASE("depth noise grows quadratically with distance") {
  const Intrinsics K = default_intrinsics(500, 400);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  prof.sigma_disparity = 5.5;
  auto measure = [&](float d, uint64_t seed) {
    RenderedFrame f;
    f.intensity = ImageF(500, 400, 100.f);
    f.depth = ImageF(500, 400, d);
    add_image_noise(&f, prof, K, seed);
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (float v : f.depth.data) {
      if (v <= 0.f) continue;
      sum += v;
      sumsq += double(v) * v;
      ++n;
    }
    const double mean = sum / n;
    return std::sqrt(sumsq / n - mean * mean);
  };
  const double s2 = measure(2.f, 5);
  const double s4 = measure(4.f, 6);
  CHECK(std::abs(s4 / s2 - 4.0) < 0.15 * 4.0);
}

TEST_CASE("zero-noise profile leaves frames bitwise untouched") {
  Scenario sc = make_scenario("room");
  const Intrinsics K = default_intrinsics(80, 60);
  RenderedFrame f = render_frame(sc.scene, K, sc.poses[100].T);
  RenderedFrame g = f;
  add_image_noise(&g, noiseless(make_profile("synthetic")), K, 123);
  CHECK(g.intensity.data == f.intensity.data);
  CHECK(g.depth.data == f.depth.data);
}

TEST_CASE("noise is seed-deterministic and seed-sensitive") {
  auto poses = static_poses(61, RigidTransform::Identity());
  TrajectorySpline spline = TrajectorySpline::fit(poses, 10);
  NoiseProfile prof = make_profile("synthetic");
  ImuSequence a = sample_imu(spline, kGravityE, prof, 42);
  ImuSequence b = sample_imu(spline, kGravityE, prof, 42);
  ImuSequence c = sample_imu(spline, kGravityE, prof, 43);
  REQUIRE(a.measured.size() == b.measured.size());
  bool differs = false;
  for (size_t i = 0; i < a.measured.size(); ++i) {
    CHECK(a.measured[i].gyro == b.measured[i].gyro);
    CHECK(a.measured[i].accel == b.measured[i].accel);
    differs = differs || a.measured[i].gyro != c.measured[i].gyro;
  }
  CHECK(differs);
  CHECK(substream(42, 0) != substream(42, 1));
  CHECK(substream(42, 0) != substream(43, 0));
}

TEST_CASE("integrating the synthetic imu reproduces the spline") {
  Scenario sc = make_scenario("room");
  TrajectorySpline spline = TrajectorySpline::fit(sc.poses, 10);
  NoiseProfile prof = noiseless(make_profile("synthetic"));
  ImuSequence seq = sample_imu(spline, kGravityE, prof, 0);

  for (double t0 : {2.0, 5.0, 11.0, 20.0}) {
    CAPTURE(t0);
    const double t1 = t0 + 1.0;
    State x0;
    {
      const RigidTransform T = spline.pose(t0);
      x0.p_WC = T.translation;
      x0.q_WC = T.rotation;
      x0.v_IIS = spline.velocityWorld(t0);  // scene frame is gravity-aligned
      x0.q_IW = Quat::Identity();
    }
    Preintegration pre(Vec3::Zero(), Vec3::Zero(), prof.imu);
    pre.integrateWindow(seq.measured, t0, t1);
    CHECK(pre.deltaT() == doctest::Approx(1.0).epsilon(1e-6));
    const State x1 = predict_state(x0, pre, RigidTransform::Identity());
    const RigidTransform T1 = spline.pose(t1);
    CHECK((x1.p_WC - T1.translation).norm() < 1e-4);
    CHECK(x1.q_WC.angularDistance(T1.rotation) < 1e-4);
    CHECK((x1.v_IIS - spline.velocityWorld(t1)).norm() < 1e-3);
  }
}

TEST_CASE("warped rendered pairs stay photometrically consistent") {
  Scenario sc = make_scenario("room");
  TrajectorySpline spline = TrajectorySpline::fit(sc.poses, 10);
  const Intrinsics K = default_intrinsics(160, 120);
  const double ta = 10.0, tb = 10.1;
  const RigidTransform T_A = spline.pose(ta);
  const RigidTransform T_B = spline.pose(tb);
  RenderedFrame fa = render_frame(sc.scene, K, T_A);
  RenderedFrame fb = render_frame(sc.scene, K, T_B);

  double sumsq = 0.0;
  size_t n = 0;
  for (int v = 1; v < K.height - 1; ++v) {
    for (int u = 1; u < K.width - 1; ++u) {
      const double d = fb.depth.at(u, v);
      if (d <= 0.0) continue;
      PointResidual r = photometric_residual(
          fa.intensity, K, T_A, T_B, Vec2(u, v), d, fb.intensity.at(u, v));
      if (!r.valid) continue;
      sumsq += r.e * r.e;
      ++n;
    }
  }
  REQUIRE(n > size_t(0.5 * K.width * K.height));
  CHECK(std::sqrt(sumsq / n) < 1.0);
}

TEST_CASE("simulate_sequence writes a complete reproducible directory") {
  Scenario sc;
  sc.name = "static_plane";
  Primitive p;
  p.kind = Primitive::kPlane;
  p.n = Vec3::UnitZ();
  p.c = 2.0;
  p.texture.kind = TextureKind::kSine;
  p.texture.base = 120;
  p.texture.amplitude = 40;
  p.texture.scale = 0.8;
  sc.scene.primitives().push_back(p);
  sc.poses = static_poses(10, RigidTransform::Identity());
  sc.duration = 9 / 30.0;

  SimulateOptions opt;
  opt.K = default_intrinsics(64, 48);
  opt.profile = make_profile("synthetic");
  opt.seed = 7;

  TempDir d1("a"), d2("b"), d3("c");
  simulate_sequence(sc, opt, d1.path.string());
  simulate_sequence(sc, opt, d2.path.string());
  SimulateOptions opt3 = opt;
  opt3.seed = 8;
  simulate_sequence(sc, opt3, d3.path.string());

  for (int k = 0; k < 10; ++k) {
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%06d.png", k);
    CHECK(fs::exists(d1.path / "intensity" / name));
    CHECK(fs::exists(d1.path / "depth" / name));
  }
  CHECK_FALSE(fs::exists(d1.path / "intensity" / "frame_000010.png"));

  const auto imu = read_imu_csv((d1.path / "imu.csv").string());
  CHECK(imu.size() == 61);  // floor(0.3 s * 200 Hz) + 1

  const auto gt = read_trajectory_tum((d1.path / "groundtruth.txt").string());
  REQUIRE(gt.size() == 10);
  for (const PoseKnot& g : gt) {
    CHECK(g.T.translation.norm() < 1e-8);
    CHECK(g.T.rotation.angularDistance(Quat::Identity()) < 1e-7);
  }
  CHECK(read_state_csv((d1.path / "gt_state.csv").string()).size() == 10);
  Config cfg = Config::load((d1.path / "config.txt").string());
  CHECK(cfg.str("scenario", "") == "static_plane");
  CHECK(cfg.integer("camera.width", 0) == 64);

  // byte-identical across runs with the same seed
  size_t checked = 0;
  for (const auto& entry : fs::recursive_directory_iterator(d1.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), d1.path);
    CHECK(slurp(entry.path()) == slurp(d2.path / rel));
    ++checked;
  }
  CHECK(checked >= 24);
  CHECK(slurp(d1.path / "imu.csv") != slurp(d3.path / "imu.csv"));
  CHECK(slurp(d1.path / "intensity" / "frame_000000.png") !=
        slurp(d3.path / "intensity" / "frame_000000.png"));
}

TEST_CASE("simulated room sequence is anchored at the first camera pose") {
  Scenario sc = make_scenario("room");
  SimulateOptions opt;
  opt.K = default_intrinsics(80, 60);
  opt.profile = noiseless(make_profile("synthetic"));
  opt.seed = 1;
  opt.duration = 1.0;
  TempDir dir("room");
  simulate_sequence(sc, opt, dir.path.string());

  const auto gt = read_trajectory_tum((dir.path / "groundtruth.txt").string());
  REQUIRE(gt.size() == 31);
  CHECK(gt.front().T.translation.norm() < 1e-8);
  CHECK(gt.front().T.rotation.angularDistance(Quat::Identity()) < 1e-7);

  ImageF depth = read_depth_png((dir.path / "depth" / "frame_000000.png").string());
  size_t valid = 0;
  for (float v : depth.data) valid += v > 0.f;
  CHECK(valid > 0.9 * depth.data.size());

  ImageF inten =
      read_intensity_png((dir.path / "intensity" / "frame_000000.png").string());
  float lo = 255.f, hi = 0.f;
  for (float v : inten.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo > 30.f);
}

TEST_SUITE_END();
