#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rgbdi/imu.hpp"
#include "rgbdi/io.hpp"
#include "rgbdi/scene.hpp"
#include "rgbdi/spline.hpp"

namespace rgbdi {

// standard normals built on raw mt19937_64 bits so streams are bit-stable
// across platforms and library versions
class GaussianRng {
 public:
  explicit GaussianRng(uint64_t seed) : engine_(seed) {}

  double uniform();  // (0, 1]
  double normal();
  Vec3 normal3();

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// decorrelated child seed for an independent noise stream
uint64_t substream(uint64_t seed, uint64_t index);

struct NoiseProfile {
  std::string name = "synthetic";
  ImuParams imu;
  Vec3 static_accel_bias = Vec3::Zero();  // real-world IMUs only
  double init_sigma_bg = 0.03;            // initial bias draw, per axis
  double init_sigma_ba = 0.1;
  double sigma_intensity = 4.0;
  double sigma_disparity = 5.5;           // quoted at the native resolution
  double disparity_scaling = 11.0;        // effective sigma = disp / scaling
  double baseline_factor_m = 0.075;       // f_b = baseline * fx
};

// "synthetic" or "real"
NoiseProfile make_profile(const std::string& name);
NoiseProfile noiseless(NoiseProfile prof);

struct ImuSequence {
  std::vector<ImuSample> measured;
  std::vector<Vec3> bias_g;  // true biases at each sample time
  std::vector<Vec3> bias_a;
};

// measurements of a body-mounted IMU following the spline; gravity_W is the
// gravity acceleration in the spline's reference frame
ImuSequence sample_imu(const TrajectorySpline& spline, const Vec3& gravity_W,
                       const NoiseProfile& prof, uint64_t seed);

// intensity noise everywhere, disparity-domain depth noise on valid pixels
void add_image_noise(RenderedFrame* frame, const NoiseProfile& prof,
                     const Intrinsics& K, uint64_t seed);

// largest divisor of the pose count compatible with `requested` that keeps
// at least 4 spline knots including the final pose
int choose_spline_subsample(size_t n_poses, int requested);

struct SimulateOptions {
  Intrinsics K;
  NoiseProfile profile;
  uint64_t seed = 0;
  double duration = -1.0;  // truncate the scenario when positive
  int spline_subsample = 10;
};

// writes intensity/frame_%06d.png, depth/frame_%06d.png, imu.csv,
// groundtruth.txt (first spline pose as origin), gt_state.csv, config.txt
void simulate_sequence(const Scenario& scenario, const SimulateOptions& opt,
                       const std::string& out_dir);

}  // namespace rgbdi
