#pragma once

#include <map>
#include <string>
#include <vector>

#include "rgbdi/camera.hpp"
#include "rgbdi/imu.hpp"
#include "rgbdi/spline.hpp"

namespace rgbdi {

inline constexpr double kDepthPngScale = 5000.0;  // units per meter

// temp file + rename so partially written outputs never appear
void atomic_write(const std::string& path, const std::string& contents);

// 8-bit grayscale; values rounded and clamped to [0, 255]
void write_intensity_png(const std::string& path, const ImageF& img);
ImageF read_intensity_png(const std::string& path);

// 16-bit grayscale at kDepthPngScale units per meter, 0 = invalid
void write_depth_png(const std::string& path, const ImageF& depth_m);
ImageF read_depth_png(const std::string& path);

// "timestamp tx ty tz qx qy qz qw" per line, '#' comments
void write_trajectory_tum(const std::string& path,
                          const std::vector<PoseKnot>& poses);
std::vector<PoseKnot> read_trajectory_tum(const std::string& path);

void write_imu_csv(const std::string& path,
                   const std::vector<ImuSample>& samples);
std::vector<ImuSample> read_imu_csv(const std::string& path);

// velocity (world frame) and bias trajectories beside the pose file
struct StateRecord {
  double t = 0.0;
  Vec3 v_W = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
};

void write_state_csv(const std::string& path,
                     const std::vector<StateRecord>& states);
std::vector<StateRecord> read_state_csv(const std::string& path);

// flat "key = value" entries grouped under [section] headers; keys are
// addressed as "section.key"
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "");
  static Config load(const std::string& path);

  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  double num(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::string str(const std::string& key, const std::string& fallback) const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) {
    set(key, std::string(value));
  }
  void set(const std::string& key, double value);
  void set(const std::string& key, int value);
  void set(const std::string& key, bool value);

  // overlay every entry of `other`, later layers win
  void update(const Config& other) {
    for (const auto& [k, v] : other.entries()) kv_[k] = v;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace rgbdi
