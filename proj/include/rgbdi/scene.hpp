#pragma once

#include <string>
#include <vector>

#include "rgbdi/camera.hpp"
#include "rgbdi/manifold.hpp"
#include "rgbdi/spline.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

enum class TextureKind { kUniform, kRamp, kChecker, kSine };

struct Texture {
  TextureKind kind = TextureKind::kUniform;
  double base = 128.0;
  double amplitude = 0.0;
  // kRamp: base + amplitude * dir.p ; kSine: base + amplitude * product of
  // two sinusoids along dir/dir2 ; kChecker: parity of floor(p/scale)
  Vec3 dir = Vec3::UnitX();
  Vec3 dir2 = Vec3::UnitY();
  double scale = 1.0;
  double phase = 0.0;
  bool low_texture = false;

  double intensity(const Vec3& p_W) const;
};

struct Primitive {
  enum Kind { kPlane, kBox, kSphere } kind = kPlane;
  // plane n.p = c (infinite)
  Vec3 n = Vec3::UnitZ();
  double c = 0.0;
  // axis-aligned box; a camera inside sees the interior walls
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Zero();
  // sphere
  Vec3 center = Vec3::Zero();
  double radius = 1.0;

  Texture texture;
};

struct RayHit {
  bool valid = false;
  double lambda = 0.0;  // in units of the (unnormalized) direction
  Vec3 point = Vec3::Zero();
  double intensity = 0.0;
  int primitive = -1;
};

struct RenderedFrame {
  ImageF intensity;
  ImageF depth;
};

class SceneModel {
 public:
  std::vector<Primitive>& primitives() { return prims_; }
  const std::vector<Primitive>& primitives() const { return prims_; }

  // nearest hit along origin + lambda * dir for lambda > near; dir need not
  // be unit length, so camera rays with dir_C.z = 1 return depth directly
  RayHit raycast(const Vec3& origin, const Vec3& dir,
                 double near = 0.05) const;

  double nearestSurfaceDistance(const Vec3& p) const;

 private:
  std::vector<Primitive> prims_;
};

// noise-free ray cast of the scene; misses get depth 0 and intensity 0
RenderedFrame render_frame(const SceneModel& scene, const Intrinsics& K,
                           const RigidTransform& T_WC);

// camera pose from eye/target with image-down mapped to world -z
RigidTransform look_at(const Vec3& eye, const Vec3& target);

// a canned scene plus its camera trajectory at the frame rate
struct Scenario {
  std::string name;
  SceneModel scene;
  std::vector<PoseKnot> poses;  // T_EC, scene frame, one per frame
  double frame_rate = 30.0;
  double duration = 0.0;
};

// names: room, room_whitewall, room_whitewall_long, room_fast,
// corridor_loop, corridor_long
Scenario make_scenario(const std::string& name);
std::vector<std::string> scenario_names();

}  // namespace rgbdi
