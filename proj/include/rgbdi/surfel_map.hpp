#pragma once

#include <iosfwd>
#include <vector>

#include "rgbdi/camera.hpp"
#include "rgbdi/manifold.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

// oriented disc, the dense map primitive
struct Surfel {
  Vec3 position = Vec3::Zero();   // world frame
  Vec3 normal = Vec3::UnitZ();    // world frame, unit
  double radius = 0.0;            // m
  double confidence = 0.0;
  int last_seen = 0;              // frame index
  double intensity = 0.0;
};

struct MapConfig {
  double fuse_max_dist = 0.05;      // m
  double fuse_max_angle_deg = 20.0;
  int inactive_after = 200;         // frames without observation
  double radius_scale = 1.41421356237309515;  // surfel radius = scale * d / fx
  double min_splat_px = 0.5;
  double max_splat_px = 3.0;
};

enum class MapSegment { kActive, kInactive, kAll };

// splatted prediction of the map from a camera pose; vertices/normals are in
// the world frame so they can feed point-to-plane association directly
struct ModelRender {
  ImageF intensity;
  ImageF depth;
  ImageV3 vertices_W;
  ImageV3 normals_W;
};

class SurfelMap {
 public:
  explicit SurfelMap(const MapConfig& cfg = MapConfig());

  const MapConfig& config() const { return cfg_; }
  std::size_t size() const { return surfels_.size(); }
  const std::vector<Surfel>& surfels() const { return surfels_; }
  std::vector<Surfel>& surfels() { return surfels_; }

  // projective association against the active map followed by
  // confidence-weighted update or insertion
  void fuse(const ImageF& intensity, const ImageF& depth,
            const ImageV3& vertices, const ImageV3& normals,
            const Intrinsics& K, const RigidTransform& T_WC, int frame_index);

  bool isActive(const Surfel& s, int current_frame) const {
    return current_frame - s.last_seen <= cfg_.inactive_after;
  }
  std::vector<std::uint8_t> activeMask(int current_frame) const;

  ModelRender renderModel(const RigidTransform& T_WC, const Intrinsics& K,
                          int current_frame,
                          MapSegment segment = MapSegment::kActive) const;

  // marks every surfel seen no later than `up_to_frame` as freshly observed,
  // pulling it back into the active segment after a loop closure
  void reactivate(int up_to_frame, int current_frame);

  void saveAscii(std::ostream& os) const;

 private:
  MapConfig cfg_;
  std::vector<Surfel> surfels_;
};

}  // namespace rgbdi
