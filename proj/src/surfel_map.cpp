#include "rgbdi/surfel_map.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace rgbdi {

SurfelMap::SurfelMap(const MapConfig& cfg) : cfg_(cfg) {}

std::vector<std::uint8_t> SurfelMap::activeMask(int current_frame) const {
  std::vector<std::uint8_t> mask(surfels_.size());
  for (std::size_t i = 0; i < surfels_.size(); ++i)
    mask[i] = isActive(surfels_[i], current_frame) ? 1 : 0;
  return mask;
}

void SurfelMap::fuse(const ImageF& intensity, const ImageF& depth,
                     const ImageV3& vertices, const ImageV3& normals,
                     const Intrinsics& K, const RigidTransform& T_WC,
                     int frame_index) {
  const RigidTransform T_CW = T_WC.inverse();
  const Mat3 R_WC = T_WC.rotationMatrix();

  // single-pixel splat index map of the active surfels, nearest depth wins;
  // a surfel born from a pixel projects back onto exactly that pixel, which
  // makes re-fusing the same frame associate instead of duplicating
  const int npix = K.width * K.height;
  std::vector<int> index(npix, -1);
  std::vector<float> zbuf(npix, std::numeric_limits<float>::max());
  for (std::size_t i = 0; i < surfels_.size(); ++i) {
    if (!isActive(surfels_[i], frame_index)) continue;
    const Vec3 p_C = T_CW * surfels_[i].position;
    if (p_C.z() < kMinDepth || p_C.z() > kMaxDepth) continue;
    const Vec2 uv = K.project(p_C);
    const int u = static_cast<int>(std::lround(uv.x()));
    const int v = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || v < 0 || u >= K.width || v >= K.height) continue;
    const int at = v * K.width + u;
    if (p_C.z() < zbuf[at]) {
      zbuf[at] = static_cast<float>(p_C.z());
      index[at] = static_cast<int>(i);
    }
  }

  const double cos_gate = std::cos(cfg_.fuse_max_angle_deg * M_PI / 180.0);
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const double d = depth.at(u, v);
      if (d < kMinDepth || d > kMaxDepth) continue;
      const Vec3f n_Cf = normals.at(u, v);
      if (n_Cf.squaredNorm() < 0.5f) continue;
      const Vec3 p_W = T_WC * vertices.at(u, v).cast<double>();
      const Vec3 n_W = (R_WC * n_Cf.cast<double>()).normalized();
      const double gray = intensity.at(u, v);

      const int idx = index[v * K.width + u];
      if (idx >= 0) {
        Surfel& s = surfels_[idx];
        if ((s.position - p_W).norm() <= cfg_.fuse_max_dist &&
            s.normal.dot(n_W) >= cos_gate) {
          const double c = s.confidence;
          const double w = 1.0 / (c + 1.0);
          s.position = (c * s.position + p_W) * w;
          s.normal = (c * s.normal + n_W).normalized();
          s.intensity = (c * s.intensity + gray) * w;
          s.radius = (c * s.radius + cfg_.radius_scale * d / K.fx) * w;
          s.confidence = c + 1.0;
          s.last_seen = frame_index;
          continue;
        }
      }

      Surfel s;
      s.position = p_W;
      s.normal = n_W;
      s.radius = cfg_.radius_scale * d / K.fx;
      s.confidence = 1.0;
      s.last_seen = frame_index;
      s.intensity = gray;
      surfels_.push_back(s);
    }
  }
}

ModelRender SurfelMap::renderModel(const RigidTransform& T_WC,
                                   const Intrinsics& K, int current_frame,
                                   MapSegment segment) const {
  ModelRender out;
  out.intensity = ImageF(K.width, K.height, 0.f);
  out.depth = ImageF(K.width, K.height, 0.f);
  out.vertices_W = ImageV3(K.width, K.height);
  out.normals_W = ImageV3(K.width, K.height);

  const RigidTransform T_CW = T_WC.inverse();
  std::vector<float> zbuf(static_cast<std::size_t>(K.width) * K.height,
                          std::numeric_limits<float>::max());

  for (const Surfel& s : surfels_) {
    if (segment != MapSegment::kAll) {
      const bool active = isActive(s, current_frame);
      if (segment == MapSegment::kActive && !active) continue;
      if (segment == MapSegment::kInactive && active) continue;
    }
    const Vec3 p_C = T_CW * s.position;
    if (p_C.z() < kMinDepth || p_C.z() > kMaxDepth) continue;
    const Vec2 uv = K.project(p_C);
    const double rpx = std::clamp(s.radius * K.fx / p_C.z(),
                                  cfg_.min_splat_px, cfg_.max_splat_px);
    const int u0 = static_cast<int>(std::ceil(uv.x() - rpx));
    const int u1 = static_cast<int>(std::floor(uv.x() + rpx));
    const int v0 = static_cast<int>(std::ceil(uv.y() - rpx));
    const int v1 = static_cast<int>(std::floor(uv.y() + rpx));
    const float z = static_cast<float>(p_C.z());
    const int un = static_cast<int>(std::lround(uv.x()));
    const int vn = static_cast<int>(std::lround(uv.y()));
    for (int v = std::max(std::min(v0, vn), 0);
         v <= std::min(std::max(v1, vn), K.height - 1); ++v) {
      for (int u = std::max(std::min(u0, un), 0);
           u <= std::min(std::max(u1, un), K.width - 1); ++u) {
        const double du = u - uv.x();
        const double dv = v - uv.y();
        // the nearest pixel is always covered so a surfel cannot vanish
        // between pixel centers
        if ((u != un || v != vn) && du * du + dv * dv > rpx * rpx) continue;
        const std::size_t at = static_cast<std::size_t>(v) * K.width + u;
        if (z >= zbuf[at]) continue;
        zbuf[at] = z;
        out.depth.at(u, v) = z;
        out.intensity.at(u, v) = static_cast<float>(s.intensity);
        out.vertices_W.at(u, v) = s.position.cast<float>();
        out.normals_W.at(u, v) = s.normal.cast<float>();
      }
    }
  }
  return out;
}

void SurfelMap::reactivate(int up_to_frame, int current_frame) {
  for (Surfel& s : surfels_)
    if (s.last_seen <= up_to_frame) s.last_seen = current_frame;
}

void SurfelMap::saveAscii(std::ostream& os) const {
  for (const Surfel& s : surfels_) {
    os << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z()
       << ' ' << s.normal.x() << ' ' << s.normal.y() << ' ' << s.normal.z()
       << ' ' << s.radius << ' ' << s.confidence << ' ' << s.intensity << '\n';
  }
}

}  // namespace rgbdi
