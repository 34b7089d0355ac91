#pragma once

#include <vector>

#include "rgbdi/types.hpp"

namespace rgbdi {

constexpr double kMinDepth = 0.05;
constexpr double kMaxDepth = 10.0;

struct Intrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  /// Intrinsics after halving the resolution l times. Pixel centers sit at
  /// integer coordinates, so the principal point maps as c' = (c - 0.5) / 2.
  Intrinsics level(int l) const;

  Vec2 project(const Vec3& p) const {
    return Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
  }

  Vec3 backproject(const Vec2& uv, double depth) const {
    return Vec3(depth * (uv.x() - cx) / fx, depth * (uv.y() - cy) / fy, depth);
  }

  bool inBounds(const Vec2& uv, double margin) const {
    return uv.x() >= margin && uv.y() >= margin &&
           uv.x() <= width - 1 - margin && uv.y() <= height - 1 - margin;
  }
};

/// Default pinhole model used throughout: 525 px focal length at VGA,
/// scaled with the image width, principal point at the image center.
Intrinsics default_intrinsics(int width, int height);

struct ImageF {
  int width = 0, height = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

struct ImageV3 {
  int width = 0, height = 0;
  std::vector<Vec3f> data;

  ImageV3() = default;
  ImageV3(int w, int h)
      : width(w), height(h),
        data(static_cast<size_t>(w) * h, Vec3f::Zero()) {}

  Vec3f& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const Vec3f& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

/// Bilinear sample at (u, v); no bounds check, caller clips with margin 1.
double bilinear(const ImageF& img, double u, double v);

/// Bilinear sample together with the exact derivative of the interpolant.
double bilinear_with_gradient(const ImageF& img, double u, double v,
                              double* du, double* dv);

/// True if the four taps around (u, v) are all valid depths.
bool depth_patch_valid(const ImageF& depth, double u, double v);

ImageF downsample_intensity(const ImageF& img);

/// Half-size depth. A 2x2 block averages only the samples within 0.1 m of
/// the block minimum so that foreground and background never blend.
ImageF downsample_depth(const ImageF& depth);

/// Edge-preserving 5x5 smoothing in the disparity domain, where sensor noise
/// is homoscedastic: range weights use sigma_disp (pixels of disparity at
/// focal-times-baseline fb) so steps large against the noise floor survive.
/// Planar surfaces pass through unchanged since their disparity is linear in
/// pixel coordinates. Invalid depths stay invalid.
ImageF smooth_depth(const ImageF& depth, double fb, double sigma_disp);

/// 3x3 binomial blur. Sub-pixel sampling of a raw noisy image averages taps
/// and shrinks the apparent residual, which biases photometric alignment
/// toward half-pixel offsets; blurring both frames evens the field.
ImageF blur_intensity(const ImageF& img);

ImageV3 compute_vertex_map(const ImageF& depth, const Intrinsics& K);

/// Central-difference normals in the camera frame, facing the camera.
/// Invalid (zero) where a neighbor is missing or depth jumps by >0.1 m.
ImageV3 compute_normal_map(const ImageV3& vertices);

struct FramePyramid {
  std::vector<ImageF> intensity;
  std::vector<ImageF> depth;
  std::vector<ImageV3> vertices;
  std::vector<ImageV3> normals;
  std::vector<Intrinsics> K;

  int levels() const { return static_cast<int>(intensity.size()); }
};

FramePyramid build_pyramid(const ImageF& intensity, const ImageF& depth,
                           const Intrinsics& K, int levels);

}  // namespace rgbdi
