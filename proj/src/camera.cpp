#include "rgbdi/camera.hpp"

#include <cmath>

namespace rgbdi {

namespace {

inline bool valid_depth(float d) {
  return d >= static_cast<float>(kMinDepth) && d <= static_cast<float>(kMaxDepth);
}

constexpr float kDepthGap = 0.1f;

}  // namespace

Intrinsics Intrinsics::level(int l) const {
  Intrinsics out = *this;
  for (int i = 0; i < l; ++i) {
    out.fx *= 0.5;
    out.fy *= 0.5;
    out.cx = (out.cx - 0.5) * 0.5;
    out.cy = (out.cy - 0.5) * 0.5;
    out.width /= 2;
    out.height /= 2;
  }
  return out;
}

Intrinsics default_intrinsics(int width, int height) {
  Intrinsics K;
  K.width = width;
  K.height = height;
  K.fx = 525.0 * width / 640.0;
  K.fy = K.fx;
  K.cx = (width - 1) / 2.0;
  K.cy = (height - 1) / 2.0;
  return K;
}

double bilinear(const ImageF& img, double u, double v) {
  const int x = static_cast<int>(std::floor(u));
  const int y = static_cast<int>(std::floor(v));
  const double a = u - x, b = v - y;
  const double i00 = img.at(x, y), i10 = img.at(x + 1, y);
  const double i01 = img.at(x, y + 1), i11 = img.at(x + 1, y + 1);
  return (1.0 - b) * ((1.0 - a) * i00 + a * i10) +
         b * ((1.0 - a) * i01 + a * i11);
}

double bilinear_with_gradient(const ImageF& img, double u, double v,
                              double* du, double* dv) {
  const int x = static_cast<int>(std::floor(u));
  const int y = static_cast<int>(std::floor(v));
  const double a = u - x, b = v - y;
  const double i00 = img.at(x, y), i10 = img.at(x + 1, y);
  const double i01 = img.at(x, y + 1), i11 = img.at(x + 1, y + 1);
  *du = (1.0 - b) * (i10 - i00) + b * (i11 - i01);
  *dv = (1.0 - a) * (i01 - i00) + a * (i11 - i10);
  return (1.0 - b) * ((1.0 - a) * i00 + a * i10) +
         b * ((1.0 - a) * i01 + a * i11);
}

bool depth_patch_valid(const ImageF& depth, double u, double v) {
  const int x = static_cast<int>(std::floor(u));
  const int y = static_cast<int>(std::floor(v));
  return valid_depth(depth.at(x, y)) && valid_depth(depth.at(x + 1, y)) &&
         valid_depth(depth.at(x, y + 1)) && valid_depth(depth.at(x + 1, y + 1));
}

ImageF downsample_intensity(const ImageF& img) {
  ImageF out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = 0.25f * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                              img.at(2 * x, 2 * y + 1) +
                              img.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

ImageF downsample_depth(const ImageF& depth) {
  ImageF out(depth.width / 2, depth.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      float s[4] = {depth.at(2 * x, 2 * y), depth.at(2 * x + 1, 2 * y),
                    depth.at(2 * x, 2 * y + 1), depth.at(2 * x + 1, 2 * y + 1)};
      float mn = 0.f;
      int n = 0;
      for (float d : s) {
        if (!valid_depth(d)) continue;
        mn = (n == 0) ? d : std::min(mn, d);
        ++n;
      }
      if (n == 0) {
        out.at(x, y) = 0.f;
        continue;
      }
      float sum = 0.f;
      int m = 0;
      for (float d : s) {
        if (valid_depth(d) && d - mn <= kDepthGap) {
          sum += d;
          ++m;
        }
      }
      out.at(x, y) = sum / m;
    }
  }
  return out;
}

ImageF smooth_depth(const ImageF& depth, double fb, double sigma_disp) {
  constexpr int kRadius = 2;
  constexpr double kSpatialSigma = 1.5;
  if (fb <= 0.0 || sigma_disp <= 0.0) return depth;

  float spatial[2 * kRadius + 1][2 * kRadius + 1];
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      spatial[dy + kRadius][dx + kRadius] = static_cast<float>(
          std::exp(-0.5 * (dx * dx + dy * dy) / (kSpatialSigma * kSpatialSigma)));
    }
  }
  // steps beyond a few sigma are treated as real structure
  const double inv_2var = 0.5 / (sigma_disp * sigma_disp * 9.0);

  ImageF out(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float dc = depth.at(x, y);
      if (!valid_depth(dc)) continue;
      const double disp_c = fb / dc;
      double wsum = 0.0, dsum = 0.0;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= depth.height) continue;
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= depth.width) continue;
          const float dn = depth.at(xx, yy);
          if (!valid_depth(dn)) continue;
          const double disp = fb / dn;
          const double diff = disp - disp_c;
          const double w = spatial[dy + kRadius][dx + kRadius] *
                           std::exp(-diff * diff * inv_2var);
          wsum += w;
          dsum += w * disp;
        }
      }
      out.at(x, y) = static_cast<float>(fb / (dsum / wsum));
    }
  }
  return out;
}

ImageF blur_intensity(const ImageF& img) {
  ImageF tmp(img.width, img.height);
  ImageF out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int xl = std::max(x - 1, 0);
      const int xr = std::min(x + 1, img.width - 1);
      tmp.at(x, y) = 0.25f * (img.at(xl, y) + 2.f * img.at(x, y) +
                              img.at(xr, y));
    }
  }
  for (int y = 0; y < img.height; ++y) {
    const int yu = std::max(y - 1, 0);
    const int yd = std::min(y + 1, img.height - 1);
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) = 0.25f * (tmp.at(x, yu) + 2.f * tmp.at(x, y) +
                              tmp.at(x, yd));
    }
  }
  return out;
}

ImageV3 compute_vertex_map(const ImageF& depth, const Intrinsics& K) {
  ImageV3 out(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float d = depth.at(x, y);
      if (!valid_depth(d)) continue;
      out.at(x, y) = K.backproject(Vec2(x, y), d).cast<float>();
    }
  }
  return out;
}

ImageV3 compute_normal_map(const ImageV3& v) {
  ImageV3 out(v.width, v.height);
  for (int y = 1; y + 1 < v.height; ++y) {
    for (int x = 1; x + 1 < v.width; ++x) {
      const Vec3f& c = v.at(x, y);
      const Vec3f& xp = v.at(x + 1, y);
      const Vec3f& xm = v.at(x - 1, y);
      const Vec3f& yp = v.at(x, y + 1);
      const Vec3f& ym = v.at(x, y - 1);
      if (c.z() <= 0.f || xp.z() <= 0.f || xm.z() <= 0.f || yp.z() <= 0.f ||
          ym.z() <= 0.f) {
        continue;
      }
      if (std::abs(xp.z() - c.z()) > kDepthGap ||
          std::abs(xm.z() - c.z()) > kDepthGap ||
          std::abs(yp.z() - c.z()) > kDepthGap ||
          std::abs(ym.z() - c.z()) > kDepthGap) {
        continue;
      }
      Vec3f n = (xp - xm).cross(yp - ym);
      const float len = n.norm();
      if (len < 1e-12f) continue;
      n /= len;
      if (n.dot(c) > 0.f) n = -n;
      out.at(x, y) = n;
    }
  }
  return out;
}

FramePyramid build_pyramid(const ImageF& intensity, const ImageF& depth,
                           const Intrinsics& K, int levels) {
  FramePyramid p;
  p.intensity.push_back(intensity);
  p.depth.push_back(depth);
  p.K.push_back(K);
  for (int l = 1; l < levels; ++l) {
    p.intensity.push_back(downsample_intensity(p.intensity.back()));
    p.depth.push_back(downsample_depth(p.depth.back()));
    p.K.push_back(K.level(l));
  }
  for (int l = 0; l < levels; ++l) {
    p.vertices.push_back(compute_vertex_map(p.depth[l], p.K[l]));
    p.normals.push_back(compute_normal_map(p.vertices[l]));
  }
  return p;
}

}  // namespace rgbdi
