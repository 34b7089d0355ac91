#include "rgbdi/scene.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace rgbdi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double smootherstep(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

// window [t0, t0 + len], zero velocity and acceleration at both ends
double ramp(double t, double t0, double len) {
  return smootherstep((t - t0) / len);
}

bool intersect_plane(const Vec3& o, const Vec3& d, const Vec3& n, double c,
                     double near, double* lambda) {
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-15) return false;
  const double l = (c - n.dot(o)) / denom;
  if (l < near) return false;
  *lambda = l;
  return true;
}

bool intersect_box(const Vec3& o, const Vec3& d, const Vec3& bmin,
                   const Vec3& bmax, double near, double* lambda) {
  double tnear = -kInf, tfar = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < bmin[a] || o[a] > bmax[a]) return false;
      continue;
    }
    double ta = (bmin[a] - o[a]) / d[a];
    double tb = (bmax[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    tnear = std::max(tnear, ta);
    tfar = std::min(tfar, tb);
  }
  if (tnear > tfar || tfar < near) return false;
  *lambda = tnear >= near ? tnear : tfar;
  return true;
}

bool intersect_sphere(const Vec3& o, const Vec3& d, const Vec3& center,
                      double radius, double near, double* lambda) {
  const Vec3 oc = o - center;
  const double a = d.squaredNorm();
  const double b = 2.0 * d.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  const double l1 = (-b - sq) / (2.0 * a);
  const double l2 = (-b + sq) / (2.0 * a);
  if (l1 >= near) {
    *lambda = l1;
  } else if (l2 >= near) {
    *lambda = l2;
  } else {
    return false;
  }
  return true;
}

}  // namespace

double Texture::intensity(const Vec3& p) const {
  switch (kind) {
    case TextureKind::kUniform:
      return base;
    case TextureKind::kRamp:
      return base + amplitude * dir.dot(p) / scale;
    case TextureKind::kChecker: {
      const long s = static_cast<long>(std::floor(p.x() / scale)) +
                     static_cast<long>(std::floor(p.y() / scale)) +
                     static_cast<long>(std::floor(p.z() / scale));
      return ((s % 2 + 2) % 2 == 0) ? base + amplitude : base - amplitude;
    }
    case TextureKind::kSine: {
      const double two_pi = 2.0 * M_PI;
      const double a = two_pi * dir.dot(p) / scale + phase;
      const double b = two_pi * dir2.dot(p) / (1.37 * scale) + 0.6 * phase + 0.5;
      return base + amplitude * std::sin(a) * std::cos(b);
    }
  }
  return base;
}

RayHit SceneModel::raycast(const Vec3& origin, const Vec3& dir,
                           double near) const {
  RayHit hit;
  double best = kInf;
  for (size_t i = 0; i < prims_.size(); ++i) {
    const Primitive& pr = prims_[i];
    double lambda = 0.0;
    bool ok = false;
    switch (pr.kind) {
      case Primitive::kPlane:
        ok = intersect_plane(origin, dir, pr.n, pr.c, near, &lambda);
        break;
      case Primitive::kBox:
        ok = intersect_box(origin, dir, pr.box_min, pr.box_max, near, &lambda);
        break;
      case Primitive::kSphere:
        ok = intersect_sphere(origin, dir, pr.center, pr.radius, near,
                              &lambda);
        break;
    }
    if (ok && lambda < best) {
      best = lambda;
      hit.valid = true;
      hit.lambda = lambda;
      hit.primitive = static_cast<int>(i);
    }
  }
  if (hit.valid) {
    hit.point = origin + best * dir;
    hit.intensity = prims_[hit.primitive].texture.intensity(hit.point);
  }
  return hit;
}

double SceneModel::nearestSurfaceDistance(const Vec3& p) const {
  double best = kInf;
  for (const Primitive& pr : prims_) {
    double d = kInf;
    switch (pr.kind) {
      case Primitive::kPlane:
        d = std::abs(pr.n.dot(p) - pr.c) / pr.n.norm();
        break;
      case Primitive::kBox: {
        const Vec3 half = 0.5 * (pr.box_max - pr.box_min);
        const Vec3 q =
            (p - 0.5 * (pr.box_min + pr.box_max)).cwiseAbs() - half;
        const double outside = q.cwiseMax(0.0).norm();
        const double inside = std::min(q.maxCoeff(), 0.0);
        d = std::abs(outside + inside);
        break;
      }
      case Primitive::kSphere:
        d = std::abs((p - pr.center).norm() - pr.radius);
        break;
    }
    best = std::min(best, d);
  }
  return best;
}

RenderedFrame render_frame(const SceneModel& scene, const Intrinsics& K,
                           const RigidTransform& T_WC) {
  RenderedFrame out;
  out.intensity = ImageF(K.width, K.height, 0.f);
  out.depth = ImageF(K.width, K.height, 0.f);
  const Mat3 R = T_WC.rotationMatrix();
  const Vec3 origin = T_WC.translation;
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Vec3 dir_C((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const RayHit hit = scene.raycast(origin, R * dir_C, kMinDepth);
      if (!hit.valid) continue;
      out.intensity.at(u, v) = static_cast<float>(hit.intensity);
      if (hit.lambda <= kMaxDepth) {
        out.depth.at(u, v) = static_cast<float>(hit.lambda);
      }
    }
  }
  return out;
}

RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 up(0.0, 0.0, 1.0);
  Vec3 fwd = (target - eye).normalized();
  Vec3 right = fwd.cross(up);
  if (right.squaredNorm() < 1e-12) right = fwd.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = fwd.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = fwd;
  RigidTransform T;
  T.rotation = Quat(R).normalized();
  T.translation = eye;
  return T;
}

namespace {

Texture sine_tex(const Vec3& dir, const Vec3& dir2, double scale, double base,
                 double amp, double phase) {
  Texture t;
  t.kind = TextureKind::kSine;
  t.dir = dir;
  t.dir2 = dir2;
  t.scale = scale;
  t.base = base;
  t.amplitude = amp;
  t.phase = phase;
  return t;
}

Texture uniform_tex(double base) {
  Texture t;
  t.base = base;
  t.low_texture = true;
  return t;
}

Primitive wall(const Vec3& n, double c, const Texture& tex) {
  Primitive p;
  p.kind = Primitive::kPlane;
  p.n = n;
  p.c = c;
  p.texture = tex;
  return p;
}

// 6 axis-aligned walls with sinusoidal textures, z up, floor at z = 0
SceneModel room_shell(const Vec3& bmin, const Vec3& bmax) {
  SceneModel m;
  const Vec3 ey = Vec3::UnitY(), ez = Vec3::UnitZ(), ex = Vec3::UnitX();
  m.primitives().push_back(
      wall(ex, bmax.x(), sine_tex(ey, ez, 1.3, 122, 55, 0.4)));
  m.primitives().push_back(
      wall(ex, bmin.x(), sine_tex(ey, ez, 1.1, 128, 50, 1.7)));
  m.primitives().push_back(
      wall(ey, bmax.y(), sine_tex(ex, ez, 1.4, 118, 52, 2.9)));
  m.primitives().push_back(
      wall(ey, bmin.y(), sine_tex(ex, ez, 1.2, 131, 48, 0.9)));
  m.primitives().push_back(
      wall(ez, bmin.z(), sine_tex(ex, ey, 1.5, 115, 58, 2.2)));
  m.primitives().push_back(
      wall(ez, bmax.z(), sine_tex(ex, ey, 1.6, 126, 45, 3.6)));
  return m;
}

Scenario assemble(const std::string& name, SceneModel scene, double duration,
                  const std::function<Vec3(double)>& eye,
                  const std::function<Vec3(double)>& target) {
  Scenario sc;
  sc.name = name;
  sc.scene = std::move(scene);
  sc.duration = duration;
  const int n = static_cast<int>(std::lround(duration * sc.frame_rate)) + 1;
  sc.poses.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = k / sc.frame_rate;
    sc.poses.push_back({t, look_at(eye(t), target(t))});
  }
  return sc;
}

Scenario make_room() {
  SceneModel m = room_shell(Vec3(-3, -2.5, 0), Vec3(3, 2.5, 3));
  Primitive table;
  table.kind = Primitive::kBox;
  table.box_min = Vec3(-0.8, -1.6, 0.0);
  table.box_max = Vec3(0.2, -0.6, 0.8);
  table.texture = sine_tex(Vec3(1, 0.4, 0.7), Vec3(0.2, 1, 0.5), 0.7, 120,
                           45, 1.1);
  m.primitives().push_back(table);
  Primitive ball;
  ball.kind = Primitive::kSphere;
  ball.center = Vec3(1.6, 1.2, 0.45);
  ball.radius = 0.45;
  ball.texture = sine_tex(Vec3(0.9, 0.1, 0.6), Vec3(0.3, 0.8, 1), 0.5, 135,
                          40, 2.4);
  m.primitives().push_back(ball);

  const double T = 30.0;
  auto eye = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 2.0 * M_PI * s;
    return Vec3(1.2 * std::cos(th), 1.0 * std::sin(th),
                1.5 + 0.2 * std::sin(2.0 * th));
  };
  auto target = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 2.0 * M_PI * s;
    return Vec3(2.6 * std::cos(th + 0.35), 2.1 * std::sin(th + 0.35),
                1.45 - 0.25 * std::sin(th));
  };
  return assemble("room", std::move(m), T, eye, target);
}

Scenario make_room_fast() {
  SceneModel m = room_shell(Vec3(-3, -2.5, 0), Vec3(3, 2.5, 3));
  const double T = 20.0;
  auto eye = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 4.0 * M_PI * s;
    return Vec3(1.2 * std::cos(th), 1.0 * std::sin(th),
                1.5 + 0.25 * std::sin(1.5 * th));
  };
  auto target = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 4.0 * M_PI * s;
    return Vec3(2.6 * std::cos(th + 0.5), 2.1 * std::sin(th + 0.5),
                1.4 - 0.3 * std::sin(th));
  };
  return assemble("room_fast", std::move(m), T, eye, target);
}

// one end wall is featureless; the camera approaches until the wall fills
// the view, slides along it for `blackout` seconds, then returns to texture
Scenario make_whitewall(const std::string& name, double blackout) {
  SceneModel m = room_shell(Vec3(-3, -2.5, 0), Vec3(3, 2.5, 3));
  m.primitives()[1].texture = uniform_tex(140.0);  // x = -3 wall

  const double T = 20.0 + blackout;
  const Vec3 A(1.0, -0.4, 1.5);
  const Vec3 B(-1.7, -0.9, 1.5);
  const Vec3 B2 = B + Vec3(0.0, 1.8, 0.0);
  const Vec3 C(0.6, 1.0, 1.55);
  const Vec3 D(1.3, -0.2, 1.5);
  auto eye = [=](double t) -> Vec3 {
    Vec3 e = A;
    e += ramp(t, 0.5, 5.5) * (B - A);
    e += ramp(t, 6.0, blackout) * (B2 - B);
    e += ramp(t, 6.0 + blackout, 3.0) * (C - B2);
    e += ramp(t, 9.0 + blackout, T - 9.5 - blackout) * (D - C);
    return e;
  };
  const Vec3 TA(2.9, 1.8, 1.3);
  const Vec3 TB(2.9, -1.6, 1.7);
  auto target = [=](double t) -> Vec3 {
    const Vec3 e = eye(t);
    const Vec3 wallward = e + Vec3(-1.0, 0.0, 0.0);
    const double u1 = ramp(t, 3.0, 2.5);
    const double u2 = ramp(t, 6.5 + blackout, 2.0);
    const Vec3 g = (1.0 - u1) * TA + u1 * wallward;
    return (1.0 - u2) * g + u2 * TB;
  };
  return assemble(name, std::move(m), T, eye, target);
}

Scenario make_corridor_loop() {
  SceneModel m = room_shell(Vec3(-6, -5, 0), Vec3(6, 5, 3));
  Primitive core;
  core.kind = Primitive::kBox;
  core.box_min = Vec3(-3.0, -2.0, 0.0);
  core.box_max = Vec3(3.0, 2.0, 3.0);
  core.texture = sine_tex(Vec3(0.8, 0.6, 0.3), Vec3(-0.4, 0.7, 0.9), 0.9,
                          124, 50, 0.2);
  m.primitives().push_back(core);

  const double T = 40.0;
  auto eye = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 2.0 * M_PI * s;
    return Vec3(4.6 * std::cos(th), 3.6 * std::sin(th),
                1.55 + 0.1 * std::sin(2.0 * th));
  };
  auto target = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    const double th = 2.0 * M_PI * s + 0.35;
    return Vec3(4.6 * std::cos(th), 3.6 * std::sin(th), 1.5);
  };
  return assemble("corridor_loop", std::move(m), T, eye, target);
}

Scenario make_corridor_long() {
  SceneModel m;
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  m.primitives().push_back(
      wall(ex, 1.4, sine_tex(ey, ez, 1.2, 124, 55, 0.3)));
  m.primitives().push_back(
      wall(ex, -1.4, sine_tex(ey, ez, 1.0, 130, 50, 1.9)));
  m.primitives().push_back(
      wall(ey, -0.5, sine_tex(ex, ez, 1.1, 120, 48, 2.6)));
  m.primitives().push_back(
      wall(ey, 14.0, sine_tex(ex, ez, 1.3, 127, 52, 0.8)));
  m.primitives().push_back(
      wall(ez, 0.0, sine_tex(ex, ey, 1.4, 116, 56, 1.4)));
  m.primitives().push_back(
      wall(ez, 3.0, sine_tex(ex, ey, 1.5, 125, 46, 3.1)));

  const double T = 20.0;
  auto eye = [T](double t) {
    const double s = ramp(t, 0.5, T - 0.5);
    return Vec3(0.2 * std::sin(2.0 * M_PI * s), 0.5 + 7.0 * s,
                1.5 + 0.08 * std::sin(4.0 * M_PI * s));
  };
  auto target = [eye, T](double t) -> Vec3 {
    const double s = ramp(t, 0.5, T - 0.5);
    return eye(t) + Vec3(0.35 * std::sin(5.0 * s + 0.4), 1.0,
                         0.12 * std::sin(3.3 * s));
  };
  return assemble("corridor_long", std::move(m), T, eye, target);
}

}  // namespace

Scenario make_scenario(const std::string& name) {
  if (name == "room") return make_room();
  if (name == "room_whitewall") return make_whitewall(name, 5.0);
  if (name == "room_whitewall_long") return make_whitewall(name, 10.0);
  if (name == "room_fast") return make_room_fast();
  if (name == "corridor_loop") return make_corridor_loop();
  if (name == "corridor_long") return make_corridor_long();
  throw std::invalid_argument("unknown scenario: " + name);
}

std::vector<std::string> scenario_names() {
  return {"room",      "room_whitewall", "room_whitewall_long",
          "room_fast", "corridor_loop",  "corridor_long"};
}

}  // namespace rgbdi
