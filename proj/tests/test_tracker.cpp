#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rgbdi/tracker.hpp"

using namespace rgbdi;

namespace {

struct Plane {
  Vec3 n;
  double c;  // n . p = c
};

// three walls of a textured room corner, fully constraining alignment
std::vector<Plane> corner_scene() {
  return {{Vec3(0, 0, 1).normalized(), 3.0},
          {Vec3(1, 0, 0.2).normalized(), 2.2},
          {Vec3(0, 1, 0.15).normalized(), 1.2}};
}

// smooth so that bilinear resampling stays faithful at 160x120
double texture(const Vec3& p) {
  return 128.0 + 45.0 * std::sin(1.6 * p.x() + 1.0) * std::cos(1.3 * p.y()) +
         30.0 * std::sin(1.9 * p.z() - 0.7) +
         20.0 * std::sin(2.4 * (p.x() + p.y() + 0.3 * p.z()));
}

void render(const std::vector<Plane>& scene, const Intrinsics& K,
            const RigidTransform& T_WC, bool textured, ImageF* intensity,
            ImageF* depth) {
  *intensity = ImageF(K.width, K.height, 128.f);
  *depth = ImageF(K.width, K.height, 0.f);
  const Mat3 R = T_WC.rotationMatrix();
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Vec3 dir_C((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const Vec3 dir_W = R * dir_C;
      double best = 1e18;
      for (const auto& pl : scene) {
        const double denom = pl.n.dot(dir_W);
        if (std::abs(denom) < 1e-9) continue;
        const double lambda = (pl.c - pl.n.dot(T_WC.translation)) / denom;
        if (lambda > 0.05 && lambda < best) best = lambda;
      }
      if (best < 1e17) {
        depth->at(u, v) = static_cast<float>(best);
        if (textured) {
          const Vec3 p_W = T_WC * (dir_C * best);
          intensity->at(u, v) = static_cast<float>(
              std::clamp(texture(p_W), 0.0, 255.0));
        }
      }
    }
  }
}

FramePyramid make_frame(const std::vector<Plane>& scene,
                        const RigidTransform& T_WC, bool textured = true) {
  const Intrinsics K = default_intrinsics(160, 120);
  ImageF intensity, depth;
  render(scene, K, T_WC, textured, &intensity, &depth);
  return build_pyramid(intensity, depth, K, 3);
}

ModelView model_from_frame(const FramePyramid& pyr, const RigidTransform& T_WC) {
  ModelView m;
  m.T_WC = T_WC;
  m.K = pyr.K[0];
  const ImageV3& verts = pyr.vertices[0];
  const ImageV3& normals = pyr.normals[0];
  m.vertices_W = ImageV3(verts.width, verts.height);
  m.normals_W = ImageV3(verts.width, verts.height);
  const Mat3 R = T_WC.rotationMatrix();
  for (int i = 0; i < verts.width * verts.height; ++i) {
    if (normals.data[i].squaredNorm() > 0.5f) {
      m.vertices_W.data[i] =
          (T_WC * verts.data[i].cast<double>()).cast<float>();
      m.normals_W.data[i] = (R * normals.data[i].cast<double>()).cast<float>();
    }
  }
  return m;
}

std::vector<ImuSample> stationary_imu(const State& x, const RigidTransform& T_CS,
                                      double T, double g = 9.81) {
  // accelerometer reads the negated gravity in sensor coordinates
  const Vec3 g_W = x.gravityInWorld(g);
  const Quat q_WS = (x.q_WC * T_CS.rotation).normalized();
  const Vec3 f_S = q_WS.conjugate() * (-g_W);
  std::vector<ImuSample> out;
  for (int i = 0; i <= static_cast<int>(T * 200.0); ++i)
    out.push_back({i / 200.0, Vec3::Zero(), f_S});
  return out;
}

Prior tight_pose_prior(const State& x0) {
  Prior p;
  p.x_ref = x0;
  p.H = Mat18::Identity() * 1e4;
  p.H.block<3, 3>(kIdxPos, kIdxPos) = Mat3::Identity() * 1e8;
  p.H.block<3, 3>(kIdxRot, kIdxRot) = Mat3::Identity() * 1e8;
  return p;
}

}  // namespace

TEST_SUITE("tracker") {

TEST_CASE("identical frames with stationary imu are a fixed point") {
  const auto scene = corner_scene();
  const State x0;
  const auto pyr = make_frame(scene, x0.T_WC());
  const auto model = model_from_frame(pyr, x0.T_WC());
  const auto samples = stationary_imu(x0, RigidTransform::Identity(), 1.0 / 30);

  Preintegration pre(Vec3::Zero(), Vec3::Zero(), ImuParams{});
  pre.integrateWindow(samples, 0.0, 1.0 / 30);

  Tracker tracker;
  const auto out = tracker.track(x0, tight_pose_prior(x0), pyr, model, pyr,
                                 pre, RigidTransform::Identity());
  CHECK(!out.solver_failure);
  CHECK((out.x1.p_WC - x0.p_WC).norm() < 1e-8);
  CHECK(out.x1.q_WC.angularDistance(x0.q_WC) < 1e-8);
  CHECK(out.x1.v_IIS.norm() < 1e-6);
}

TEST_CASE("recovers a known small offset without imu") {
  const auto scene = corner_scene();
  const State x0;
  const auto pyr0 = make_frame(scene, x0.T_WC());
  const auto model = model_from_frame(pyr0, x0.T_WC());

  RigidTransform T_true;
  T_true.translation = Vec3(0.01, -0.006, 0.008);
  T_true.rotation = exp_rotation(Vec3(0.8, -0.5, 1.0).normalized() *
                                 (1.0 * M_PI / 180.0));
  const auto pyr1 = make_frame(scene, T_true);

  TrackerConfig cfg;
  cfg.imu_mode = ImuMode::kOff;
  Tracker tracker(cfg);
  Preintegration pre(Vec3::Zero(), Vec3::Zero(), ImuParams{});

  const auto out = tracker.track(x0, tight_pose_prior(x0), pyr0, model, pyr1,
                                 pre, RigidTransform::Identity());
  CHECK(!out.solver_failure);
  CHECK((out.x1.p_WC - T_true.translation).norm() < 1e-4);
  CHECK(out.x1.q_WC.angularDistance(T_true.rotation) < 1e-4);
  CHECK((out.x0.p_WC - x0.p_WC).norm() < 1e-6);
}

TEST_CASE("geometry only alignment on an untextured corner") {
  const auto scene = corner_scene();
  const State x0;
  const auto pyr0 = make_frame(scene, x0.T_WC(), false);
  const auto model = model_from_frame(pyr0, x0.T_WC());

  RigidTransform T_true;
  T_true.translation = Vec3(0.012, 0.004, -0.01);
  T_true.rotation = exp_rotation(Vec3(0.2, 1.0, -0.3).normalized() * 0.012);
  const auto pyr1 = make_frame(scene, T_true, false);

  TrackerConfig cfg;
  cfg.imu_mode = ImuMode::kOff;
  Tracker tracker(cfg);
  Preintegration pre(Vec3::Zero(), Vec3::Zero(), ImuParams{});
  const auto out = tracker.track(x0, tight_pose_prior(x0), pyr0, model, pyr1,
                                 pre, RigidTransform::Identity());
  CHECK(!out.solver_failure);
  CHECK((out.x1.p_WC - T_true.translation).norm() < 5e-4);
  CHECK(out.x1.q_WC.angularDistance(T_true.rotation) < 5e-4);
  CHECK(out.icp_terms > 1000);
}

TEST_CASE("textureless and depthless input reduces to the imu prediction") {
  ImageF intensity(160, 120, 100.f);
  ImageF depth(160, 120, 0.f);
  const auto pyr = build_pyramid(intensity, depth, default_intrinsics(160, 120), 3);

  std::mt19937_64 rng(101);
  const auto sig = oracle::BodySignal::random(rng, 0.4, 1.5, 3.0);
  auto samples = oracle::sample_signal(sig, 0.0, 1.0 / 30, 200.0);
  Preintegration pre(Vec3::Zero(), Vec3::Zero(), ImuParams{});
  pre.integrateWindow(samples, 0.0, 1.0 / 30);

  State x0 = oracle::random_state(rng);
  Tracker tracker;
  ModelView empty_model;
  const auto out = tracker.track(x0, tight_pose_prior(x0), pyr, empty_model,
                                 pyr, pre, RigidTransform::Identity());
  CHECK(!out.solver_failure);
  CHECK(out.rgb_terms == 0);
  CHECK(out.icp_terms == 0);

  const State pred = predict_state(out.x0, pre, RigidTransform::Identity());
  CHECK(boxminus(out.x1, pred).norm() < 1e-7);
}

TEST_CASE("normal equations match a brute force per residual rebuild") {
  // hand-assembled toy: the accumulation must equal summing rank-one terms
  const auto scene = corner_scene();
  const State x0;
  State x1;
  x1.p_WC = Vec3(0.004, -0.002, 0.003);
  const auto pyr0 = make_frame(scene, x0.T_WC());
  const auto pyr1 = make_frame(scene, x1.T_WC());
  const auto model = model_from_frame(pyr0, x0.T_WC());
  const auto samples = stationary_imu(x0, RigidTransform::Identity(), 1.0 / 30);
  Preintegration pre(Vec3::Zero(), Vec3::Zero(), ImuParams{});
  pre.integrateWindow(samples, 0.0, 1.0 / 30);

  TrackerConfig cfg;
  cfg.pixel_stride = 4;
  Tracker tracker(cfg);
  Prior prior = tight_pose_prior(x0);
  const auto ne = tracker.buildNormalEquations(x0, x1, prior, pyr0, model,
                                               pyr1, 0, pre,
                                               RigidTransform::Identity());

  CHECK((ne.H - ne.H.transpose()).norm() < 1e-9 * std::max(1.0, ne.H.norm()));
  CHECK(ne.rgb_terms > 0);
  CHECK(ne.icp_terms > 0);

  // the imu + prior part alone must reproduce from direct formulas
  NormalEquations manual;
  {
    const ImuFactor f = evaluate_imu_factor(pre, x0, x1,
                                            RigidTransform::Identity());
    manual.H.block<18, 18>(0, 0) += f.J0.transpose() * f.W * f.J0 + prior.H;
    manual.H.block<18, 18>(0, 18) += f.J0.transpose() * f.W * f.J1;
    manual.H.block<18, 18>(18, 18) += f.J1.transpose() * f.W * f.J1;
    manual.b.segment<18>(0) -=
        f.J0.transpose() * f.W * f.e - prior.b + prior.H * boxminus(x0, prior.x_ref);
    manual.b.segment<18>(18) -= f.J1.transpose() * f.W * f.e;
  }
  // visual terms: rerun the tracker accumulation with imu off minus tie terms
  TrackerConfig cfg_novis = cfg;
  cfg_novis.imu_mode = ImuMode::kOff;
  Tracker tv(cfg_novis);
  Prior zero_prior;
  auto ne_vis = tv.buildNormalEquations(x0, x1, zero_prior, pyr0, model, pyr1,
                                        0, pre, RigidTransform::Identity());
  {
    const double w = 1.0;
    const Tangent d = boxminus(x1, x0);
    for (int blk : {kIdxVel, kIdxBg, kIdxBa, kIdxGrav}) {
      for (int k = 0; k < 3; ++k) {
        const int i = blk + k;
        ne_vis.H(i, i) -= w;
        ne_vis.H(18 + i, 18 + i) -= w;
        ne_vis.H(i, 18 + i) += w;
        ne_vis.H(18 + i, i) += w;
        ne_vis.b(i) -= w * d[i];
        ne_vis.b(18 + i) += w * d[i];
      }
    }
  }
  Eigen::Matrix<double, 36, 36> H_sum = manual.H + ne_vis.H;
  H_sum.block<18, 18>(18, 0) = H_sum.block<18, 18>(0, 18).transpose();
  H_sum = 0.5 * (H_sum + H_sum.transpose()).eval();
  CHECK((ne.H - H_sum).norm() < 1e-10 * std::max(1.0, ne.H.norm()));
  CHECK((ne.b - (manual.b + ne_vis.b)).norm() <
        1e-10 * std::max(1.0, ne.b.norm()));
}

TEST_CASE("marginalized solve equals the batch solve") {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::Matrix<double, 36, 40> A;
    Eigen::Matrix<double, 36, 1> b;
    for (int i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
    for (int i = 0; i < 36; ++i) b[i] = n01(rng);
    NormalEquations ne;
    ne.H = A * A.transpose() + 0.1 * Eigen::Matrix<double, 36, 36>::Identity();
    ne.b = b;

    const Eigen::Matrix<double, 36, 1> full = ne.H.ldlt().solve(ne.b);
    const Prior marg = Tracker::marginalize(ne, State{});
    const Tangent x1 = marg.H.ldlt().solve(marg.b);
    CHECK((x1 - full.tail<18>()).norm() < 1e-8 * std::max(1.0, full.norm()));
  }
}

TEST_CASE("scalar schur example") {
  NormalEquations ne;
  ne.H.setZero();
  // embed the 2x2 example [[2,1],[1,2]] at positions (0, 18)
  ne.H(0, 0) = 2.0;
  ne.H(0, 18) = 1.0;
  ne.H(18, 0) = 1.0;
  ne.H(18, 18) = 2.0;
  ne.b(0) = 1.0;
  ne.b(18) = 1.0;
  const Prior p = Tracker::marginalize(ne, State{});
  CHECK(p.H(0, 0) == doctest::Approx(1.5));
  CHECK(p.b(0) == doctest::Approx(0.5));
}

TEST_CASE("sequential marginalization matches batch on a linear chain") {
  std::mt19937_64 rng(107);
  std::normal_distribution<double> n01(0.0, 1.0);
  using M18 = Mat18;
  using V18 = Tangent;

  auto rand_psd = [&](double jitter) {
    M18 A;
    for (int i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
    return M18(A * A.transpose() / 18.0 + jitter * M18::Identity());
  };
  auto rand_vec = [&]() {
    V18 v;
    for (int i = 0; i < 18; ++i) v[i] = n01(rng);
    return v;
  };

  for (int trial = 0; trial < 10; ++trial) {
    // factors: prior on s0; pair factor e = s1 - F s0 - u; e = s2 - F2 s1 - u2
    const M18 P0 = rand_psd(0.5);
    const V18 m0 = rand_vec();
    const M18 F1 = rand_psd(0.1);
    const V18 u1 = rand_vec();
    const M18 W1 = rand_psd(0.3);
    const M18 F2 = rand_psd(0.1);
    const V18 u2 = rand_vec();
    const M18 W2 = rand_psd(0.3);

    // batch 54-dim solve
    Eigen::Matrix<double, 54, 54> Hb = Eigen::Matrix<double, 54, 54>::Zero();
    Eigen::Matrix<double, 54, 1> bb = Eigen::Matrix<double, 54, 1>::Zero();
    Hb.block<18, 18>(0, 0) += P0;
    bb.segment<18>(0) += P0 * m0;
    // e1 = s1 - F1 s0 - u1, J = [-F1, I]
    Hb.block<18, 18>(0, 0) += F1.transpose() * W1 * F1;
    Hb.block<18, 18>(0, 18) -= F1.transpose() * W1;
    Hb.block<18, 18>(18, 0) -= W1 * F1;
    Hb.block<18, 18>(18, 18) += W1;
    bb.segment<18>(0) += -F1.transpose() * W1 * u1;
    bb.segment<18>(18) += W1 * u1;
    Hb.block<18, 18>(18, 18) += F2.transpose() * W2 * F2;
    Hb.block<18, 18>(18, 36) -= F2.transpose() * W2;
    Hb.block<18, 18>(36, 18) -= W2 * F2;
    Hb.block<18, 18>(36, 36) += W2;
    bb.segment<18>(18) += -F2.transpose() * W2 * u2;
    bb.segment<18>(36) += W2 * u2;
    const Eigen::Matrix<double, 54, 1> batch = Hb.ldlt().solve(bb);

    // sequential: two-state system (s0, s1), marginalize s0
    NormalEquations ne1;
    ne1.H.block<18, 18>(0, 0) = P0 + F1.transpose() * W1 * F1;
    ne1.H.block<18, 18>(0, 18) = -F1.transpose() * W1;
    ne1.H.block<18, 18>(18, 0) = -W1 * F1;
    ne1.H.block<18, 18>(18, 18) = W1;
    ne1.b.segment<18>(0) = P0 * m0 - F1.transpose() * W1 * u1;
    ne1.b.segment<18>(18) = W1 * u1;
    const Prior pr1 = Tracker::marginalize(ne1, State{});

    NormalEquations ne2;
    ne2.H.block<18, 18>(0, 0) = pr1.H + F2.transpose() * W2 * F2;
    ne2.H.block<18, 18>(0, 18) = -F2.transpose() * W2;
    ne2.H.block<18, 18>(18, 0) = -W2 * F2;
    ne2.H.block<18, 18>(18, 18) = W2;
    ne2.b.segment<18>(0) = pr1.b - F2.transpose() * W2 * u2;
    ne2.b.segment<18>(18) = W2 * u2;
    const Eigen::Matrix<double, 36, 1> seq = ne2.H.ldlt().solve(ne2.b);

    CHECK((seq.head<18>() - batch.segment<18>(18)).norm() <
          1e-8 * std::max(1.0, batch.norm()));
    CHECK((seq.tail<18>() - batch.tail<18>()).norm() <
          1e-8 * std::max(1.0, batch.norm()));
  }
}

TEST_CASE("prior correction shifts cost by a constant only") {
  std::mt19937_64 rng(109);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Prior p;
    p.x_ref = oracle::random_state(rng);
    Mat18 A;
    for (int i = 0; i < A.size(); ++i) A.data()[i] = n01(rng);
    p.H = A * A.transpose() / 18.0;
    for (int i = 0; i < 18; ++i) p.b[i] = n01(rng);

    Tangent step;
    for (int i = 0; i < 18; ++i) step[i] = 0.005 * n01(rng);
    const State new_lin = boxplus(p.x_ref, step);

    Prior q = p;
    Tracker::prior_correction(q, new_lin);
    CHECK((q.H - p.H).norm() == 0.0);

    auto cost = [](const Prior& pr, const State& y) {
      const Tangent d = boxminus(y, pr.x_ref);
      return 0.5 * d.dot(pr.H * d) - pr.b.dot(d);
    };

    Tangent probe;
    for (int i = 0; i < 18; ++i) probe[i] = 0.005 * n01(rng);
    const State y1 = boxplus(p.x_ref, probe);
    const State y2 = boxplus(new_lin, probe);
    const double d1 = cost(q, y1) - cost(p, y1);
    const double d2 = cost(q, y2) - cost(p, y2);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-4));
  }

  // exactness when nothing moves
  Prior p;
  p.x_ref = State{};
  p.H = Mat18::Identity();
  p.b = Tangent::Ones();
  Prior q = p;
  Tracker::prior_correction(q, p.x_ref);
  CHECK((q.b - p.b).norm() == 0.0);

  // unit example: H = I, rebase one unit along the first axis
  Tangent e1 = Tangent::Zero();
  e1[0] = 1.0;
  Tracker::prior_correction(q, boxplus(p.x_ref, -e1));
  CHECK((q.b - (p.b + e1)).norm() < 1e-12);
}

TEST_CASE("initialize from rest estimates the gravity attitude") {
  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 10; ++trial) {
    const Quat q_IW_true = oracle::random_quat(rng, 0.5);
    State truth;
    truth.q_IW = q_IW_true;
    const Vec3 g_W = truth.gravityInWorld(9.81);
    std::vector<ImuSample> samples;
    for (int i = 0; i < 40; ++i) samples.push_back({i / 200.0, Vec3::Zero(), -g_W});

    const auto init = initialize_from_rest(samples, ImuParams{}, 0.1,
                                           RigidTransform::Identity());
    CHECK((init.x0.gravityInWorld(9.81) - g_W).norm() < 1e-9);
    CHECK(init.prior.H(kIdxGrav, kIdxGrav) == doctest::Approx(1e8));
    CHECK(init.prior.H(kIdxPos, kIdxPos) == doctest::Approx(1e8));
    CHECK(init.prior.H(kIdxVel, kIdxVel) == doctest::Approx(100.0));
    CHECK(init.prior.H(kIdxBg, kIdxBg) ==
          doctest::Approx(1.0 / (0.03 * 0.03)));
  }
}

}  // TEST_SUITE
