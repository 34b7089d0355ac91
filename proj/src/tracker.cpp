#include "rgbdi/tracker.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace rgbdi {

double sigma_depth(double d, double fx, double sigma_disp_eff,
                   double baseline_m) {
  return sigma_disp_eff * d * d / (baseline_m * fx);
}

State predict_state_mode(const State& x0, const Preintegration& pre,
                         const RigidTransform& T_CS, ImuMode mode) {
  switch (mode) {
    case ImuMode::kFull:
      return predict_state(x0, pre, T_CS);
    case ImuMode::kGyroOnly: {
      // rotation from the gyro, constant-velocity translation
      State x1 = x0;
      const Quat dq = pre.deltaRCorrected(x0.b_g);
      x1.q_WC = (x0.q_WC * T_CS.rotation * dq * T_CS.rotation.conjugate())
                    .normalized();
      x1.p_WC += x0.q_IW.conjugate() * (x0.v_IIS * pre.deltaT());
      return x1;
    }
    case ImuMode::kOff:
    default:
      return x0;
  }
}

InitialConditions initialize_from_rest(const std::vector<ImuSample>& samples,
                                       const ImuParams& prm,
                                       double sigma_ba_prior,
                                       const RigidTransform& T_CS) {
  InitialConditions init;
  const size_t n = samples.size();

  Vec3 f_mean = Vec3::Zero();
  Vec3 w_mean = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    f_mean += samples[i].accel;
    w_mean += samples[i].gyro;
  }
  if (n > 0) {
    f_mean /= static_cast<double>(n);
    w_mean /= static_cast<double>(n);
  }

  // a resting gyro reads its bias directly
  double sigma_bg = 0.03;
  if (n > 1) {
    init.x0.b_g = w_mean;
    double var = 0.0;
    for (size_t i = 0; i < n; ++i)
      var += (samples[i].gyro - w_mean).squaredNorm();
    const double std_err =
        std::sqrt(var / (3.0 * (n - 1))) / std::sqrt(double(n));
    sigma_bg = std::max(1e-3, std_err);
  }

  double sigma_rp = 1e-4;
  if (n > 0 && f_mean.norm() > 1e-6) {
    // first pose defines the world: gravity direction in W is the (negated)
    // mean specific force rotated through the extrinsics
    const Vec3 g_W_dir = -(T_CS.rotation * f_mean).normalized();
    init.x0.q_IW =
        Quat::FromTwoVectors(g_W_dir, Vec3(0.0, 0.0, -1.0)).normalized();

    // the magnitude surplus over g is the along-gravity accelerometer bias;
    // the lateral part is indistinguishable from tilt until the rig moves, so
    // the roll/pitch prior must stay loose enough to let it separate later
    init.x0.b_a = f_mean.normalized() * (f_mean.norm() - prm.gravity);

    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double a = std::acos(std::clamp(
          samples[i].accel.normalized().dot(f_mean.normalized()), -1.0, 1.0));
      var += a * a;
    }
    if (n > 1) {
      const double std_err = std::sqrt(var / (n - 1)) / std::sqrt(double(n));
      sigma_rp = std::max(sigma_rp, std_err);
    }
    sigma_rp = std::max(sigma_rp, sigma_ba_prior / prm.gravity);
  }

  auto info = [](double sigma) { return 1.0 / (sigma * sigma); };
  Mat18& H = init.prior.H;
  H.block<3, 3>(kIdxPos, kIdxPos) = Mat3::Identity() * info(1e-4);
  H.block<3, 3>(kIdxRot, kIdxRot) = Mat3::Identity() * info(1e-4);
  H.block<3, 3>(kIdxVel, kIdxVel) = Mat3::Identity() * info(0.1);
  H.block<3, 3>(kIdxBg, kIdxBg) = Mat3::Identity() * info(sigma_bg);
  H.block<3, 3>(kIdxBa, kIdxBa) = Mat3::Identity() * info(sigma_ba_prior);
  // in the inertial frame gravity is -z, so roll/pitch are the x/y axes
  H(kIdxGrav + 0, kIdxGrav + 0) = info(sigma_rp);
  H(kIdxGrav + 1, kIdxGrav + 1) = info(sigma_rp);
  H(kIdxGrav + 2, kIdxGrav + 2) = info(1e-4);

  init.prior.x_ref = init.x0;
  return init;
}

namespace {

constexpr double kOffModeTieSigma = 1.0;

double huber_weight(double e, double sigma, bool enabled) {
  if (!enabled) return 1.0;
  const double delta = 3.0 * sigma;
  const double a = std::abs(e);
  return a <= delta ? 1.0 : delta / a;
}

// central-difference normals smear across surface creases, where depth stays
// continuous and the gap test cannot fire; such pixels bias point-to-plane
// terms, so require the local normals to agree before trusting one
bool normals_coherent(const ImageV3& normals, int u, int v) {
  static const float kCosTol = std::cos(20.0 * M_PI / 180.0);
  const Vec3f n = normals.at(u, v);
  const int du[4] = {1, -1, 0, 0};
  const int dv[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int uu = u + du[k];
    const int vv = v + dv[k];
    if (uu < 0 || vv < 0 || uu >= normals.width || vv >= normals.height)
      return false;
    const Vec3f nn = normals.at(uu, vv);
    if (nn.squaredNorm() < 0.5f || nn.dot(n) < kCosTol) return false;
  }
  return true;
}

}  // namespace

NormalEquations Tracker::buildNormalEquations(
    const State& x0, const State& x1, const Prior& prior,
    const FramePyramid& prev, const ModelView& model, const FramePyramid& cur,
    int level, const Preintegration& pre, const RigidTransform& T_CS) const {
  NormalEquations ne;
  auto& H = ne.H;
  auto& b = ne.b;

  const RigidTransform T_WC0 = x0.T_WC();
  const RigidTransform T_WC1 = x1.T_WC();
  const Intrinsics& K = cur.K[level];
  const double w_rgb = 1.0 / (cfg_.sigma_intensity * cfg_.sigma_intensity);
  // disparity sigma is quoted at the 640-wide native sensor, see add_image_noise
  const double sigma_disp_eff = cfg_.sigma_disparity / cfg_.disparity_scale *
                                (cur.K[0].width / 640.0);
  const double fx0 = cur.K[0].fx;
  const double cos_gate =
      std::cos(cfg_.assoc_max_angle_deg * M_PI / 180.0);
  const Mat3 R_WC1 = T_WC1.rotationMatrix();
  const RigidTransform T_model_inv =
      model.empty() ? RigidTransform::Identity() : model.T_WC.inverse();

  const ImageF& cur_int = cur.intensity[level];
  const ImageF& cur_dep = cur.depth[level];

  for (int v = 1; v + 1 < cur_dep.height; v += cfg_.pixel_stride) {
    for (int u = 1; u + 1 < cur_dep.width; u += cfg_.pixel_stride) {
      const double d1 = cur_dep.at(u, v);
      if (d1 < kMinDepth || d1 > kMaxDepth) continue;

      const PointResidual pr = photometric_residual(
          prev.intensity[level], K, T_WC0, T_WC1, Vec2(u, v), d1,
          cur_int.at(u, v));
      if (pr.valid) {
        const double w =
            w_rgb * huber_weight(pr.e, cfg_.sigma_intensity, cfg_.use_huber);
        H.block<6, 6>(0, 0) += w * pr.J0.transpose() * pr.J0;
        H.block<6, 6>(0, 18) += w * pr.J0.transpose() * pr.J1;
        H.block<6, 6>(18, 18) += w * pr.J1.transpose() * pr.J1;
        b.segment<6>(0) -= w * pr.J0.transpose() * pr.e;
        b.segment<6>(18) -= w * pr.J1.transpose() * pr.e;
        ne.cost += 0.5 * w * pr.e * pr.e;
        ++ne.rgb_terms;
      }

      if (!model.empty()) {
        // the residual plane comes from the model, so the (noisier) frame
        // normal is only screened by the mutual angle gate below
        const Vec3f n_C1f = cur.normals[level].at(u, v);
        if (n_C1f.squaredNorm() > 0.5f) {
          const Vec3 p_C1 = cur.vertices[level].at(u, v).cast<double>();
          const Vec3 p_W = T_WC1 * p_C1;
          const Vec3 p_m = T_model_inv * p_W;
          if (p_m.z() > kMinDepth) {
            const Vec2 uv_m = model.K.project(p_m);
            const int mu = static_cast<int>(std::lround(uv_m.x()));
            const int mv = static_cast<int>(std::lround(uv_m.y()));
            if (mu >= 0 && mv >= 0 && mu < model.vertices_W.width &&
                mv < model.vertices_W.height) {
              const Vec3f vWf = model.vertices_W.at(mu, mv);
              const Vec3f nWf = model.normals_W.at(mu, mv);
              if (nWf.squaredNorm() > 0.5f &&
                  normals_coherent(model.normals_W, mu, mv)) {
                const Vec3 v_W = vWf.cast<double>();
                const Vec3 n_W = nWf.cast<double>();
                const Vec3 n_W1 = R_WC1 * n_C1f.cast<double>();
                if ((p_W - v_W).norm() <= cfg_.assoc_max_dist &&
                    n_W1.dot(n_W) >= cos_gate) {
                  const PointResidual ir = icp_residual(T_WC1, p_C1, v_W, n_W);
                  const double sz =
                      sigma_depth(d1, fx0, sigma_disp_eff, cfg_.baseline_m);
                  double w = 1.0 / (sz * sz);
                  w *= huber_weight(ir.e, sz, cfg_.use_huber);
                  H.block<6, 6>(18, 18) += w * ir.J1.transpose() * ir.J1;
                  b.segment<6>(18) -= w * ir.J1.transpose() * ir.e;
                  ne.cost += 0.5 * w * ir.e * ir.e;
                  ++ne.icp_terms;
                }
              }
            }
          }
        }
      }
    }
  }

  if (cfg_.imu_mode != ImuMode::kOff) {
    const ImuFactor f = evaluate_imu_factor(pre, x0, x1, T_CS, cfg_.imu_mode);
    H.block<18, 18>(0, 0) += f.J0.transpose() * f.W * f.J0;
    H.block<18, 18>(0, 18) += f.J0.transpose() * f.W * f.J1;
    H.block<18, 18>(18, 18) += f.J1.transpose() * f.W * f.J1;
    b.segment<18>(0) -= f.J0.transpose() * f.W * f.e;
    b.segment<18>(18) -= f.J1.transpose() * f.W * f.e;
    ne.cost += 0.5 * f.e.dot(f.W * f.e);
  } else {
    // keep the unobserved blocks tied across the pair so the system stays
    // well posed without inertial terms
    const double w = 1.0 / (kOffModeTieSigma * kOffModeTieSigma);
    const Tangent d = boxminus(x1, x0);
    for (int blk : {kIdxVel, kIdxBg, kIdxBa, kIdxGrav}) {
      for (int k = 0; k < 3; ++k) {
        const int i = blk + k;
        H(i, i) += w;
        H(18 + i, 18 + i) += w;
        H(i, 18 + i) -= w;
        b(i) += w * d[i];
        b(18 + i) -= w * d[i];
        ne.cost += 0.5 * w * d[i] * d[i];
      }
    }
  }

  if (prior.H.squaredNorm() > 0.0) {
    const Tangent d0 = boxminus(x0, prior.x_ref);
    H.block<18, 18>(0, 0) += prior.H;
    b.segment<18>(0) += prior.b - prior.H * d0;
    ne.cost += 0.5 * d0.dot(prior.H * d0) - prior.b.dot(d0);
  }

  H.block<18, 18>(18, 0) = H.block<18, 18>(0, 18).transpose();
  // dense terms fill only the upper pose coupling; mirror the rest
  H = ((H + H.transpose()) * 0.5).eval();
  return ne;
}

TrackOutcome Tracker::track(const State& x0_in, const Prior& prior,
                            const FramePyramid& prev, const ModelView& model,
                            const FramePyramid& cur, const Preintegration& pre,
                            const RigidTransform& T_CS) const {
  TrackOutcome out;
  State x0 = x0_in;
  State x1 = predict_state_mode(x0, pre, T_CS, cfg_.imu_mode);

  const int levels = cur.levels();
  double lambda = cfg_.lambda_min;
  NormalEquations ne;
  bool ne_fresh = false;

  for (int level = levels - 1; level >= 0; --level) {
    const int iters =
        cfg_.iterations[std::min<size_t>(levels - 1 - level,
                                         cfg_.iterations.size() - 1)];
    if (!ne_fresh) {
      ne = buildNormalEquations(x0, x1, prior, prev, model, cur, level, pre,
                                T_CS);
      ne_fresh = true;
    }
    for (int it = 0; it < iters; ++it) {
      bool accepted = false;
      while (true) {
        Eigen::Matrix<double, 36, 36> Hd = ne.H;
        Hd.diagonal() += lambda * ne.H.diagonal().cwiseMax(1e-12);
        Hd.diagonal().array() += 1e-12;
        const Eigen::LDLT<Eigen::Matrix<double, 36, 36>> ldlt(Hd);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
          if (lambda >= cfg_.lambda_max) {
            out.solver_failure = true;
            break;
          }
          lambda *= 10.0;
          continue;
        }
        const Eigen::Matrix<double, 36, 1> delta = ldlt.solve(ne.b);
        if (!delta.allFinite()) {
          out.solver_failure = true;
          break;
        }

        const State x0_new = boxplus(x0, delta.head<18>());
        const State x1_new = boxplus(x1, delta.tail<18>());
        const NormalEquations ne_new = buildNormalEquations(
            x0_new, x1_new, prior, prev, model, cur, level, pre, T_CS);

        if (ne_new.cost <= ne.cost + 1e-12) {
          x0 = x0_new;
          x1 = x1_new;
          ne = ne_new;
          lambda = std::max(lambda * 0.5, cfg_.lambda_min);
          accepted = true;
          ++out.iterations;
          if (delta.norm() < cfg_.convergence_delta) it = iters;
          break;
        }
        if (lambda >= cfg_.lambda_max) break;
        lambda *= 10.0;
      }
      if (out.solver_failure || !accepted) break;
    }
    if (out.solver_failure) break;
    if (level > 0) ne_fresh = false;
  }

  if (!ne_fresh || ne.H.isZero(0.0)) {
    ne = buildNormalEquations(x0, x1, prior, prev, model, cur, 0, pre, T_CS);
  }

  out.x0 = x0;
  out.x1 = x1;
  out.cost = ne.cost;
  out.rgb_terms = ne.rgb_terms;
  out.icp_terms = ne.icp_terms;
  out.prior = marginalize(ne, x1);
  return out;
}

Prior Tracker::marginalize(const NormalEquations& ne, const State& x1) {
  Mat18 H00 = ne.H.block<18, 18>(0, 0);
  H00.diagonal().array() += 1e-12;
  const Mat18 H01 = ne.H.block<18, 18>(0, 18);
  const Mat18 H11 = ne.H.block<18, 18>(18, 18);

  const Eigen::LDLT<Mat18> ldlt(H00);
  const Mat18 H00inv_H01 = ldlt.solve(H01);

  Prior p;
  p.x_ref = x1;
  Mat18 Hs = H11 - H01.transpose() * H00inv_H01;
  Hs = 0.5 * (Hs + Hs.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat18> es(Hs);
  const VecX ev = es.eigenvalues().cwiseMax(0.0);
  p.H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.b = ne.b.tail<18>() - H00inv_H01.transpose() * ne.b.head<18>();
  return p;
}

void Tracker::prior_correction(Prior& prior, const State& new_lin) {
  const Tangent shift = boxminus(prior.x_ref, new_lin);
  prior.b += prior.H * shift;
  prior.x_ref = new_lin;
}

}  // namespace rgbdi
