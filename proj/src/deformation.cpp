#include "rgbdi/deformation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <utility>

namespace rgbdi {

DeformationGraph::DeformationGraph(const GraphConfig& cfg) : cfg_(cfg) {}

void DeformationGraph::buildFromPositions(const std::vector<Vec3>& positions) {
  nodes_.clear();
  for (const Vec3& p : positions) {
    if (!nodes_.empty() && (p - nodes_.back().g).norm() < cfg_.node_spacing)
      continue;
    DeformationNode n;
    n.g = p;
    nodes_.push_back(n);
  }
  const int count = static_cast<int>(nodes_.size());
  const int half = std::max(1, cfg_.k_neighbors / 2);
  for (int i = 0; i < count; ++i) {
    for (int d = 1; d <= half; ++d) {
      if (i - d >= 0) nodes_[i].neighbors.push_back(i - d);
      if (i + d < count) nodes_[i].neighbors.push_back(i + d);
    }
  }
}

void DeformationGraph::build(const std::vector<Surfel>& surfels) {
  std::vector<Vec3> positions;
  positions.reserve(surfels.size());
  for (const Surfel& s : surfels) positions.push_back(s.position);
  buildFromPositions(positions);
}

bool DeformationGraph::influence(const Vec3& p, Influence* out) const {
  out->idx.clear();
  out->w.clear();
  if (nodes_.empty()) return false;

  std::vector<std::pair<double, int>> cand;
  cand.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    cand.emplace_back((p - nodes_[i].g).norm(), static_cast<int>(i));
  const std::size_t keep =
      std::min(cand.size(), static_cast<std::size_t>(cfg_.k_neighbors) + 1);
  std::partial_sort(cand.begin(), cand.begin() + keep, cand.end());
  if (cand.front().first > cfg_.coverage_radius) return false;

  if (keep == 1) {
    out->idx.push_back(cand[0].second);
    out->w.push_back(1.0);
    return true;
  }

  // the farthest retained candidate only sets the falloff scale
  const double dmax = cand[keep - 1].first;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < keep; ++i) {
    const double a = 1.0 - cand[i].first / std::max(dmax, 1e-12);
    const double w = a * a;
    out->idx.push_back(cand[i].second);
    out->w.push_back(w);
    sum += w;
  }
  if (sum < 1e-12) {
    std::fill(out->w.begin(), out->w.end(), 1.0);
    sum = static_cast<double>(out->w.size());
  }
  for (double& w : out->w) w /= sum;
  return true;
}

bool DeformationGraph::deformPoint(const Vec3& p, Vec3* out,
                                   Mat3* rot_blend) const {
  Influence inf;
  if (!influence(p, &inf)) return false;
  // identity-plus-correction form: bitwise identity on an identity graph
  // even though the normalized weights only sum to 1 up to rounding
  Vec3 delta = Vec3::Zero();
  Mat3 Rcorr = Mat3::Zero();
  for (std::size_t i = 0; i < inf.idx.size(); ++i) {
    const DeformationNode& n = nodes_[inf.idx[i]];
    const Mat3 Rm = n.R - Mat3::Identity();
    delta += inf.w[i] * (Rm * (p - n.g) + n.t);
    Rcorr += inf.w[i] * Rm;
  }
  *out = p + delta;
  if (rot_blend) *rot_blend = Mat3::Identity() + Rcorr;
  return true;
}

bool DeformationGraph::blendedRigid(const Vec3& p, RigidTransform* T) const {
  Vec3 q;
  Mat3 Rb;
  if (!deformPoint(p, &q, &Rb)) return false;
  Eigen::JacobiSVD<Mat3> svd(Rb, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    R = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  T->rotation = Quat(R).normalized();
  T->translation = q - R * p;
  return true;
}

int DeformationGraph::deformSurfels(std::vector<Surfel>* surfels) const {
  int uncovered = 0;
  for (Surfel& s : *surfels) {
    Vec3 q;
    Mat3 Rb;
    if (!deformPoint(s.position, &q, &Rb)) {
      ++uncovered;
      continue;
    }
    s.position = q;
    const Vec3 n = Rb * s.normal;
    if (n != s.normal && n.norm() > 1e-9) s.normal = n.normalized();
  }
  return uncovered;
}

namespace {

// parameter layout: 12 per node, column-major vec(R) then t
inline int param_R(int node, int r, int c) { return 12 * node + 3 * c + r; }
inline int param_t(int node, int k) { return 12 * node + 9 + k; }

struct TermAccumulator {
  MatX* H;
  VecX* b;
  double energy = 0.0;

  // J blocks are m x 12 per touched node
  void add(double weight, const VecX& r,
           const std::vector<std::pair<int, MatX>>& jacobians) {
    energy += weight * r.squaredNorm();
    for (const auto& [li, Ji] : jacobians) {
      if (b) b->segment<12>(12 * li) -= weight * Ji.transpose() * r;
      if (!H) continue;
      for (const auto& [lj, Jj] : jacobians)
        H->block<12, 12>(12 * li, 12 * lj) +=
            weight * Ji.transpose() * Jj;
    }
  }
};

}  // namespace

double DeformationGraph::assemble(
    const std::vector<SurfaceConstraint>& surface,
    const std::vector<SurfaceConstraint>& pins,
    const std::vector<RelativeConstraint>& relative, const Vec3& g_W,
    MatX* H, VecX* b) const {
  const int count = static_cast<int>(nodes_.size());
  const int dim = 12 * count;
  if (H) H->setZero(dim, dim);
  if (b) b->setZero(dim);
  TermAccumulator acc{H, b};

  // rigidity: ||R^T R - I||_F^2 per node
  for (int l = 0; l < count; ++l) {
    const Mat3& R = nodes_[l].R;
    VecX r(9);
    MatX J = MatX::Zero(9, 12);
    const Mat3 M = R.transpose() * R - Mat3::Identity();
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        const int row = 3 * j + i;
        r(row) = M(i, j);
        for (int c = 0; c < 3; ++c) {
          J(row, 3 * i + c) += R(c, j);
          J(row, 3 * j + c) += R(c, i);
        }
      }
    acc.add(cfg_.w_rot, r, {{l, J}});
  }

  // smoothness between neighboring nodes
  for (int l = 0; l < count; ++l) {
    const DeformationNode& nl = nodes_[l];
    for (int n : nl.neighbors) {
      const DeformationNode& nn = nodes_[n];
      const Vec3 e = nn.g - nl.g;
      VecX r(3);
      r = nl.R * e + nl.g + nl.t - nn.g - nn.t;
      MatX Jl = MatX::Zero(3, 12);
      MatX Jn = MatX::Zero(3, 12);
      for (int i = 0; i < 3; ++i) {
        for (int d = 0; d < 3; ++d) Jl(i, 3 * d + i) = e(d);
        Jl(i, 9 + i) = 1.0;
        Jn(i, 9 + i) = -1.0;
      }
      acc.add(cfg_.w_reg, r, {{l, Jl}, {n, Jn}});
    }
  }

  // blended point constraints; influence weights depend only on node
  // positions, which are not optimized, so they are constants here
  auto add_point_term = [&](const Vec3& src, const Vec3& dst, double sign_dst,
                            double weight) {
    Influence inf;
    if (!influence(src, &inf)) return;
    VecX r(3);
    Vec3 phi = Vec3::Zero();
    std::vector<std::pair<int, MatX>> jacobians;
    for (std::size_t i = 0; i < inf.idx.size(); ++i) {
      const DeformationNode& n = nodes_[inf.idx[i]];
      const double w = inf.w[i];
      const Vec3 v = src - n.g;
      phi += w * (n.R * v + n.g + n.t);
      MatX J = MatX::Zero(3, 12);
      for (int ii = 0; ii < 3; ++ii) {
        for (int d = 0; d < 3; ++d) J(ii, 3 * d + ii) = w * v(d);
        J(ii, 9 + ii) = w;
      }
      jacobians.emplace_back(inf.idx[i], std::move(J));
    }
    r = phi + sign_dst * dst;
    acc.add(weight, r, jacobians);
  };

  for (const SurfaceConstraint& c : surface)
    add_point_term(c.q_s, c.q_d, -1.0, cfg_.w_con);
  for (const SurfaceConstraint& c : pins)
    add_point_term(c.q_d, c.q_d, -1.0, cfg_.w_con);

  // relative terms keep an old registration pair co-deformed
  for (const RelativeConstraint& c : relative) {
    Influence inf_s, inf_d;
    if (!influence(c.r_s, &inf_s) || !influence(c.r_d, &inf_d)) continue;
    Vec3 phi_s = Vec3::Zero();
    Vec3 phi_d = Vec3::Zero();
    std::vector<std::pair<int, MatX>> jacobians;
    auto side = [&](const Influence& inf, const Vec3& p, double sign,
                    Vec3* phi) {
      for (std::size_t i = 0; i < inf.idx.size(); ++i) {
        const DeformationNode& n = nodes_[inf.idx[i]];
        const double w = inf.w[i];
        const Vec3 v = p - n.g;
        *phi += w * (n.R * v + n.g + n.t);
        MatX J = MatX::Zero(3, 12);
        for (int ii = 0; ii < 3; ++ii) {
          for (int d = 0; d < 3; ++d) J(ii, 3 * d + ii) = sign * w * v(d);
          J(ii, 9 + ii) = sign * w;
        }
        jacobians.emplace_back(inf.idx[i], std::move(J));
      }
    };
    side(inf_s, c.r_s, 1.0, &phi_s);
    side(inf_d, c.r_d, -1.0, &phi_d);
    VecX r(3);
    r = phi_s - phi_d;
    acc.add(cfg_.w_con, r, jacobians);
  }

  // gravity alignment per node
  for (int l = 0; l < count; ++l) {
    VecX r(3);
    r = nodes_[l].R * g_W - g_W;
    MatX J = MatX::Zero(3, 12);
    for (int i = 0; i < 3; ++i)
      for (int d = 0; d < 3; ++d) J(i, 3 * d + i) = g_W(d);
    acc.add(cfg_.w_imu, r, {{l, J}});
  }

  return acc.energy;
}

double DeformationGraph::energy(const std::vector<SurfaceConstraint>& surface,
                                const std::vector<SurfaceConstraint>& pins,
                                const std::vector<RelativeConstraint>& relative,
                                const Vec3& g_W, VecX* gradient) const {
  if (!gradient) return assemble(surface, pins, relative, g_W, nullptr, nullptr);
  VecX b;
  const double e = assemble(surface, pins, relative, g_W, nullptr, &b);
  *gradient = -2.0 * b;
  return e;
}

OptimizeReport DeformationGraph::optimize(
    const std::vector<SurfaceConstraint>& surface,
    const std::vector<SurfaceConstraint>& pins,
    const std::vector<RelativeConstraint>& relative, const Vec3& g_W) {
  OptimizeReport rep;
  if (nodes_.empty()) {
    rep.converged = true;
    return rep;
  }

  MatX H;
  VecX b;
  double e = assemble(surface, pins, relative, g_W, &H, &b);
  rep.initial_energy = e;
  double lambda = 1e-6;

  for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
    rep.iterations = iter + 1;
    MatX Hd = H;
    Hd.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
    Hd.diagonal().array() += 1e-12;
    const VecX delta = Hd.ldlt().solve(b);
    if (!delta.allFinite()) break;

    std::vector<DeformationNode> saved = nodes_;
    for (int l = 0; l < static_cast<int>(nodes_.size()); ++l) {
      for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 3; ++r)
          nodes_[l].R(r, c) += delta(param_R(l, r, c));
      nodes_[l].t += delta.segment<3>(param_t(l, 0));
    }
    MatX H_new;
    VecX b_new;
    const double e_new = assemble(surface, pins, relative, g_W, &H_new, &b_new);
    if (e_new <= e) {
      e = e_new;
      H.swap(H_new);
      b.swap(b_new);
      lambda = std::max(lambda * 0.1, 1e-9);
      if (delta.norm() < cfg_.convergence_delta) {
        rep.converged = true;
        break;
      }
    } else {
      nodes_ = std::move(saved);
      lambda *= 10.0;
      if (lambda > 1e10) break;
    }
  }
  rep.final_energy = e;
  return rep;
}

}  // namespace rgbdi
