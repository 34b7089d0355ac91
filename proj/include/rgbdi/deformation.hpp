#pragma once

#include <vector>

#include "rgbdi/manifold.hpp"
#include "rgbdi/surfel_map.hpp"
#include "rgbdi/types.hpp"

namespace rgbdi {

// embedded-deformation node; R is optimized unconstrained, rigidity is only
// soft-enforced through the energy
struct DeformationNode {
  Vec3 g = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  std::vector<int> neighbors;
};

// deform q_s onto q_d
struct SurfaceConstraint {
  Vec3 q_s = Vec3::Zero();
  Vec3 q_d = Vec3::Zero();
};

// keep a previously registered pair co-deformed (global closures only)
struct RelativeConstraint {
  Vec3 r_s = Vec3::Zero();
  Vec3 r_d = Vec3::Zero();
};

struct GraphConfig {
  double node_spacing = 0.3;      // m along the surfel sequence
  int k_neighbors = 4;
  double w_rot = 1.0;
  double w_reg = 10.0;
  double w_con = 100.0;           // also weights pin and rel terms
  double w_imu = 100.0;
  int max_iterations = 50;
  double convergence_delta = 1e-6;
  double coverage_radius = 1.5;   // m, points farther from every node stay put
};

struct OptimizeReport {
  int iterations = 0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  bool converged = false;
};

class DeformationGraph {
 public:
  explicit DeformationGraph(const GraphConfig& cfg = GraphConfig());

  const GraphConfig& config() const { return cfg_; }
  std::vector<DeformationNode>& nodes() { return nodes_; }
  const std::vector<DeformationNode>& nodes() const { return nodes_; }

  // samples nodes along the surfel sequence with the configured spacing and
  // wires k sequential neighbors
  void build(const std::vector<Surfel>& surfels);
  void buildFromPositions(const std::vector<Vec3>& positions);

  // blended deformation of a point; false when no node is within the
  // coverage radius. rot_blend receives the (non-orthonormal) weighted
  // rotation blend used for normals.
  bool deformPoint(const Vec3& p, Vec3* out, Mat3* rot_blend = nullptr) const;

  // rigid motion closest to the local blend, for carrying camera poses
  // through a map deformation
  bool blendedRigid(const Vec3& p, RigidTransform* T) const;

  // moves surfels (and rotates normals) in place; returns how many were out
  // of coverage and left unmoved
  int deformSurfels(std::vector<Surfel>* surfels) const;

  // E_loc / E_glo of the embedded-deformation energy; relative constraints
  // only participate when supplied. Gradient is w.r.t. the stacked per-node
  // [vec(R); t] parameters (12 per node).
  double energy(const std::vector<SurfaceConstraint>& surface,
                const std::vector<SurfaceConstraint>& pins,
                const std::vector<RelativeConstraint>& relative,
                const Vec3& g_W, VecX* gradient = nullptr) const;

  OptimizeReport optimize(const std::vector<SurfaceConstraint>& surface,
                          const std::vector<SurfaceConstraint>& pins,
                          const std::vector<RelativeConstraint>& relative,
                          const Vec3& g_W);

 private:
  struct Influence {
    std::vector<int> idx;
    std::vector<double> w;
  };
  bool influence(const Vec3& p, Influence* out) const;
  double assemble(const std::vector<SurfaceConstraint>& surface,
                  const std::vector<SurfaceConstraint>& pins,
                  const std::vector<RelativeConstraint>& relative,
                  const Vec3& g_W, MatX* H, VecX* b) const;

  GraphConfig cfg_;
  std::vector<DeformationNode> nodes_;
};

}  // namespace rgbdi
