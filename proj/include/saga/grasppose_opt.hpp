#pragma once

#include <array>
#include <string>
#include <vector>

#include "saga/body_model.hpp"
#include "saga/data.hpp"
#include "saga/wholegrasp.hpp"

namespace saga {

// Weights of the grasp-pose energy. The collision thresholds sigma_b /
// sigma_o floor the signed-distance hinge on the body and object side.
struct PoseEnergyWeights {
  double alpha_cont_o = 15.0;   // object-point contact term
  double alpha_cont_m = 15.0;   // marker contact term
  double alpha_colli_O = 100.0; // object points penetrating the hand
  double alpha_colli_B = 200.0; // hand vertices penetrating the object
  double alpha_theta = 0.0005;  // pose-vector regularizer (inside fit)
  double alpha_cont_g = 100.0;  // foot height (ground contact)
  double sigma_b = 0.005;       // m, body-side hinge floor
  double sigma_o = 0.005;       // m, object-side hinge floor
};

// Weighted energy contributions; total is their sum.
struct EnergyBreakdown {
  double fit = 0;     // marker L1 + alpha_theta * ||theta||^2
  double colli = 0;   // both signed-distance collision directions
  double cont_o = 0;  // both contact-map attraction terms
  double cont_g = 0;  // foot height
  double total = 0;
};

// Optimization targets: sampled markers + contact maps + the object placed
// in the world frame (cloud lifted to its height).
struct GraspPoseTargets {
  MatXd markers;        // 3 x 143, world frame
  VecXd contact_m;      // 143 probabilities
  VecXd contact_o;      // P probabilities
  MatXd obj_points;     // 3 x P, world frame
  MatXd obj_normals;    // 3 x P
};

GraspPoseTargets make_pose_targets(const ObjectItem& obj, const WholeGraspSample& sample);

// Builds the full energy graph at `theta` (105 x 1). Terms with zero weight
// are skipped entirely. `parts` (optional) receives the weighted breakdown.
ad::Var grasp_pose_energy(ad::Graph<double>& g, const ToyBody& body, ad::Var theta,
                          const GraspPoseTargets& tgt, const PoseEnergyWeights& w,
                          EnergyBreakdown* parts = nullptr);

struct GraspPoseOptions {
  PoseEnergyWeights weights;
  std::array<int, 3> steps{300, 400, 500};
  std::array<double, 3> lr{0.016, 0.012, 0.008};
  std::string trace_csv;  // optional per-step trace output
};

struct GraspPoseReport {
  BodyParams pose;
  // Stage-local energies (each stage's own objective) at stage entry/exit.
  std::array<EnergyBreakdown, 3> stage_start;
  std::array<EnergyBreakdown, 3> stage_end;
  // Full-objective energies at the initial and final parameters.
  EnergyBreakdown full_init, full_final;
  int steps = 0;
  bool aborted = false;  // NaN energy: result holds the last finite state
};

// Three-stage schedule: (t, R) on the fit term, then (t, R, beta, theta_b)
// on the fit term, then (theta_b, theta_h, theta_e) on the full objective.
GraspPoseReport optimize_grasp_pose(const ToyBody& body, const GraspPoseTargets& tgt,
                                    const BodyParams& init, const GraspPoseOptions& opt);

// Yaw-grid initialization: rotates the rest pose about the vertical axis
// through the rest pelvis and picks the (rotation, translation) pair that
// best fits the target markers.
BodyParams init_pose_from_markers(const ToyBody& body, const MatXd& markers_world);

}  // namespace saga
