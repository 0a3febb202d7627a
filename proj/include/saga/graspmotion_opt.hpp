#pragma once

#include <array>
#include <string>
#include <vector>

#include "saga/body_model.hpp"
#include "saga/grasppose_opt.hpp"
#include "saga/motionfill.hpp"

namespace saga {

// Weights of the whole-sequence motion energy. The pose weights supply the
// per-frame fit regularizer, the object-side collision hinge and the
// object contact attraction; the remaining fields weight the sequence-level
// terms. `sigma` is the palm-facing gate radius (only palm vertices closer
// than this to the object contribute), `sigma_v` the per-frame displacement
// the skating penalty tolerates at contact-labeled feet (working units,
// metres per frame; the evaluation metric's physical 75 mm/s threshold is a
// separate quantity).
struct MotionEnergyWeights {
  PoseEnergyWeights pose;           // alpha_theta / alpha_colli_O / alpha_cont_o / sigma_o
  double alpha_facing = 1.0;        // palm-facing term (1 = plain time profile)
  double alpha_smooth_latent = 1.0; // velocity-latent smoothness
  double alpha_smooth_hand = 10.0;  // hand-vertex velocity damping
  double alpha_skate = 100.0;       // foot-skating hinge
  double sigma = 0.01;              // m, palm-facing gate radius
  double sigma_v = 0.1;             // per-frame displacement threshold
};

// Weighted contributions of the motion energy; total is their sum.
struct MotionEnergyBreakdown {
  double fit = 0;     // per-frame marker L1 + pose regularizer
  double colli = 0;   // object points penetrating the hand, all frames
  double cont_o = 0;  // object contact attraction, last five frames
  double facing = 0;  // palm-facing alignment, time-decayed
  double smooth = 0;  // latent + hand-vertex smoothness
  double skate = 0;   // contact-labeled foot displacement hinge
  double total = 0;
};

// Optimization targets for one sequence: per-frame markers, the object
// placed in the world frame with its contact map, and the foot-contact
// labels gating the skating term. The normals ride along with the cloud
// for serialization parity; the energy itself only reads the points.
struct MotionOptTargets {
  std::vector<MatXd> frames;  // T+1 marker targets, each 3 x 79, world frame
  VecXd contact_o;            // P object contact probabilities
  MatXd obj_points;           // 3 x P, world frame
  MatXd obj_normals;          // 3 x P
  MatXd foot;                 // 4 x (T+1) heel/toe contact labels
  bool right_hand = true;     // which palm the facing term aligns
};

// Time profile of the palm-facing term over a sequence of T+1 frames:
// exactly 1 at the first frame and exactly 0 at the last.
inline double facing_time_weight(int t, int T) {
  double u = static_cast<double>(t) / T;
  return 1.0 - u * u;
}

// Palm-facing alignment at one frame. For every palm vertex (columns of
// `palm`, 3 x K) within `sigma` of the object cloud — a hard gate fixed per
// evaluation; vertices farther away contribute exactly zero — penalizes the
// squared deviation from 1 of the cosine between the unit `normal` and the
// direction to the vertex's nearest object point. A normal pointing exactly
// at the nearest point contributes 0; an exactly opposite normal
// contributes 4 per gated vertex.
ad::Var palm_facing_node(ad::Graph<double>& g, ad::Var palm, ad::Var normal, const MatXd& obj,
                         double sigma);

// Skating hinge for one frame step: for each heel/toe vertex (columns of
// the 3 x 4 inputs) masked as in contact at both ends of the step,
// penalizes the squared excess of the displacement over `sigma_v`.
// Returns an empty Var when no vertex is gated.
ad::Var foot_skate_node(ad::Graph<double>& g, ad::Var feet_a, ad::Var feet_b,
                        const std::array<bool, 4>& mask, double sigma_v);

// Builds the full sequence energy over per-frame parameter vectors
// (each 105 x 1). Terms with zero weight are skipped entirely. The
// autoencoder supplies the velocity latents of the smoothness term.
// `parts` (optional) receives the weighted breakdown.
ad::Var motion_energy(ad::Graph<double>& g, const ToyBody& body,
                      const std::vector<ad::Var>& thetas, const MarkerVelAeT<double>& ae,
                      const MotionOptTargets& tgt, const MotionEnergyWeights& w,
                      MotionEnergyBreakdown* parts = nullptr);

struct GraspMotionOptions {
  MotionEnergyWeights weights;
  std::array<int, 2> steps{100, 300};
  // First-frame parameters start at a higher rate; the shared schedule
  // steps both groups down to 0.01 after step 60 and 0.003 after step 80
  // in stage 1, and from 0.01 to 0.005 after step 150 in stage 2.
  double lr_first_frame = 0.1;
  double lr_rest = 0.01;
  std::string trace_csv;  // optional per-step trace output
};

struct GraspMotionReport {
  std::vector<BodyParams> seq;
  // Stage-local energies (each stage's own objective) at stage entry/exit.
  std::array<MotionEnergyBreakdown, 2> stage_start, stage_end;
  // Full-objective energies at the initial and final parameters.
  MotionEnergyBreakdown full_init, full_final;
  int steps = 0;
  bool aborted = false;  // NaN energy: result holds the last finite state
};

// Two-stage schedule over the whole sequence with one shared body shape:
// stage 1 descends the summed fit term only, stage 2 the full objective.
GraspMotionReport optimize_grasp_motion(const ToyBody& body, const MarkerVelAeT<double>& ae,
                                        const MotionOptTargets& tgt,
                                        const std::vector<BodyParams>& init,
                                        const GraspMotionOptions& opt);

// Double-precision copy of a float velocity autoencoder (checkpoints store
// float32; the sequence energy runs in double).
MarkerVelAeT<double> widen(const MarkerVelAe& ae);

}  // namespace saga
