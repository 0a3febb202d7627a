#pragma once

#include <string>
#include <vector>

#include "saga/autodiff.hpp"
#include "saga/common.hpp"
#include "saga/geometry.hpp"

namespace saga {

// Full-body pose/shape parameter vector, 105 scalars:
//   beta (10 shape dims), trans (3), rot6 (6, root orientation),
//   theta_b (32 body joint angles), theta_h (48 hand articulation),
//   theta_e (6, inert placeholder dims carried for interface parity).
// Packing order is pinned: [beta | trans | rot6 | theta_b | theta_h | theta_e].
struct BodyParams {
  static constexpr int kBeta = 10, kTrans = 3, kRot = 6, kBody = 32, kHand = 48, kExtra = 6;
  static constexpr int kDim = kBeta + kTrans + kRot + kBody + kHand + kExtra;  // 105

  VecXd beta = VecXd::Zero(kBeta);
  VecXd trans = VecXd::Zero(kTrans);
  VecXd rot6 = VecXd::Zero(kRot);
  VecXd theta_b = VecXd::Zero(kBody);
  VecXd theta_h = VecXd::Zero(kHand);
  VecXd theta_e = VecXd::Zero(kExtra);

  // Neutral pose: identity root rotation, everything else zero.
  static BodyParams rest() {
    BodyParams p;
    p.rot6 << 1, 0, 0, 0, 1, 0;
    return p;
  }

  VecXd pack() const;
  static BodyParams unpack(const VecXd& v);

  static constexpr int off_beta() { return 0; }
  static constexpr int off_trans() { return kBeta; }
  static constexpr int off_rot() { return kBeta + kTrans; }
  static constexpr int off_body() { return kBeta + kTrans + kRot; }
  static constexpr int off_hand() { return off_body() + kBody; }
  static constexpr int off_extra() { return off_hand() + kHand; }
};

// Marker layout selector. grasp143 = 49 body + 14 face + 6 hand-back +
// 30 finger + 44 palm markers; motion79 = the 69 surface markers
// (49 + 14 + 6) plus 10 fingertips.
enum class MarkerLayout { kGrasp143, kMotion79 };

// Articulated toy body: closed box parts rigidly skinned to a kinematic
// tree, with 10 linear blendshapes acting on local vertex positions and
// joint offsets. All template data is procedural (see builtin_template()).
class ToyBody {
 public:
  // --- template data (filled by the builder / loader) -------------------
  MatXd local0;             // 3 x V vertex positions in their joint frame
  MatXd vblend;             // 3V x 10 vertex blendshape displacements
  Faces faces;              // F x 3
  std::vector<std::pair<int, int>> parts;   // closed-part face ranges
  Eigen::VectorXi vtx_joint;                // V, owning joint per vertex
  Eigen::VectorXi parents;                  // J (parent[0] = -1)
  MatXd offsets0;                           // 3 x J local joint offsets (root: world rest pos)
  MatXd jblend;                             // 3J x 10 joint offset blendshapes
  std::vector<std::string> joint_names;
  // Per-joint ordered DOFs: (packed param index, rotation axis).
  std::vector<std::vector<std::pair<int, Vec3<double>>>> joint_dofs;

  Eigen::VectorXi markers_grasp;   // 143 vertex ids
  Eigen::VectorXi markers_motion;  // 79 vertex ids
  Eigen::VectorXi heel_toe;        // 4 vertex ids: l_heel, r_heel, l_toe, r_toe
  Eigen::VectorXi fingertips;      // 10 vertex ids
  std::vector<int> hand_verts_l, hand_verts_r;   // palm + finger vertices
  std::vector<int> palm_faces_l, palm_faces_r;   // inner-palm face ids
  int palm_anchor_l = -1, palm_anchor_r = -1;    // inner-palm center vertex
  std::vector<std::string> marker_group_names;   // per grasp143 marker
  Eigen::VectorXi foot_verts;                    // soles, for ground checks

  int n_verts() const { return static_cast<int>(local0.cols()); }
  int n_joints() const { return static_cast<int>(offsets0.cols()); }
  int n_faces() const { return static_cast<int>(faces.rows()); }

  const Eigen::VectorXi& layout(MarkerLayout l) const {
    return l == MarkerLayout::kGrasp143 ? markers_grasp : markers_motion;
  }

  // --- kinematics ---------------------------------------------------------

  template <class T>
  struct Skinned {
    MatX<T> verts;                // 3 x V world
    MatX<T> joints;               // 3 x J world
    std::vector<Mat3<T>> rot_g;   // global joint rotations
    std::vector<Mat3<T>> rot_l;   // local joint rotations
  };

  template <class T>
  Skinned<T> skin(const VecX<T>& theta) const;

  // Reverse step for skin(): dL/dverts, dL/djoints -> accumulate dL/dtheta.
  template <class T>
  void skin_backward(const VecX<T>& theta, const Skinned<T>& fwd, const MatX<T>& dverts,
                     const MatX<T>& djoints, VecX<T>& dtheta) const;

  // Differentiable skinning as a graph node: theta (105 x 1) -> verts (3 x V).
  template <class T>
  ad::Var skin_node(ad::Graph<T>& g, ad::Var theta) const;

  // Markers for a layout, as a graph node (gather of vertex columns).
  template <class T>
  ad::Var markers_node(ad::Graph<T>& g, ad::Var verts, MarkerLayout l) const;

  // Unit palm normal (area-weighted over the inner palm faces) as a node.
  template <class T>
  ad::Var palm_normal_node(ad::Graph<T>& g, ad::Var verts, bool right) const;

  // --- plain evaluations ----------------------------------------------------

  MatXd markers(const BodyParams& p, MarkerLayout l) const;  // 3 x M
  MatXd joint_positions(const BodyParams& p) const;          // 3 x J
  TriMesh mesh(const BodyParams& p) const;
  TriMesh mesh_from_verts(const MatXd& verts3xV) const;
  MatXd vertex_normals(const MatXd& verts3xV) const;  // 3 x V, area weighted

  // --- serialization ---------------------------------------------------------
  void save(const std::string& path) const;
  static ToyBody load(const std::string& path);
};

// The procedural template shipped with the library.
const ToyBody& builtin_template();

// Indices into body.parts of the closed parts made entirely of hand
// vertices (palm and finger segments of both hands).
std::vector<int> hand_part_indices(const ToyBody& body);

// Containment sign of each probe (3 x Q) against the hand solids at the
// given vertex configuration: -1 inside any hand part, +1 otherwise.
VecXd hand_containment_sign(const ToyBody& body, const MatXd& verts3xV, const MatXd& probes3xQ);

}  // namespace saga
