#include "saga/body_model.hpp"

#include <limits>

#include "saga/body_skin.hpp"
#include "saga/tensor_file.hpp"

namespace saga {

VecXd BodyParams::pack() const {
  VecXd v(kDim);
  v.segment<kBeta>(off_beta()) = beta;
  v.segment<kTrans>(off_trans()) = trans;
  v.segment<kRot>(off_rot()) = rot6;
  v.segment<kBody>(off_body()) = theta_b;
  v.segment<kHand>(off_hand()) = theta_h;
  v.segment<kExtra>(off_extra()) = theta_e;
  return v;
}

BodyParams BodyParams::unpack(const VecXd& v) {
  SAGA_REQUIRE(v.size() == kDim, InvalidInput, "BodyParams::unpack: wrong size");
  BodyParams p;
  p.beta = v.segment<kBeta>(off_beta());
  p.trans = v.segment<kTrans>(off_trans());
  p.rot6 = v.segment<kRot>(off_rot());
  p.theta_b = v.segment<kBody>(off_body());
  p.theta_h = v.segment<kHand>(off_hand());
  p.theta_e = v.segment<kExtra>(off_extra());
  return p;
}

MatXd ToyBody::markers(const BodyParams& p, MarkerLayout l) const {
  auto s = skin<double>(p.pack());
  const Eigen::VectorXi& ids = layout(l);
  MatXd out(3, ids.size());
  for (Eigen::Index i = 0; i < ids.size(); ++i) out.col(i) = s.verts.col(ids[i]);
  return out;
}

MatXd ToyBody::joint_positions(const BodyParams& p) const {
  return skin<double>(p.pack()).joints;
}

TriMesh ToyBody::mesh(const BodyParams& p) const {
  return mesh_from_verts(skin<double>(p.pack()).verts);
}

TriMesh ToyBody::mesh_from_verts(const MatXd& verts3xV) const {
  TriMesh m;
  m.V = verts3xV.transpose();
  m.F = faces;
  m.parts = parts;
  return m;
}

MatXd ToyBody::vertex_normals(const MatXd& verts3xV) const {
  MatXd n = MatXd::Zero(3, verts3xV.cols());
  for (Eigen::Index t = 0; t < faces.rows(); ++t) {
    Vec3<double> a = verts3xV.col(faces(t, 0));
    Vec3<double> b = verts3xV.col(faces(t, 1));
    Vec3<double> c = verts3xV.col(faces(t, 2));
    Vec3<double> fn = (b - a).cross(c - a);  // area weighted
    for (int k = 0; k < 3; ++k) n.col(faces(t, k)) += fn;
  }
  for (Eigen::Index v = 0; v < n.cols(); ++v) {
    double len = n.col(v).norm();
    if (len > 1e-12) n.col(v) /= len;
  }
  return n;
}

std::vector<int> hand_part_indices(const ToyBody& body) {
  std::vector<char> is_hand(static_cast<size_t>(body.n_verts()), 0);
  for (int v : body.hand_verts_l) is_hand[static_cast<size_t>(v)] = 1;
  for (int v : body.hand_verts_r) is_hand[static_cast<size_t>(v)] = 1;
  std::vector<int> out;
  for (size_t pi = 0; pi < body.parts.size(); ++pi) {
    auto [fb, fe] = body.parts[pi];
    bool all = fe > fb;
    for (int f = fb; f < fe && all; ++f)
      for (int k = 0; k < 3; ++k)
        if (!is_hand[static_cast<size_t>(body.faces(f, k))]) {
          all = false;
          break;
        }
    if (all) out.push_back(static_cast<int>(pi));
  }
  return out;
}

VecXd hand_containment_sign(const ToyBody& body, const MatXd& verts3xV, const MatXd& probes3xQ) {
  SAGA_REQUIRE(verts3xV.rows() == 3 && verts3xV.cols() == body.n_verts() && probes3xQ.rows() == 3,
               InvalidInput, "hand_containment_sign: bad shapes");
  std::vector<int> hp = hand_part_indices(body);
  // Per-part bounding boxes prefilter the (usually empty) containment tests.
  std::vector<Vec3d> lo(hp.size()), hi(hp.size());
  for (size_t i = 0; i < hp.size(); ++i) {
    auto [fb, fe] = body.parts[static_cast<size_t>(hp[i])];
    Vec3d l = Vec3d::Constant(std::numeric_limits<double>::infinity()), h = -l;
    for (int f = fb; f < fe; ++f)
      for (int k = 0; k < 3; ++k) {
        Vec3d v = verts3xV.col(body.faces(f, k));
        l = l.cwiseMin(v);
        h = h.cwiseMax(v);
      }
    lo[i] = l;
    hi[i] = h;
  }
  VecXd sign = VecXd::Ones(probes3xQ.cols());
  TriMesh mesh;  // built lazily, only if some probe enters a hand box
  for (Eigen::Index q = 0; q < probes3xQ.cols(); ++q) {
    Vec3d p = probes3xQ.col(q);
    for (size_t i = 0; i < hp.size(); ++i) {
      if ((p.array() < lo[i].array()).any() || (p.array() > hi[i].array()).any()) continue;
      if (mesh.V.size() == 0) mesh = body.mesh_from_verts(verts3xV);
      auto [fb, fe] = body.parts[static_cast<size_t>(hp[i])];
      if (std::abs(winding_number(p, mesh, fb, fe)) > 0.5) {
        sign[q] = -1.0;
        break;
      }
    }
  }
  return sign;
}

namespace {

MatXf to_f(const Eigen::VectorXi& v) {
  MatXf m(v.size(), 1);
  for (Eigen::Index i = 0; i < v.size(); ++i) m(i, 0) = static_cast<float>(v[i]);
  return m;
}

Eigen::VectorXi to_i(const MatXf& m) {
  Eigen::VectorXi v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = static_cast<int>(std::lround(m(i, 0)));
  return v;
}

}  // namespace

void ToyBody::save(const std::string& path) const {
  TensorFile tf;
  tf.meta["kind"] = "toy_body_template";
  tf.meta["version"] = 1;
  auto names = nlohmann::ordered_json::array();
  for (auto& n : joint_names) names.push_back(n);
  tf.meta["joint_names"] = names;
  auto groups = nlohmann::ordered_json::array();
  for (auto& n : marker_group_names) groups.push_back(n);
  tf.meta["marker_groups"] = groups;
  tf.meta["palm_anchor_l"] = palm_anchor_l;
  tf.meta["palm_anchor_r"] = palm_anchor_r;

  tf.set("local0", MatXd(local0));
  tf.set("vblend", MatXd(vblend));
  MatXd fc = faces.cast<double>();
  tf.set("faces", fc);
  MatXd pr(parts.size(), 2);
  for (size_t i = 0; i < parts.size(); ++i) pr.row(i) << parts[i].first, parts[i].second;
  tf.set("parts", pr);
  tf.set("vtx_joint", MatXd(to_f(vtx_joint).cast<double>()));
  tf.set("parents", MatXd(to_f(parents).cast<double>()));
  tf.set("offsets0", MatXd(offsets0));
  tf.set("jblend", MatXd(jblend));
  MatXd dofs(0, 5);
  {
    std::vector<Eigen::Matrix<double, 1, 5>> rows;
    for (size_t j = 0; j < joint_dofs.size(); ++j)
      for (auto& [pi, ax] : joint_dofs[j]) {
        Eigen::Matrix<double, 1, 5> r;
        r << static_cast<double>(j), pi, ax[0], ax[1], ax[2];
        rows.push_back(r);
      }
    dofs.resize(static_cast<Eigen::Index>(rows.size()), 5);
    for (size_t i = 0; i < rows.size(); ++i) dofs.row(static_cast<Eigen::Index>(i)) = rows[i];
  }
  tf.set("dofs", dofs);
  tf.set("markers_grasp", MatXd(to_f(markers_grasp).cast<double>()));
  tf.set("markers_motion", MatXd(to_f(markers_motion).cast<double>()));
  tf.set("heel_toe", MatXd(to_f(heel_toe).cast<double>()));
  tf.set("fingertips", MatXd(to_f(fingertips).cast<double>()));
  auto setvec = [&tf](const std::string& n, const std::vector<int>& v) {
    MatXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    tf.set(n, m);
  };
  setvec("hand_verts_l", hand_verts_l);
  setvec("hand_verts_r", hand_verts_r);
  setvec("palm_faces_l", palm_faces_l);
  setvec("palm_faces_r", palm_faces_r);
  tf.set("foot_verts", MatXd(to_f(foot_verts).cast<double>()));
  tf.save(path);
}

ToyBody ToyBody::load(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  SAGA_REQUIRE(tf.meta.value("kind", std::string()) == "toy_body_template", InvalidInput,
               "not a body template: " + path);
  ToyBody b;
  b.local0 = tf.get("local0");
  b.vblend = tf.get("vblend");
  MatXd fc = tf.get("faces");
  b.faces.resize(fc.rows(), 3);
  for (Eigen::Index i = 0; i < fc.rows(); ++i)
    for (int k = 0; k < 3; ++k) b.faces(i, k) = static_cast<int>(std::lround(fc(i, k)));
  MatXd pr = tf.get("parts");
  for (Eigen::Index i = 0; i < pr.rows(); ++i)
    b.parts.emplace_back(static_cast<int>(std::lround(pr(i, 0))),
                         static_cast<int>(std::lround(pr(i, 1))));
  b.vtx_joint = to_i(tf.get_f("vtx_joint"));
  b.parents = to_i(tf.get_f("parents"));
  b.offsets0 = tf.get("offsets0");
  b.jblend = tf.get("jblend");
  MatXd dofs = tf.get("dofs");
  b.joint_dofs.resize(static_cast<size_t>(b.parents.size()));
  for (Eigen::Index i = 0; i < dofs.rows(); ++i) {
    int j = static_cast<int>(std::lround(dofs(i, 0)));
    int pi = static_cast<int>(std::lround(dofs(i, 1)));
    b.joint_dofs[static_cast<size_t>(j)].push_back(
        {pi, Vec3<double>(dofs(i, 2), dofs(i, 3), dofs(i, 4))});
  }
  b.markers_grasp = to_i(tf.get_f("markers_grasp"));
  b.markers_motion = to_i(tf.get_f("markers_motion"));
  b.heel_toe = to_i(tf.get_f("heel_toe"));
  b.fingertips = to_i(tf.get_f("fingertips"));
  auto getvec = [&tf](const std::string& n) {
    MatXd m = tf.get(n);
    std::vector<int> v(static_cast<size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<size_t>(i)] =
        static_cast<int>(std::lround(m(i, 0)));
    return v;
  };
  b.hand_verts_l = getvec("hand_verts_l");
  b.hand_verts_r = getvec("hand_verts_r");
  b.palm_faces_l = getvec("palm_faces_l");
  b.palm_faces_r = getvec("palm_faces_r");
  b.foot_verts = to_i(tf.get_f("foot_verts"));
  b.palm_anchor_l = tf.meta.value("palm_anchor_l", -1);
  b.palm_anchor_r = tf.meta.value("palm_anchor_r", -1);
  for (auto& n : tf.meta.value("joint_names", nlohmann::ordered_json::array()))
    b.joint_names.push_back(n.get<std::string>());
  for (auto& n : tf.meta.value("marker_groups", nlohmann::ordered_json::array()))
    b.marker_group_names.push_back(n.get<std::string>());
  return b;
}

// The library uses exactly two scalar types: float for training, double
// for optimization and gradient checks.
template ToyBody::Skinned<float> ToyBody::skin(const VecX<float>&) const;
template ToyBody::Skinned<double> ToyBody::skin(const VecX<double>&) const;
template void ToyBody::skin_backward(const VecX<float>&, const Skinned<float>&,
                                     const MatX<float>&, const MatX<float>&, VecX<float>&) const;
template void ToyBody::skin_backward(const VecX<double>&, const Skinned<double>&,
                                     const MatX<double>&, const MatX<double>&,
                                     VecX<double>&) const;
template ad::Var ToyBody::skin_node(ad::Graph<float>&, ad::Var) const;
template ad::Var ToyBody::skin_node(ad::Graph<double>&, ad::Var) const;
template ad::Var ToyBody::markers_node(ad::Graph<float>&, ad::Var, MarkerLayout) const;
template ad::Var ToyBody::markers_node(ad::Graph<double>&, ad::Var, MarkerLayout) const;
template ad::Var ToyBody::palm_normal_node(ad::Graph<float>&, ad::Var, bool) const;
template ad::Var ToyBody::palm_normal_node(ad::Graph<double>&, ad::Var, bool) const;

}  // namespace saga
