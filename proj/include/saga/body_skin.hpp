#pragma once

// Template definitions for ToyBody skinning and its reverse pass.
// Included by body_model.hpp; kept separate for readability.

#include "saga/body_model.hpp"

namespace saga {

namespace detail {

template <class T>
Mat3<T> axis_rot(const Vec3<T>& a, T th) {
  // Rodrigues for a unit axis.
  T c = std::cos(th), s = std::sin(th);
  Mat3<T> K;
  K << T(0), -a[2], a[1], a[2], T(0), -a[0], -a[1], a[0], T(0);
  return Mat3<T>::Identity() * c + s * K + (T(1) - c) * (a * a.transpose());
}

template <class T>
Mat3<T> cross_mat(const Vec3<T>& a) {
  Mat3<T> K;
  K << T(0), -a[2], a[1], a[2], T(0), -a[0], -a[1], a[0], T(0);
  return K;
}

}  // namespace detail

template <class T>
ToyBody::Skinned<T> ToyBody::skin(const VecX<T>& theta) const {
  SAGA_REQUIRE(theta.size() == BodyParams::kDim, InvalidInput, "skin: theta must be 105-dim");
  const int J = n_joints(), V = n_verts();

  VecX<T> beta = theta.template segment<BodyParams::kBeta>(BodyParams::off_beta());
  Vec3<T> trans = theta.template segment<3>(BodyParams::off_trans());
  Eigen::Matrix<T, 6, 1> rot6 = theta.template segment<6>(BodyParams::off_rot());

  // Blended local joint offsets and vertex positions.
  MatX<T> off = offsets0.cast<T>();
  {
    VecX<T> d = jblend.cast<T>() * beta;
    for (int j = 0; j < J; ++j) off.col(j) += d.template segment<3>(3 * j);
  }
  MatX<T> loc = local0.cast<T>();
  {
    VecX<T> d = vblend.cast<T>() * beta;
    for (int v = 0; v < V; ++v) loc.col(v) += d.template segment<3>(3 * v);
  }

  Skinned<T> out;
  out.rot_g.resize(J);
  out.rot_l.resize(J);
  out.joints.resize(3, J);

  for (int j = 0; j < J; ++j) {
    Mat3<T> rl = Mat3<T>::Identity();
    if (j == 0) {
      rl = rot6d_to_matrix<T>(rot6);
    } else {
      for (auto& [pi, axis] : joint_dofs[j])
        rl = rl * detail::axis_rot<T>(Vec3<T>(axis.template cast<T>()), theta[pi]);
    }
    out.rot_l[j] = rl;
    if (parents[j] < 0) {
      out.rot_g[j] = rl;
      out.joints.col(j) = trans + off.col(0);
    } else {
      int p = parents[j];
      out.rot_g[j] = out.rot_g[p] * rl;
      out.joints.col(j) = out.rot_g[p] * off.col(j) + out.joints.col(p);
    }
  }

  out.verts.resize(3, V);
  for (int v = 0; v < V; ++v) {
    int j = vtx_joint[v];
    out.verts.col(v) = out.rot_g[j] * loc.col(v) + out.joints.col(j);
  }
  return out;
}

template <class T>
void ToyBody::skin_backward(const VecX<T>& theta, const Skinned<T>& fwd, const MatX<T>& dverts,
                            const MatX<T>& djoints, VecX<T>& dtheta) const {
  const int J = n_joints(), V = n_verts();
  SAGA_REQUIRE(dtheta.size() == BodyParams::kDim, InvalidInput, "skin_backward: dtheta size");

  VecX<T> beta = theta.template segment<BodyParams::kBeta>(BodyParams::off_beta());
  MatX<T> loc = local0.cast<T>();
  {
    VecX<T> d = vblend.cast<T>() * beta;
    for (int v = 0; v < V; ++v) loc.col(v) += d.template segment<3>(3 * v);
  }
  MatX<T> off = offsets0.cast<T>();
  {
    VecX<T> d = jblend.cast<T>() * beta;
    for (int j = 0; j < J; ++j) off.col(j) += d.template segment<3>(3 * j);
  }

  std::vector<Mat3<T>> dRg(J, Mat3<T>::Zero());
  MatX<T> dp = MatX<T>::Zero(3, J);
  if (djoints.size()) dp = djoints;
  VecX<T> dloc_flat = VecX<T>::Zero(3 * V);
  VecX<T> doff_flat = VecX<T>::Zero(3 * J);

  // Vertices: v = Rg[j] loc + p[j].
  for (int v = 0; v < V; ++v) {
    int j = vtx_joint[v];
    Vec3<T> gv = dverts.col(v);
    dRg[j] += gv * loc.col(v).transpose();
    dp.col(j) += gv;
    dloc_flat.template segment<3>(3 * v) = fwd.rot_g[j].transpose() * gv;
  }
  dtheta.template segment<BodyParams::kBeta>(BodyParams::off_beta()) +=
      vblend.cast<T>().transpose() * dloc_flat;

  // Kinematic chain, reverse order. Children have larger indices by
  // construction, so a reverse index sweep is a valid reverse topo order.
  std::vector<Mat3<T>> dRl(J, Mat3<T>::Zero());
  for (int j = J - 1; j >= 0; --j) {
    int p = parents[j];
    if (p >= 0) {
      // Rg[j] = Rg[p] Rl[j]; pj = Rg[p] off[j] + pp.
      dRg[p] += dRg[j] * fwd.rot_l[j].transpose();
      dRl[j] = fwd.rot_g[p].transpose() * dRg[j];
      dRg[p] += dp.col(j) * off.col(j).transpose();
      doff_flat.template segment<3>(3 * j) = fwd.rot_g[p].transpose() * dp.col(j);
      dp.col(p) += dp.col(j);
    } else {
      dRl[j] = dRg[j];
      dtheta.template segment<3>(BodyParams::off_trans()) += dp.col(j);
      doff_flat.template segment<3>(0) = dp.col(j);
    }
  }
  dtheta.template segment<BodyParams::kBeta>(BodyParams::off_beta()) +=
      jblend.cast<T>().transpose() * doff_flat;

  // Local rotations -> angles (and the root 6D params).
  for (int j = 0; j < J; ++j) {
    if (j == 0) {
      Eigen::Matrix<T, 6, 1> rot6 = theta.template segment<6>(BodyParams::off_rot());
      dtheta.template segment<6>(BodyParams::off_rot()) +=
          rot6d_backward<T>(rot6, dRl[0]);
      continue;
    }
    auto& dofs = joint_dofs[j];
    if (dofs.empty()) continue;
    const int n = static_cast<int>(dofs.size());
    // Prefix/suffix products of the per-DOF rotations.
    std::vector<Mat3<T>> R(n);
    for (int k = 0; k < n; ++k)
      R[k] = detail::axis_rot<T>(dofs[k].second.template cast<T>(), theta[dofs[k].first]);
    std::vector<Mat3<T>> pre(n + 1), suf(n + 1);
    pre[0] = Mat3<T>::Identity();
    for (int k = 0; k < n; ++k) pre[k + 1] = pre[k] * R[k];
    suf[n] = Mat3<T>::Identity();
    for (int k = n - 1; k >= 0; --k) suf[k] = R[k] * suf[k + 1];
    for (int k = 0; k < n; ++k) {
      // d(Rl)/dtheta_k = pre[k] * (K R[k]) * suf[k+1], K = [axis]x.
      Mat3<T> dR = pre[k] * detail::cross_mat<T>(dofs[k].second.template cast<T>()) * R[k] *
                   suf[k + 1];
      dtheta[dofs[k].first] += (dRl[j].array() * dR.array()).sum();
    }
  }
}

template <class T>
ad::Var ToyBody::skin_node(ad::Graph<T>& g, ad::Var theta) const {
  SAGA_REQUIRE(g.val(theta).rows() == BodyParams::kDim && g.val(theta).cols() == 1, InvalidInput,
               "skin_node: theta must be 105 x 1");
  VecX<T> th = g.val(theta);
  auto fwd = std::make_shared<Skinned<T>>(skin<T>(th));
  MatX<T> verts = fwd->verts;
  const ToyBody* body = this;
  return g.custom({theta.i}, std::move(verts),
                  [body, theta, fwd, th](ad::Graph<T>& g2, typename ad::Graph<T>::Node& self) {
                    VecX<T> dth = VecX<T>::Zero(BodyParams::kDim);
                    MatX<T> dj;  // no joint gradient path here
                    body->skin_backward<T>(th, *fwd, self.grad, dj, dth);
                    g2.accum(theta.i, MatX<T>(dth));
                  });
}

template <class T>
ad::Var ToyBody::markers_node(ad::Graph<T>& g, ad::Var verts, MarkerLayout l) const {
  const Eigen::VectorXi& ids = layout(l);
  std::vector<int> idx(ids.data(), ids.data() + ids.size());
  return g.gather_cols(verts, idx);
}

template <class T>
ad::Var ToyBody::palm_normal_node(ad::Graph<T>& g, ad::Var verts, bool right) const {
  const std::vector<int>& pf = right ? palm_faces_r : palm_faces_l;
  SAGA_REQUIRE(!pf.empty(), NotReady, "palm faces not set");
  const MatX<T>& vv = g.val(verts);

  // n_raw = sum over faces of (b-a) x (c-a) (area-weighted normals), then
  // normalized. Backward is hand-derived.
  Vec3<T> nr = Vec3<T>::Zero();
  for (int fi : pf) {
    Vec3<T> a = vv.col(faces(fi, 0)), b = vv.col(faces(fi, 1)), c = vv.col(faces(fi, 2));
    nr += (b - a).cross(c - a);
  }
  T len = nr.norm();
  SAGA_REQUIRE(len > T(1e-12), UnsupportedGeometry, "degenerate palm normal");
  MatX<T> val = nr / len;

  Faces const* fcs = &faces;
  return g.custom(
      {verts.i}, std::move(val),
      [verts, pf, fcs, nr, len](ad::Graph<T>& g2, typename ad::Graph<T>::Node& self) {
        // d(n/|n|) = (I - nn^T)/|n| dn_raw.
        Vec3<T> nhat = nr / len;
        Vec3<T> gn = self.grad.col(0);
        Vec3<T> graw = (gn - nhat * (nhat.dot(gn))) / len;
        const MatX<T>& vv2 = g2.val(verts);
        MatX<T> gv = MatX<T>::Zero(3, vv2.cols());
        for (int fi : pf) {
          int ia = (*fcs)(fi, 0), ib = (*fcs)(fi, 1), ic = (*fcs)(fi, 2);
          Vec3<T> a = vv2.col(ia), b = vv2.col(ib), c = vv2.col(ic);
          // n_raw += (b-a) x (c-a): d/da = (c-b) x graw? use product rule:
          // d n_raw = db x (c-a) + (b-a) x dc - da x (c-a) - (b-a) x da.
          gv.col(ib) += (c - a).cross(graw);
          gv.col(ic) += graw.cross(b - a);
          gv.col(ia) += (a - c).cross(graw) + graw.cross(a - b);
        }
        g2.accum(verts.i, gv);
      });
}

}  // namespace saga
