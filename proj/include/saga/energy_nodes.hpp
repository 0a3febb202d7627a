#pragma once

#include "saga/autodiff.hpp"

namespace saga::ad {

// Signed distance of each varying point (column of X) to a fixed oriented
// cloud: magnitude is the distance to the nearest cloud point, the sign is
// positive outside (along the nearest point's normal). Signs and nearest
// neighbours are treated as constants of the current configuration, so
// gradients flow only through the distance magnitude.
template <class T>
Var signed_dist_to_cloud(Graph<T>& g, Var X, const MatX<T>& cloud, const MatX<T>& normals) {
  const MatX<T>& xv = g.val(X);
  SAGA_REQUIRE(xv.rows() == 3 && cloud.rows() == 3 && normals.rows() == 3 &&
                   cloud.cols() == normals.cols(),
               InvalidInput, "signed_dist_to_cloud: bad shapes");
  const Eigen::Index N = xv.cols();
  MatX<T> out(1, N);
  std::vector<int> arg(static_cast<size_t>(N));
  std::vector<T> sgn(static_cast<size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index bi;
    T d2 = (cloud.colwise() - VecX<T>(xv.col(i))).colwise().squaredNorm().minCoeff(&bi);
    Vec3<T> diff = xv.col(i) - cloud.col(bi);
    T s = diff.dot(normals.col(bi)) >= T(0) ? T(1) : T(-1);
    out(0, i) = s * std::sqrt(d2);
    arg[static_cast<size_t>(i)] = static_cast<int>(bi);
    sgn[static_cast<size_t>(i)] = s;
  }
  return g.custom({X.i}, std::move(out),
                  [X, &cloud, arg = std::move(arg), sgn = std::move(sgn)](
                      Graph<T>& gg, typename Graph<T>::Node& self) {
                    const MatX<T>& xv = gg.val(X);
                    MatX<T> gr = MatX<T>::Zero(3, xv.cols());
                    for (Eigen::Index i = 0; i < xv.cols(); ++i) {
                      Vec3<T> diff = xv.col(i) - cloud.col(arg[static_cast<size_t>(i)]);
                      T d = diff.norm();
                      if (d > T(0))
                        gr.col(i) = self.grad(0, i) * sgn[static_cast<size_t>(i)] * diff / d;
                    }
                    gg.accum(X.i, gr);
                  });
}

// Signed distance of fixed probe points to the varying point set X whose
// per-column outward normals are supplied (and treated as constants):
// positive when the probe lies outside the surface the points sample.
// Gradients flow into the nearest X column per probe.
template <class T>
Var signed_dist_probes(Graph<T>& g, const MatX<T>& probes, Var X, const MatX<T>& normals) {
  const MatX<T>& xv = g.val(X);
  SAGA_REQUIRE(probes.rows() == 3 && xv.rows() == 3 && normals.rows() == 3 &&
                   normals.cols() == xv.cols(),
               InvalidInput, "signed_dist_probes: bad shapes");
  const Eigen::Index Q = probes.cols();
  MatX<T> out(1, Q);
  std::vector<int> arg(static_cast<size_t>(Q));
  std::vector<T> sgn(static_cast<size_t>(Q));
  for (Eigen::Index q = 0; q < Q; ++q) {
    Eigen::Index bi;
    T d2 = (xv.colwise() - VecX<T>(probes.col(q))).colwise().squaredNorm().minCoeff(&bi);
    Vec3<T> diff = Vec3<T>(probes.col(q)) - Vec3<T>(xv.col(bi));
    T s = diff.dot(normals.col(bi)) >= T(0) ? T(1) : T(-1);
    out(0, q) = s * std::sqrt(d2);
    arg[static_cast<size_t>(q)] = static_cast<int>(bi);
    sgn[static_cast<size_t>(q)] = s;
  }
  return g.custom({X.i}, std::move(out),
                  [X, &probes, arg = std::move(arg), sgn = std::move(sgn)](
                      Graph<T>& gg, typename Graph<T>::Node& self) {
                    const MatX<T>& xv = gg.val(X);
                    MatX<T> gr = MatX<T>::Zero(3, xv.cols());
                    for (Eigen::Index q = 0; q < probes.cols(); ++q) {
                      int j = arg[static_cast<size_t>(q)];
                      Vec3<T> diff = Vec3<T>(xv.col(j)) - Vec3<T>(probes.col(q));
                      T d = diff.norm();
                      if (d > T(0))
                        gr.col(j) += self.grad(0, q) * sgn[static_cast<size_t>(q)] * diff / d;
                    }
                    gg.accum(X.i, gr);
                  });
}

// Like signed_dist_probes, but the caller supplies the per-probe sign
// (+1 outside / -1 inside), typically from an exact containment test
// against the solid the points sample. Nearest-neighbour normals flip
// sign spuriously for probes far from a sparse non-convex point set;
// a containment sign stays correct everywhere.
template <class T>
Var signed_dist_probes_signed(Graph<T>& g, const MatX<T>& probes, Var X, const VecX<T>& sign) {
  const MatX<T>& xv = g.val(X);
  SAGA_REQUIRE(probes.rows() == 3 && xv.rows() == 3 && sign.size() == probes.cols(), InvalidInput,
               "signed_dist_probes_signed: bad shapes");
  const Eigen::Index Q = probes.cols();
  MatX<T> out(1, Q);
  std::vector<int> arg(static_cast<size_t>(Q));
  std::vector<T> sgn(static_cast<size_t>(Q));
  for (Eigen::Index q = 0; q < Q; ++q) {
    Eigen::Index bi;
    T d2 = (xv.colwise() - VecX<T>(probes.col(q))).colwise().squaredNorm().minCoeff(&bi);
    T s = sign[q] < T(0) ? T(-1) : T(1);
    out(0, q) = s * std::sqrt(d2);
    arg[static_cast<size_t>(q)] = static_cast<int>(bi);
    sgn[static_cast<size_t>(q)] = s;
  }
  return g.custom({X.i}, std::move(out),
                  [X, &probes, arg = std::move(arg), sgn = std::move(sgn)](
                      Graph<T>& gg, typename Graph<T>::Node& self) {
                    const MatX<T>& xv = gg.val(X);
                    MatX<T> gr = MatX<T>::Zero(3, xv.cols());
                    for (Eigen::Index q = 0; q < probes.cols(); ++q) {
                      int j = arg[static_cast<size_t>(q)];
                      Vec3<T> diff = Vec3<T>(xv.col(j)) - Vec3<T>(probes.col(q));
                      T d = diff.norm();
                      if (d > T(0))
                        gr.col(j) += self.grad(0, q) * sgn[static_cast<size_t>(q)] * diff / d;
                    }
                    gg.accum(X.i, gr);
                  });
}

// Elementwise collision hinge: max(-s, sigma) - sigma. Zero until the
// signed distance drops below -sigma, then grows linearly with depth; the
// sigma floor keeps grazing-contact points out of the penalty.
template <class T>
Var collision_hinge(Graph<T>& g, Var s, T sigma) {
  const MatX<T>& sv = g.val(s);
  MatX<T> out = sv.unaryExpr([sigma](T x) { return std::max(-x, sigma) - sigma; });
  return g.custom({s.i}, std::move(out),
                  [s, sigma](Graph<T>& gg, typename Graph<T>::Node& self) {
                    const MatX<T>& sv = gg.val(s);
                    MatX<T> gr = MatX<T>::Zero(sv.rows(), sv.cols());
                    for (Eigen::Index j = 0; j < sv.cols(); ++j)
                      for (Eigen::Index i = 0; i < sv.rows(); ++i)
                        if (-sv(i, j) > sigma) gr(i, j) = -self.grad(i, j);
                    gg.accum(s.i, gr);
                  });
}

}  // namespace saga::ad
