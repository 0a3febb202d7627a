#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "saga/common.hpp"

namespace saga {

// Point cloud with outward unit normals (P x 3 each).
struct ObjectCloud {
  Points points;
  Points normals;
};

// Triangle mesh, optionally decomposed into closed parts (face index ranges).
// A body assembled from closed primitive parts keeps per-part ranges so
// inside tests treat it as a union of solids.
struct TriMesh {
  Points V;
  Faces F;
  std::vector<std::pair<int, int>> parts;  // [begin, end) face ranges; empty = single part
};

// --- distances ---------------------------------------------------------

// Index of the nearest point of `cloud` to `x` plus its squared distance.
// Plain scalar accumulation so an independent brute-force oracle written
// the obvious way produces bit-identical values.
int nearest_point(const Vec3<double>& x, const Points& cloud, double* sq_out);

double min_sq_dist(const Vec3<double>& x, const Points& cloud);

// Signed distance from `x` to the cloud surface: magnitude is the nearest
// point distance, the sign comes from the nearest point's outward normal
// (negative = inside).
double signed_dist(const Vec3<double>& x, const ObjectCloud& cloud);

// Exact point-to-triangle distance (squared).
double point_triangle_sq_dist(const Vec3<double>& p, const Vec3<double>& a,
                              const Vec3<double>& b, const Vec3<double>& c);

double min_dist_to_mesh(const Vec3<double>& x, const TriMesh& m);

// --- inside tests ------------------------------------------------------

// Generalized winding number of `x` w.r.t. faces [fb, fe) of the mesh.
double winding_number(const Vec3<double>& x, const TriMesh& m, int fb, int fe);

// Union-of-closed-parts inside test (uses parts if present).
bool inside_mesh(const Vec3<double>& x, const TriMesh& m);

bool inside_cloud(const Vec3<double>& x, const ObjectCloud& cloud);

// --- interpenetration --------------------------------------------------

struct PenetrationStats {
  double volume_cm3 = 0.0;
  double max_depth_cm = 0.0;
  double mean_depth_cm = 0.0;
  long voxels = 0;  // voxels counted inside both solids
};

// Overlap of a body mesh with an object, measured on a voxel grid over the
// intersection of the two bounding boxes (voxel edge in meters, default
// 2 mm). Depth statistics come from body vertices inside the object.
PenetrationStats interpenetration(const TriMesh& body, const ObjectCloud& obj,
                                  double voxel = 0.002);
PenetrationStats interpenetration(const TriMesh& body, const TriMesh& obj,
                                  double voxel = 0.002);

// --- rotations ---------------------------------------------------------

// 6D rotation parameterization: the first two columns of R stacked
// [r00 r10 r20 r01 r11 r21]; decoding Gram-Schmidts them back. Throws
// DegenerateRotation when a column vanishes or the pair is collinear.
template <class T>
Mat3<T> rot6d_to_matrix(const Eigen::Matrix<T, 6, 1>& a) {
  Vec3<T> a1 = a.template head<3>();
  Vec3<T> a2 = a.template tail<3>();
  T n1 = a1.norm();
  if (!(n1 > T(1e-8))) throw DegenerateRotation("rot6d: first axis has near-zero norm");
  Vec3<T> b1 = a1 / n1;
  Vec3<T> u2 = a2 - b1.dot(a2) * b1;
  T n2 = u2.norm();
  if (!(n2 > T(1e-8))) throw DegenerateRotation("rot6d: axes are collinear");
  Vec3<T> b2 = u2 / n2;
  Vec3<T> b3 = b1.cross(b2);
  Mat3<T> R;
  R.col(0) = b1;
  R.col(1) = b2;
  R.col(2) = b3;
  return R;
}

template <class T>
Eigen::Matrix<T, 6, 1> matrix_to_rot6d(const Mat3<T>& R) {
  Eigen::Matrix<T, 6, 1> a;
  a.template head<3>() = R.col(0);
  a.template tail<3>() = R.col(1);
  return a;
}

// Reverse-mode derivative of rot6d_to_matrix: given dL/dR, accumulate
// dL/da. Mirrors the Gram-Schmidt chain above.
template <class T>
Eigen::Matrix<T, 6, 1> rot6d_backward(const Eigen::Matrix<T, 6, 1>& a, const Mat3<T>& dR) {
  Vec3<T> a1 = a.template head<3>();
  Vec3<T> a2 = a.template tail<3>();
  T n1 = a1.norm();
  Vec3<T> b1 = a1 / n1;
  T d12 = b1.dot(a2);
  Vec3<T> u2 = a2 - d12 * b1;
  T n2 = u2.norm();
  Vec3<T> b2 = u2 / n2;

  Vec3<T> db1 = dR.col(0);
  Vec3<T> db2 = dR.col(1);
  Vec3<T> db3 = dR.col(2);
  // b3 = b1 x b2
  db1 += b2.cross(db3);
  db2 += db3.cross(b1);
  // b2 = u2 / n2
  Vec3<T> du2 = (db2 - b2 * b2.dot(db2)) / n2;
  // u2 = a2 - (b1 . a2) b1
  Vec3<T> da2 = du2 - b1 * b1.dot(du2);
  db1 += -(b1.dot(du2)) * a2 - d12 * du2;
  // b1 = a1 / n1
  Vec3<T> da1 = (db1 - b1 * b1.dot(db1)) / n1;
  Eigen::Matrix<T, 6, 1> out;
  out.template head<3>() = da1;
  out.template tail<3>() = da2;
  return out;
}

// --- robust wrapper ----------------------------------------------------

// Psi(s) = sqrt(s^2 + 1) - 1: smooth, ~s^2/2 near 0, ~|s| for large s.
template <class T>
T robust_psi(T s) {
  return std::sqrt(s * s + T(1)) - T(1);
}

template <class T>
T robust_psi_grad(T s) {
  return s / std::sqrt(s * s + T(1));
}

// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

}  // namespace saga
