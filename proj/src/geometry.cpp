#include "saga/geometry.hpp"

#include <algorithm>
#include <limits>

namespace saga {

int nearest_point(const Vec3<double>& x, const Points& cloud, double* sq_out) {
  SAGA_REQUIRE(cloud.rows() > 0, InvalidInput, "nearest_point: empty cloud");
  int best = 0;
  double bsq = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    double dx = x[0] - cloud(i, 0);
    double dy = x[1] - cloud(i, 1);
    double dz = x[2] - cloud(i, 2);
    double sq = dx * dx + dy * dy + dz * dz;
    if (sq < bsq) {
      bsq = sq;
      best = static_cast<int>(i);
    }
  }
  if (sq_out) *sq_out = bsq;
  return best;
}

double min_sq_dist(const Vec3<double>& x, const Points& cloud) {
  double sq;
  nearest_point(x, cloud, &sq);
  return sq;
}

double signed_dist(const Vec3<double>& x, const ObjectCloud& cloud) {
  SAGA_REQUIRE(cloud.normals.rows() == cloud.points.rows(), InvalidInput,
               "signed_dist: cloud lacks normals");
  double sq;
  int i = nearest_point(x, cloud.points, &sq);
  Vec3<double> d = x - cloud.points.row(i).transpose();
  double s = d.dot(cloud.normals.row(i).transpose());
  double mag = std::sqrt(sq);
  return s < 0 ? -mag : mag;
}

double point_triangle_sq_dist(const Vec3<double>& p, const Vec3<double>& a,
                              const Vec3<double>& b, const Vec3<double>& c) {
  // Ericson, Real-Time Collision Detection, closest point on triangle.
  Vec3<double> ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).squaredNorm();
  Vec3<double> bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).squaredNorm();
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).squaredNorm();
  }
  Vec3<double> cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).squaredNorm();
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).squaredNorm();
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).squaredNorm();
  }
  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).squaredNorm();
}

double min_dist_to_mesh(const Vec3<double>& x, const TriMesh& m) {
  SAGA_REQUIRE(m.F.rows() > 0, InvalidInput, "min_dist_to_mesh: empty mesh");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < m.F.rows(); ++t) {
    double sq = point_triangle_sq_dist(x, m.V.row(m.F(t, 0)).transpose(),
                                       m.V.row(m.F(t, 1)).transpose(),
                                       m.V.row(m.F(t, 2)).transpose());
    best = std::min(best, sq);
  }
  return std::sqrt(best);
}

double winding_number(const Vec3<double>& x, const TriMesh& m, int fb, int fe) {
  // Van Oosterom & Strackee solid angle per triangle, summed over faces.
  double total = 0.0;
  for (int t = fb; t < fe; ++t) {
    Vec3<double> a = m.V.row(m.F(t, 0)).transpose() - x;
    Vec3<double> b = m.V.row(m.F(t, 1)).transpose() - x;
    Vec3<double> c = m.V.row(m.F(t, 2)).transpose() - x;
    double la = a.norm(), lb = b.norm(), lc = c.norm();
    double num = a.dot(b.cross(c));
    double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * M_PI);
}

namespace {

struct Aabb {
  Vec3<double> lo = Vec3<double>::Constant(std::numeric_limits<double>::infinity());
  Vec3<double> hi = Vec3<double>::Constant(-std::numeric_limits<double>::infinity());
  void add(const Vec3<double>& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool contains(const Vec3<double>& p, double pad) const {
    return (p.array() >= lo.array() - pad).all() && (p.array() <= hi.array() + pad).all();
  }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
};

Aabb points_aabb(const Points& P) {
  Aabb b;
  for (Eigen::Index i = 0; i < P.rows(); ++i) b.add(P.row(i).transpose());
  return b;
}

std::vector<std::pair<int, int>> mesh_parts(const TriMesh& m) {
  if (!m.parts.empty()) return m.parts;
  return {{0, static_cast<int>(m.F.rows())}};
}

Aabb part_aabb(const TriMesh& m, int fb, int fe) {
  Aabb b;
  for (int t = fb; t < fe; ++t)
    for (int k = 0; k < 3; ++k) b.add(m.V.row(m.F(t, k)).transpose());
  return b;
}

}  // namespace

bool inside_mesh(const Vec3<double>& x, const TriMesh& m) {
  for (auto [fb, fe] : mesh_parts(m)) {
    if (std::abs(winding_number(x, m, fb, fe)) > 0.5) return true;
  }
  return false;
}

bool inside_cloud(const Vec3<double>& x, const ObjectCloud& cloud) {
  return signed_dist(x, cloud) < 0.0;
}

namespace {

// Shared voxel-count + vertex-depth scaffold; `inside_obj` and
// `dist_to_obj` close over the object representation.
template <class InsideFn, class DistFn>
PenetrationStats penetration_impl(const TriMesh& body, const Aabb& obj_box,
                                  const InsideFn& inside_obj, const DistFn& dist_to_obj,
                                  double voxel) {
  SAGA_REQUIRE(voxel > 0, InvalidInput, "interpenetration: voxel must be positive");
  PenetrationStats out;

  auto parts = mesh_parts(body);
  std::vector<Aabb> pboxes;
  pboxes.reserve(parts.size());
  Aabb body_box;
  for (auto [fb, fe] : parts) {
    Aabb b = part_aabb(body, fb, fe);
    body_box.add(b.lo);
    body_box.add(b.hi);
    pboxes.push_back(b);
  }

  Vec3<double> lo = body_box.lo.cwiseMax(obj_box.lo);
  Vec3<double> hi = body_box.hi.cwiseMin(obj_box.hi);
  if ((hi.array() <= lo.array()).any()) {
    // Disjoint bounding boxes: no overlap possible.
  } else {
    Eigen::Vector3i n;
    for (int k = 0; k < 3; ++k)
      n[k] = std::max(1, static_cast<int>(std::ceil((hi[k] - lo[k]) / voxel)));
    for (int iz = 0; iz < n[2]; ++iz)
      for (int iy = 0; iy < n[1]; ++iy)
        for (int ix = 0; ix < n[0]; ++ix) {
          Vec3<double> c = lo + voxel * Vec3<double>(ix + 0.5, iy + 0.5, iz + 0.5);
          if (!inside_obj(c)) continue;
          bool in_body = false;
          for (size_t p = 0; p < parts.size(); ++p) {
            if (!pboxes[p].contains(c, 0.0)) continue;
            if (std::abs(winding_number(c, body, parts[p].first, parts[p].second)) > 0.5) {
              in_body = true;
              break;
            }
          }
          if (in_body) ++out.voxels;
        }
  }
  out.volume_cm3 = static_cast<double>(out.voxels) * voxel * voxel * voxel * 1e6;

  // Depth: body vertices inside the object, distance back to its surface.
  double sum = 0.0;
  long cnt = 0;
  for (Eigen::Index v = 0; v < body.V.rows(); ++v) {
    Vec3<double> p = body.V.row(v).transpose();
    if (!obj_box.contains(p, 0.0) || !inside_obj(p)) continue;
    double d = dist_to_obj(p);
    out.max_depth_cm = std::max(out.max_depth_cm, d * 100.0);
    sum += d * 100.0;
    ++cnt;
  }
  if (cnt > 0) out.mean_depth_cm = sum / static_cast<double>(cnt);
  return out;
}

}  // namespace

PenetrationStats interpenetration(const TriMesh& body, const ObjectCloud& obj, double voxel) {
  Aabb box = points_aabb(obj.points);
  auto inside = [&](const Vec3<double>& p) { return signed_dist(p, obj) < 0.0; };
  auto dist = [&](const Vec3<double>& p) { return std::sqrt(min_sq_dist(p, obj.points)); };
  return penetration_impl(body, box, inside, dist, voxel);
}

PenetrationStats interpenetration(const TriMesh& body, const TriMesh& obj, double voxel) {
  Aabb box = points_aabb(obj.V);
  auto parts = mesh_parts(obj);
  auto inside = [&](const Vec3<double>& p) {
    for (auto [fb, fe] : parts)
      if (std::abs(winding_number(p, obj, fb, fe)) > 0.5) return true;
    return false;
  };
  auto dist = [&](const Vec3<double>& p) { return min_dist_to_mesh(p, obj); };
  return penetration_impl(body, box, inside, dist, voxel);
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  if (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

}  // namespace saga
