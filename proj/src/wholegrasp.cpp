#include "saga/wholegrasp.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "saga/tensor_file.hpp"

namespace saga {

namespace {

// True when a beats b under the (key, coordinates) order used to make
// farthest-point sampling independent of the input point order.
bool key_beats(double ka, const Vec3d& a, double kb, const Vec3d& b) {
  if (ka != kb) return ka > kb;
  if (a.x() != b.x()) return a.x() > b.x();
  if (a.y() != b.y()) return a.y() > b.y();
  return a.z() > b.z();
}

// Farthest-point sampling over a position list. The seed is canonical —
// the point of largest norm, coordinate-lexicographic on ties — and every
// later selection breaks distance ties the same way, so the chosen point
// SET depends only on the multiset of positions, not their order.
std::vector<int> fps_ids(const std::vector<Vec3d>& pos, int n) {
  const int P = static_cast<int>(pos.size());
  SAGA_REQUIRE(n > 0 && n <= P, InvalidInput, "fps: need at least as many points as samples");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(n));
  int seed = 0;
  for (int i = 1; i < P; ++i)
    if (key_beats(pos[static_cast<size_t>(i)].squaredNorm(), pos[static_cast<size_t>(i)],
                  pos[static_cast<size_t>(seed)].squaredNorm(), pos[static_cast<size_t>(seed)]))
      seed = i;
  std::vector<double> best(static_cast<size_t>(P), std::numeric_limits<double>::infinity());
  int last = seed;
  out.push_back(seed);
  for (int s = 1; s < n; ++s) {
    int pick = -1;
    double far = -1.0;
    for (int i = 0; i < P; ++i) {
      double d = (pos[static_cast<size_t>(i)] - pos[static_cast<size_t>(last)]).squaredNorm();
      double& b = best[static_cast<size_t>(i)];
      if (d < b) b = d;
      if (pick < 0 || key_beats(b, pos[static_cast<size_t>(i)], far, pos[static_cast<size_t>(pick)])) {
        far = b;
        pick = i;
      }
    }
    out.push_back(pick);
    last = pick;
  }
  return out;
}

// Up-to-nsample in-radius neighbours per centroid, ordered by (distance,
// index); short groups repeat the nearest member.
std::vector<int> ball_group(const std::vector<Vec3d>& centroids, const std::vector<Vec3d>& cands,
                            double radius, int ns) {
  const double r2 = radius * radius;
  const int C = static_cast<int>(cands.size());
  std::vector<int> out;
  out.reserve(centroids.size() * static_cast<size_t>(ns));
  std::vector<double> d(static_cast<size_t>(C));
  std::vector<char> used(static_cast<size_t>(C));
  for (const Vec3d& ctr : centroids) {
    for (int i = 0; i < C; ++i) d[static_cast<size_t>(i)] = (cands[static_cast<size_t>(i)] - ctr).squaredNorm();
    std::fill(used.begin(), used.end(), char(0));
    std::vector<int> grp;
    for (int k = 0; k < ns; ++k) {
      int pick = -1;
      double bd = std::numeric_limits<double>::infinity();
      for (int i = 0; i < C; ++i) {
        if (used[static_cast<size_t>(i)]) continue;
        if (d[static_cast<size_t>(i)] < bd) {
          bd = d[static_cast<size_t>(i)];
          pick = i;
        }
      }
      if (pick < 0 || (bd > r2 && !grp.empty())) break;
      used[static_cast<size_t>(pick)] = 1;
      grp.push_back(pick);
      if (bd > r2) break;  // nothing in range at all: keep the single nearest
    }
    SAGA_REQUIRE(!grp.empty(), Internal, "ball_group: empty group");
    while (static_cast<int>(grp.size()) < ns) grp.push_back(grp.front());
    out.insert(out.end(), grp.begin(), grp.end());
  }
  return out;
}

std::vector<Vec3d> rows_to_vecs(const Points& pts) {
  std::vector<Vec3d> out(static_cast<size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out[static_cast<size_t>(i)] = pts.row(i);
  return out;
}

constexpr int kNp1 = 256;  // level-1 centroids
constexpr int kNp2 = 128;  // level-2 centroids
constexpr double kR1 = 0.2;
constexpr double kR2 = 0.25;

template <class T>
MatX<T> cloud3(const ObjectCloud& c) {
  return c.points.transpose().cast<T>();
}

// [rel xyz | normal] columns for the first grouping level.
template <class T>
MatX<T> sa1_geometry(const ObjectCloud& c, const GroupingPlan& p) {
  const int ns = p.nsample;
  MatX<T> out(6, static_cast<Eigen::Index>(p.nb1.size()));
  for (int i = 0; i < kNp1; ++i) {
    Vec3d ctr = c.points.row(p.fps1[static_cast<size_t>(i)]);
    for (int k = 0; k < ns; ++k) {
      int j = p.nb1[static_cast<size_t>(i * ns + k)];
      Vec3d rel = Vec3d(c.points.row(j)) - ctr;
      Vec3d nrm = c.normals.row(j);
      Eigen::Index col = i * ns + k;
      for (int a = 0; a < 3; ++a) {
        out(a, col) = static_cast<T>(rel[a]);
        out(3 + a, col) = static_cast<T>(nrm[a]);
      }
    }
  }
  return out;
}

template <class T>
MatX<T> sa2_geometry(const ObjectCloud& c, const GroupingPlan& p) {
  const int ns = p.nsample;
  MatX<T> out(3, static_cast<Eigen::Index>(p.nb2.size()));
  for (int i = 0; i < kNp2; ++i) {
    Vec3d ctr = c.points.row(p.fps1[static_cast<size_t>(p.fps2[static_cast<size_t>(i)])]);
    for (int k = 0; k < ns; ++k) {
      int j = p.nb2[static_cast<size_t>(i * ns + k)];  // level-1 centroid id
      Vec3d rel = Vec3d(c.points.row(p.fps1[static_cast<size_t>(j)])) - ctr;
      for (int a = 0; a < 3; ++a) out(a, i * ns + k) = static_cast<T>(rel[a]);
    }
  }
  return out;
}

template <class T>
MatX<T> sa3_geometry(const ObjectCloud& c, const GroupingPlan& p) {
  MatX<T> out(3, kNp2);
  for (int i = 0; i < kNp2; ++i) {
    Vec3d pos = c.points.row(p.fps1[static_cast<size_t>(p.fps2[static_cast<size_t>(i)])]);
    for (int a = 0; a < 3; ++a) out(a, i) = static_cast<T>(pos[a]);
  }
  return out;
}

// [abs xyz | normal] of the level-1 centroids, for the condition branch.
template <class T>
MatX<T> cond_geometry(const ObjectCloud& c, const GroupingPlan& p) {
  MatX<T> out(6, kNp1);
  for (int i = 0; i < kNp1; ++i) {
    int j = p.fps1[static_cast<size_t>(i)];
    for (int a = 0; a < 3; ++a) {
      out(a, i) = static_cast<T>(c.points(j, a));
      out(3 + a, i) = static_cast<T>(c.normals(j, a));
    }
  }
  return out;
}

// [abs xyz | normal] of every cloud point, for the per-point contact head.
template <class T>
MatX<T> obj_geometry(const ObjectCloud& c) {
  MatX<T> out(6, c.points.rows());
  for (Eigen::Index j = 0; j < c.points.rows(); ++j)
    for (int a = 0; a < 3; ++a) {
      out(a, j) = static_cast<T>(c.points(j, a));
      out(3 + a, j) = static_cast<T>(c.normals(j, a));
    }
  return out;
}

// Stacked marker coordinates for one item: row 3k+a = coordinate a of marker k.
template <class T>
VecX<T> stack_markers(const MatXd& m) {
  VecX<T> out(3 * m.cols());
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    for (int a = 0; a < 3; ++a) out[3 * k + a] = static_cast<T>(m(a, k));
  return out;
}

// (3 x markers) point matrix for one column of a stacked-marker batch.
template <class T>
ad::Var col_points(ad::Graph<T>& g, ad::Var m, int col, int n_markers) {
  const MatX<T>& mv = g.val(m);
  MatX<T> out(3, n_markers);
  for (int k = 0; k < n_markers; ++k)
    for (int a = 0; a < 3; ++a) out(a, k) = mv(3 * k + a, col);
  return g.custom({m.i}, std::move(out),
                  [m, col, n_markers](ad::Graph<T>& gg, typename ad::Graph<T>::Node& self) {
                    const MatX<T>& mv = gg.val(m);
                    MatX<T> gr = MatX<T>::Zero(mv.rows(), mv.cols());
                    for (int k = 0; k < n_markers; ++k)
                      for (int a = 0; a < 3; ++a) gr(3 * k + a, col) = self.grad(a, k);
                    gg.accum(m.i, gr);
                  });
}

}  // namespace

GroupingPlan GroupingPlan::build(const ObjectCloud& cloud, int nsample) {
  SAGA_REQUIRE(cloud.points.rows() >= kNp1, InvalidInput, "object cloud too small to group");
  SAGA_REQUIRE(cloud.normals.rows() == cloud.points.rows(), InvalidInput,
               "object cloud needs per-point normals");
  GroupingPlan p;
  p.nsample = nsample;
  std::vector<Vec3d> all = rows_to_vecs(cloud.points);
  p.fps1 = fps_ids(all, kNp1);
  std::vector<Vec3d> lvl1(kNp1);
  for (int i = 0; i < kNp1; ++i) lvl1[static_cast<size_t>(i)] = all[static_cast<size_t>(p.fps1[static_cast<size_t>(i)])];
  p.nb1 = ball_group(lvl1, all, kR1, nsample);
  p.fps2 = fps_ids(lvl1, kNp2);
  std::vector<Vec3d> lvl2(kNp2);
  for (int i = 0; i < kNp2; ++i) lvl2[static_cast<size_t>(i)] = lvl1[static_cast<size_t>(p.fps2[static_cast<size_t>(i)])];
  p.nb2 = ball_group(lvl2, lvl1, kR2, nsample);
  return p;
}

GroupingPlan GroupingPlan::build_item(const GraspItem& item, int nsample) {
  GroupingPlan p = build(item.object.cloud, nsample);
  const Points& pts = item.object.cloud.points;
  const Eigen::Index M = item.markers.cols(), P = pts.rows();
  Points markers(M, 3);
  for (Eigen::Index k = 0; k < M; ++k) markers.row(k) = item.markers.col(k).transpose();
  p.gt_dm.resize(M);
  for (Eigen::Index k = 0; k < M; ++k) p.gt_dm[k] = min_sq_dist(item.markers.col(k), pts);
  p.gt_do.resize(P);
  for (Eigen::Index j = 0; j < P; ++j) p.gt_do[j] = min_sq_dist(pts.row(j).transpose(), markers);
  return p;
}

template <class T>
WholeGraspVaeT<T>::WholeGraspVaeT(const WholeGraspConfig& cfg) : cfg_(cfg) {}

template <class T>
void WholeGraspVaeT<T>::init(Rng& rng) {
  const int M = cfg_.markers;
  sa1a_.build(store_, "sa1a", 7, 64, rng);
  sa1b_.build(store_, "sa1b", 64, 128, rng);
  sa2a_.build(store_, "sa2a", 131, 128, rng);
  sa2b_.build(store_, "sa2b", 128, 256, rng);
  sa3a_.build(store_, "sa3a", 259, 256, rng);
  sa3b_.build(store_, "sa3b", 256, 512, rng);
  body_in_.build(store_, "body_in", 4 * M, 512, rng);
  body_res1_.build(store_, "body_res1", 512, 512, rng);
  body_res2_.build(store_, "body_res2", 512, 512, rng);
  fuse_.build(store_, "fuse", 1024, 256, rng);
  mu_.build(store_, "mu", 256, cfg_.latent, rng, 1.0);
  logvar_.build(store_, "logvar", 256, cfg_.latent, rng, 1.0);
  cond1_.build(store_, "cond1", 6, 64, rng);
  cond2_.build(store_, "cond2", 64, 128, rng);
  cond3_.build(store_, "cond3", 128, 256, rng);
  dec_in_.build(store_, "dec_in", cfg_.latent + 257, 512, rng);
  dec_res_.build(store_, "dec_res", 512, 512, rng);
  head_markers_.build(store_, "head_markers", 512, 3 * M, rng, 1.0);
  head_cm_.build(store_, "head_cm", 512, M, rng, 1.0);
  obj_proj_.build(store_, "obj_proj", cfg_.latent + 257, 64, rng);
  obj_h1_.build(store_, "obj_h1", 70, 64, rng);
  obj_h2_.build(store_, "obj_h2", 64, 1, rng, 1.0);
}

template <class T>
ad::Var WholeGraspVaeT<T>::encode_objects(ad::Graph<T>& g,
                                          const std::vector<const GraspItem*>& batch,
                                          const std::vector<const GroupingPlan*>& plans) const {
  const int B = static_cast<int>(batch.size());
  const int ns = cfg_.nsample;

  MatX<T> in1(7, static_cast<Eigen::Index>(B) * kNp1 * ns);
  MatX<T> rel2(3, static_cast<Eigen::Index>(B) * kNp2 * ns);
  MatX<T> xyz3(3, static_cast<Eigen::Index>(B) * kNp2);
  std::vector<int> gather2(static_cast<size_t>(B) * kNp2 * ns);
  for (int b = 0; b < B; ++b) {
    const GraspItem& it = *batch[static_cast<size_t>(b)];
    const GroupingPlan& p = *plans[static_cast<size_t>(b)];
    SAGA_REQUIRE(p.nsample == ns, InvalidInput, "grouping plan nsample mismatch");
    MatX<T> geo = sa1_geometry<T>(it.object.cloud, p);
    for (int c = 0; c < kNp1 * ns; ++c) {
      Eigen::Index col = static_cast<Eigen::Index>(b) * kNp1 * ns + c;
      in1.block(0, col, 6, 1) = geo.col(c);
      in1(6, col) = static_cast<T>(it.contacts_o[p.nb1[static_cast<size_t>(c)]]);
    }
    rel2.middleCols(static_cast<Eigen::Index>(b) * kNp2 * ns, kNp2 * ns) =
        sa2_geometry<T>(it.object.cloud, p);
    xyz3.middleCols(static_cast<Eigen::Index>(b) * kNp2, kNp2) = sa3_geometry<T>(it.object.cloud, p);
    for (int c = 0; c < kNp2 * ns; ++c)
      gather2[static_cast<size_t>(b) * kNp2 * ns + static_cast<size_t>(c)] =
          b * kNp1 + p.nb2[static_cast<size_t>(c)];
  }

  ad::Var h1 = g.relu(sa1b_.fwd(g, g.relu(sa1a_.fwd(g, g.input(std::move(in1))))));
  ad::Var f1 = g.segment_max(h1, ns);  // 128 x B*256

  ad::Var in2 = g.rowcat({g.input(std::move(rel2)), g.gather_cols(f1, std::move(gather2))});
  ad::Var h2 = g.relu(sa2b_.fwd(g, g.relu(sa2a_.fwd(g, in2))));
  ad::Var f2 = g.segment_max(h2, ns);  // 256 x B*128

  ad::Var in3 = g.rowcat({g.input(std::move(xyz3)), f2});
  ad::Var h3 = g.relu(sa3b_.fwd(g, g.relu(sa3a_.fwd(g, in3))));
  return g.segment_max(h3, kNp2);  // 512 x B
}

template <class T>
ad::Var WholeGraspVaeT<T>::condition(ad::Graph<T>& g, const std::vector<const ObjectItem*>& objs,
                                     const std::vector<const GroupingPlan*>& plans) const {
  const int B = static_cast<int>(objs.size());
  MatX<T> in(6, static_cast<Eigen::Index>(B) * kNp1);
  MatX<T> heights(1, B);
  for (int b = 0; b < B; ++b) {
    in.middleCols(static_cast<Eigen::Index>(b) * kNp1, kNp1) =
        cond_geometry<T>(objs[static_cast<size_t>(b)]->cloud, *plans[static_cast<size_t>(b)]);
    heights(0, b) = static_cast<T>(objs[static_cast<size_t>(b)]->height);
  }
  ad::Var h = g.relu(cond2_.fwd(g, g.relu(cond1_.fwd(g, g.input(std::move(in))))));
  ad::Var pooled = g.segment_max(h, kNp1);               // 128 x B
  ad::Var feat = g.relu(cond3_.fwd(g, pooled));          // 256 x B
  return g.rowcat({feat, g.input(std::move(heights))});  // 257 x B
}

template <class T>
typename WholeGraspVaeT<T>::Decoded WholeGraspVaeT<T>::decode(
    ad::Graph<T>& g, ad::Var zc, const std::vector<const ObjectItem*>& objs) const {
  const int B = static_cast<int>(objs.size());
  ad::Var h = dec_res_.fwd(g, g.relu(dec_in_.fwd(g, zc)));
  Decoded out;
  out.markers = head_markers_.fwd(g, h);
  out.logit_m = head_cm_.fwd(g, h);

  Eigen::Index total = 0;
  for (const ObjectItem* o : objs) total += o->cloud.points.rows();
  MatX<T> geo(6, total);
  std::vector<int> rep(static_cast<size_t>(total));
  Eigen::Index at = 0;
  for (int b = 0; b < B; ++b) {
    const ObjectCloud& c = objs[static_cast<size_t>(b)]->cloud;
    geo.middleCols(at, c.points.rows()) = obj_geometry<T>(c);
    for (Eigen::Index j = 0; j < c.points.rows(); ++j) rep[static_cast<size_t>(at + j)] = b;
    at += c.points.rows();
  }
  ad::Var proj = g.relu(obj_proj_.fwd(g, zc));  // 64 x B
  ad::Var in = g.rowcat({g.input(std::move(geo)), g.gather_cols(proj, std::move(rep))});
  out.logit_o = obj_h2_.fwd(g, g.relu(obj_h1_.fwd(g, in)));  // 1 x total
  return out;
}

template <class T>
WholeGraspLoss WholeGraspVaeT<T>::loss_batch(const std::vector<const GraspItem*>& batch,
                                             const std::vector<const GroupingPlan*>& plans,
                                             double kl_weight, Rng& noise_rng, bool backward) {
  const int B = static_cast<int>(batch.size());
  const int M = cfg_.markers;
  SAGA_REQUIRE(B > 0 && plans.size() == batch.size(), InvalidInput, "loss_batch: bad batch");

  ad::Graph<T> g;
  ad::Var obj_feat = encode_objects(g, batch, plans);

  MatX<T> body_in(4 * M, B), tgt_m(3 * M, B), tgt_cm(M, B);
  Eigen::Index total_pts = 0;
  for (int b = 0; b < B; ++b) total_pts += batch[static_cast<size_t>(b)]->object.cloud.points.rows();
  MatX<T> tgt_co(1, total_pts);
  std::vector<MatX<T>> clouds(static_cast<size_t>(B));
  std::vector<const ObjectItem*> objs(static_cast<size_t>(B));
  Eigen::Index at = 0;
  for (int b = 0; b < B; ++b) {
    const GraspItem& it = *batch[static_cast<size_t>(b)];
    SAGA_REQUIRE(it.markers.cols() == M && it.contacts_m.size() == M, InvalidInput,
                 "grasp item marker count mismatch");
    VecX<T> mk = stack_markers<T>(it.markers);
    body_in.block(0, b, 3 * M, 1) = mk;
    tgt_m.col(b) = mk;
    for (int k = 0; k < M; ++k) {
      SAGA_REQUIRE(it.contacts_m[k] == 0.0 || it.contacts_m[k] == 1.0, InvalidInput,
                   "marker contact labels must be binary");
      body_in(3 * M + k, b) = static_cast<T>(it.contacts_m[k]);
      tgt_cm(k, b) = static_cast<T>(it.contacts_m[k]);
    }
    const Eigen::Index P = it.object.cloud.points.rows();
    for (Eigen::Index j = 0; j < P; ++j) {
      SAGA_REQUIRE(it.contacts_o[j] == 0.0 || it.contacts_o[j] == 1.0, InvalidInput,
                   "object contact labels must be binary");
      tgt_co(0, at + j) = static_cast<T>(it.contacts_o[j]);
    }
    at += P;
    clouds[static_cast<size_t>(b)] = cloud3<T>(it.object.cloud);
    objs[static_cast<size_t>(b)] = &it.object;
  }

  ad::Var body_feat = body_res2_.fwd(
      g, body_res1_.fwd(g, g.relu(body_in_.fwd(g, g.input(std::move(body_in))))));
  ad::Var fused = g.relu(fuse_.fwd(g, g.rowcat({obj_feat, body_feat})));
  ad::Var mu = mu_.fwd(g, fused);
  ad::Var lv = logvar_.fwd(g, fused);

  MatX<T> eps(cfg_.latent, B);
  noise_rng.fill_normal(eps, 1.0);
  ad::Var z = g.add(mu, g.mul(g.input(std::move(eps)), g.exp_(g.scale(lv, T(0.5)))));

  ad::Var cond = condition(g, objs, plans);
  Decoded dec = decode(g, g.rowcat({z, cond}), objs);

  ad::Var rec = g.scale(g.sum_abs(g.sub(dec.markers, g.input(tgt_m))), T(1.0 / B));
  ad::Var bce_m = g.bce_logits(dec.logit_m, tgt_cm, static_cast<T>(cfg_.pw_marker));
  ad::Var bce_o = g.bce_logits(dec.logit_o, tgt_co, static_cast<T>(cfg_.pw_object));
  ad::Var kl = g.mean(g.charbonnier(g.gauss_kl(mu, lv)));

  // Contact-consistency term: markers predicted in contact should sit at the
  // same squared distance from the object as the ground-truth markers do,
  // and likewise for object points against the reconstructed marker set.
  // Exact reconstruction therefore zeroes the term regardless of contacts.
  ad::Var sig_m = g.sigmoid(dec.logit_m);
  ad::Var sig_o = g.sigmoid(dec.logit_o);
  ad::Var consis;
  at = 0;
  for (int b = 0; b < B; ++b) {
    const GroupingPlan& plan = *plans[static_cast<size_t>(b)];
    const Eigen::Index P = clouds[static_cast<size_t>(b)].cols();
    SAGA_REQUIRE(plan.gt_dm.size() == M && plan.gt_do.size() == P, InvalidInput,
                 "grouping plan lacks ground-truth contact distances (use build_item)");
    ad::Var pts = col_points(g, dec.markers, b, M);
    ad::Var d_m = g.sqdist_to_cloud(pts, clouds[static_cast<size_t>(b)]);
    ad::Var gtd_m = g.input(MatX<T>(plan.gt_dm.transpose().cast<T>()));
    ad::Var w_m = g.transpose_(g.gather_cols(sig_m, {b}));
    ad::Var term = g.sum(g.mul(g.abs_(g.sub(d_m, gtd_m)), w_m));
    ad::Var d_o = g.sqdist_from_cloud(clouds[static_cast<size_t>(b)], pts);
    ad::Var gtd_o = g.input(MatX<T>(plan.gt_do.transpose().cast<T>()));
    std::vector<int> cols(static_cast<size_t>(P));
    std::iota(cols.begin(), cols.end(), static_cast<int>(at));
    ad::Var w_o = g.gather_cols(sig_o, std::move(cols));
    term = g.add(term, g.sum(g.mul(g.abs_(g.sub(d_o, gtd_o)), w_o)));
    consis = consis.ok() ? g.add(consis, term) : term;
    at += P;
  }
  consis = g.scale(consis, T(1.0 / B));

  ad::Var total = g.add(rec, g.add(bce_m, bce_o));
  total = g.add(total, g.scale(kl, static_cast<T>(kl_weight)));
  total = g.add(total, g.scale(consis, static_cast<T>(cfg_.w_consistency)));

  WholeGraspLoss parts;
  parts.rec_m = g.val(rec)(0, 0);
  parts.rec_cm = g.val(bce_m)(0, 0);
  parts.rec_co = g.val(bce_o)(0, 0);
  parts.kl = g.val(kl)(0, 0);
  parts.consistency = g.val(consis)(0, 0);
  parts.total = g.val(total)(0, 0);
  SAGA_REQUIRE(std::isfinite(parts.total), Internal, "loss diverged (non-finite)");
  if (backward) g.backward(total);
  return parts;
}

template <class T>
typename WholeGraspVaeT<T>::ValStats WholeGraspVaeT<T>::validate(
    const std::vector<const GraspItem*>& val, const std::vector<const GroupingPlan*>& plans) {
  ValStats stats;
  double l1_sum = 0, bm_sum = 0, bo_sum = 0;
  long n_coord = 0, n_m = 0, n_o = 0;
  const int M = cfg_.markers;
  for (size_t start = 0; start < val.size(); start += static_cast<size_t>(cfg_.batch)) {
    size_t stop = std::min(val.size(), start + static_cast<size_t>(cfg_.batch));
    std::vector<const GraspItem*> batch(val.begin() + static_cast<long>(start),
                                        val.begin() + static_cast<long>(stop));
    std::vector<const GroupingPlan*> bplans(plans.begin() + static_cast<long>(start),
                                            plans.begin() + static_cast<long>(stop));
    const int B = static_cast<int>(batch.size());

    ad::Graph<T> g;
    ad::Var obj_feat = encode_objects(g, batch, bplans);
    MatX<T> body_in(4 * M, B), tgt_m(3 * M, B), tgt_cm(M, B);
    Eigen::Index total_pts = 0;
    for (const GraspItem* it : batch) total_pts += it->object.cloud.points.rows();
    MatX<T> tgt_co(1, total_pts);
    std::vector<const ObjectItem*> objs(static_cast<size_t>(B));
    Eigen::Index at = 0;
    for (int b = 0; b < B; ++b) {
      const GraspItem& it = *batch[static_cast<size_t>(b)];
      VecX<T> mk = stack_markers<T>(it.markers);
      body_in.block(0, b, 3 * M, 1) = mk;
      tgt_m.col(b) = mk;
      for (int k = 0; k < M; ++k) {
        body_in(3 * M + k, b) = static_cast<T>(it.contacts_m[k]);
        tgt_cm(k, b) = static_cast<T>(it.contacts_m[k]);
      }
      for (Eigen::Index j = 0; j < it.object.cloud.points.rows(); ++j)
        tgt_co(0, at + j) = static_cast<T>(it.contacts_o[j]);
      at += it.object.cloud.points.rows();
      objs[static_cast<size_t>(b)] = &it.object;
    }
    ad::Var body_feat = body_res2_.fwd(
        g, body_res1_.fwd(g, g.relu(body_in_.fwd(g, g.input(std::move(body_in))))));
    ad::Var fused = g.relu(fuse_.fwd(g, g.rowcat({obj_feat, body_feat})));
    ad::Var mu = mu_.fwd(g, fused);  // posterior mean as the deterministic code
    ad::Var cond = condition(g, objs, bplans);
    Decoded dec = decode(g, g.rowcat({mu, cond}), objs);

    l1_sum += static_cast<double>(g.val(g.sum_abs(g.sub(dec.markers, g.input(tgt_m))))(0, 0));
    n_coord += 3 * M * B;
    bm_sum += static_cast<double>(
                  g.val(g.bce_logits(dec.logit_m, tgt_cm, static_cast<T>(cfg_.pw_marker)))(0, 0)) *
              static_cast<double>(M * B);
    n_m += M * B;
    bo_sum += static_cast<double>(
                  g.val(g.bce_logits(dec.logit_o, tgt_co, static_cast<T>(cfg_.pw_object)))(0, 0)) *
              static_cast<double>(total_pts);
    n_o += total_pts;
  }
  stats.marker_l1 = l1_sum / static_cast<double>(n_coord);
  stats.bce = 0.5 * (bm_sum / static_cast<double>(n_m) + bo_sum / static_cast<double>(n_o));
  return stats;
}

template <class T>
void WholeGraspVaeT<T>::posterior(const GraspItem& item, const GroupingPlan& plan, VecXd* mu_out,
                                  VecXd* logvar_out) {
  const int M = cfg_.markers;
  SAGA_REQUIRE(item.markers.cols() == M && item.contacts_m.size() == M, InvalidInput,
               "posterior: marker count mismatch");
  std::vector<const GraspItem*> batch{&item};
  std::vector<const GroupingPlan*> plans{&plan};
  ad::Graph<T> g;
  ad::Var obj_feat = encode_objects(g, batch, plans);
  MatX<T> body_in(4 * M, 1);
  body_in.block(0, 0, 3 * M, 1) = stack_markers<T>(item.markers);
  for (int k = 0; k < M; ++k) body_in(3 * M + k, 0) = static_cast<T>(item.contacts_m[k]);
  ad::Var body_feat = body_res2_.fwd(
      g, body_res1_.fwd(g, g.relu(body_in_.fwd(g, g.input(std::move(body_in))))));
  ad::Var fused = g.relu(fuse_.fwd(g, g.rowcat({obj_feat, body_feat})));
  if (mu_out) *mu_out = g.val(mu_.fwd(g, fused)).template cast<double>();
  if (logvar_out) *logvar_out = g.val(logvar_.fwd(g, fused)).template cast<double>();
}

template <class T>
std::vector<WholeGraspSample> WholeGraspVaeT<T>::sample(const ObjectItem& obj, int n,
                                                        Rng& rng) const {
  SAGA_REQUIRE(n > 0, InvalidInput, "sample: need n > 0");
  GroupingPlan plan = GroupingPlan::build(obj.cloud, cfg_.nsample);
  ad::Graph<T> g;
  std::vector<const ObjectItem*> one{&obj};
  std::vector<const GroupingPlan*> plans{&plan};
  ad::Var cond1 = condition(g, one, plans);
  ad::Var cond = g.gather_cols(cond1, std::vector<int>(static_cast<size_t>(n), 0));
  MatX<T> z(cfg_.latent, n);
  rng.fill_normal(z, 1.0);
  std::vector<const ObjectItem*> objs(static_cast<size_t>(n), &obj);
  Decoded dec = decode(g, g.rowcat({g.input(std::move(z)), cond}), objs);
  const MatX<T>& mk = g.val(dec.markers);
  const MatX<T>& cm = g.val(g.sigmoid(dec.logit_m));
  const MatX<T>& co = g.val(g.sigmoid(dec.logit_o));
  const Eigen::Index P = obj.cloud.points.rows();

  std::vector<WholeGraspSample> out(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    WholeGraspSample& ws = out[static_cast<size_t>(s)];
    ws.markers.resize(3, cfg_.markers);
    for (int k = 0; k < cfg_.markers; ++k)
      for (int a = 0; a < 3; ++a) ws.markers(a, k) = static_cast<double>(mk(3 * k + a, s));
    ws.contact_m.resize(cfg_.markers);
    for (int k = 0; k < cfg_.markers; ++k) ws.contact_m[k] = static_cast<double>(cm(k, s));
    ws.contact_o.resize(P);
    for (Eigen::Index j = 0; j < P; ++j)
      ws.contact_o[j] = static_cast<double>(co(0, s * P + j));
  }
  return out;
}

template <class T>
void WholeGraspVaeT<T>::save(const std::string& path, int epoch) const {
  TensorFile tf;
  tf.meta["kind"] = "wholegrasp_vae";
  tf.meta["format"] = 1;
  tf.meta["latent"] = cfg_.latent;
  tf.meta["nsample"] = cfg_.nsample;
  tf.meta["markers"] = cfg_.markers;
  tf.meta["points"] = cfg_.points;
  tf.meta["epoch"] = epoch;
  store_.save(tf, "p.");
  tf.save(path);
}

template <class T>
WholeGraspVaeT<T> WholeGraspVaeT<T>::load(const std::string& path) {
  TensorFile tf = TensorFile::load(path);
  SAGA_REQUIRE(tf.meta.value("kind", "") == "wholegrasp_vae", InvalidInput,
               path + ": not a grasp model checkpoint");
  WholeGraspConfig cfg;
  cfg.latent = tf.meta.value("latent", cfg.latent);
  cfg.nsample = tf.meta.value("nsample", cfg.nsample);
  cfg.markers = tf.meta.value("markers", cfg.markers);
  cfg.points = tf.meta.value("points", cfg.points);
  WholeGraspVaeT model(cfg);
  Rng rng(0);
  model.init(rng);
  model.store_.load(tf, "p.");
  return model;
}

WholeGraspTrainReport train_wholegrasp(WholeGraspVae& model, const GraspDataset& data,
                                       uint64_t seed, const std::string& log_path) {
  const WholeGraspConfig& cfg = model.config();
  SAGA_REQUIRE(data.items.size() >= 20, InvalidInput, "grasp dataset too small to train on");
  Rng root(seed);
  Rng init_rng = root.fork(1);
  Rng noise_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  model.init(init_rng);

  std::vector<GroupingPlan> plans;
  plans.reserve(data.items.size());
  for (const GraspItem& it : data.items) plans.push_back(GroupingPlan::build_item(it, cfg.nsample));

  std::vector<const GraspItem*> train, val;
  split_train_val(data.items, train, val);
  std::vector<const GroupingPlan*> train_plans, val_plans;
  for (size_t i = 0; i < data.items.size(); ++i) {
    if (i % 10 == 9)
      val_plans.push_back(&plans[i]);
    else
      train_plans.push_back(&plans[i]);
  }

  nn::Adam<float> opt(model.params().all());
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    SAGA_REQUIRE(log.good(), InvalidInput, "cannot open training log " + log_path);
    log << "epoch,train_loss,rec_m,rec_cm,rec_co,kl,consistency,val_marker_l1,val_bce\n";
  }

  WholeGraspTrainReport report;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t(0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }
    double kl_weight = cfg.kl_step * epoch;
    WholeGraspLoss acc;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<const GraspItem*> batch;
      std::vector<const GroupingPlan*> bplans;
      for (size_t k = start; k < stop; ++k) {
        batch.push_back(train[order[k]]);
        bplans.push_back(train_plans[order[k]]);
      }
      model.params().zero_grad();
      WholeGraspLoss l = model.loss_batch(batch, bplans, kl_weight, noise_rng, true);
      opt.step(cfg.lr);
      acc.total += l.total;
      acc.rec_m += l.rec_m;
      acc.rec_cm += l.rec_cm;
      acc.rec_co += l.rec_co;
      acc.kl += l.kl;
      acc.consistency += l.consistency;
      ++n_batches;
    }
    double inv = 1.0 / std::max(1, n_batches);
    auto stats = model.validate(val, val_plans);
    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    std::fprintf(stderr,
                 "[grasp] epoch %2d/%d loss %.4f rec %.4f bce %.4f/%.4f kl %.3f cons %.5f | "
                 "val L1 %.4fm bce %.4f (%.1fs)\n",
                 epoch, cfg.epochs, acc.total * inv, acc.rec_m * inv, acc.rec_cm * inv,
                 acc.rec_co * inv, acc.kl * inv, acc.consistency * inv, stats.marker_l1, stats.bce,
                 secs);
    if (log.is_open())
      log << epoch << ',' << acc.total * inv << ',' << acc.rec_m * inv << ',' << acc.rec_cm * inv
          << ',' << acc.rec_co * inv << ',' << acc.kl * inv << ',' << acc.consistency * inv << ','
          << stats.marker_l1 << ',' << stats.bce << '\n';
    report.epochs = epoch;
    report.train_loss = acc.total * inv;
    report.val_marker_l1 = stats.marker_l1;
    report.val_bce = stats.bce;
    report.val_l1_history.push_back(stats.marker_l1);
  }
  return report;
}

template class WholeGraspVaeT<float>;
template class WholeGraspVaeT<double>;

}  // namespace saga
