#include "saga/graspmotion_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "saga/energy_nodes.hpp"

namespace saga {

namespace {

std::vector<int> hand_vertex_ids(const ToyBody& body) {
  std::vector<int> ids = body.hand_verts_l;
  ids.insert(ids.end(), body.hand_verts_r.begin(), body.hand_verts_r.end());
  return ids;
}

std::vector<int> palm_vertex_ids(const ToyBody& body, bool right) {
  const std::vector<int>& pf = right ? body.palm_faces_r : body.palm_faces_l;
  std::vector<int> ids;
  for (int f : pf)
    for (int k = 0; k < 3; ++k) ids.push_back(body.faces(f, k));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// Column-flattens each 3 x C input (column-major, matching the velocity
// autoencoder's training layout) and concatenates them as columns.
ad::Var colcat_flat(ad::Graph<double>& g, const std::vector<ad::Var>& cols) {
  SAGA_REQUIRE(!cols.empty(), InvalidInput, "colcat_flat: no columns");
  const Eigen::Index rows = g.val(cols[0]).size();
  MatXd v(rows, static_cast<Eigen::Index>(cols.size()));
  std::vector<int> parents;
  parents.reserve(cols.size());
  for (size_t j = 0; j < cols.size(); ++j) {
    const MatXd& cv = g.val(cols[j]);
    SAGA_REQUIRE(cv.size() == rows, InvalidInput, "colcat_flat: ragged inputs");
    v.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const VecXd>(cv.data(), rows);
    parents.push_back(cols[j].i);
  }
  return g.custom(std::move(parents), std::move(v),
                  [cols](ad::Graph<double>& gg, ad::Graph<double>::Node& self) {
                    for (size_t j = 0; j < cols.size(); ++j) {
                      const MatXd& cv = gg.val(cols[j]);
                      MatXd gj = Eigen::Map<const MatXd>(
                          self.grad.col(static_cast<Eigen::Index>(j)).data(), cv.rows(), cv.cols());
                      gg.accum(cols[j].i, gj);
                    }
                  });
}

std::vector<int> index_range(int first, int count) {
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), first);
  return idx;
}

}  // namespace

ad::Var palm_facing_node(ad::Graph<double>& g, ad::Var palm, ad::Var normal, const MatXd& obj,
                         double sigma) {
  const MatXd& pv = g.val(palm);
  const MatXd& nv = g.val(normal);
  struct Gate {
    int k;       // palm vertex column
    int q;       // nearest object point column
  };
  std::vector<Gate> gates;
  double value = 0;
  const Vec3d n = nv.col(0);
  for (Eigen::Index k = 0; k < pv.cols(); ++k) {
    Eigen::Index qi;
    double d2 = (obj.colwise() - VecXd(pv.col(k))).colwise().squaredNorm().minCoeff(&qi);
    double r = std::sqrt(d2);
    if (r > sigma) continue;
    r = std::max(r, 1e-9);
    Vec3d d = (obj.col(qi) - pv.col(k)) / r;
    double c = n.dot(d);
    value += (c - 1.0) * (c - 1.0);
    gates.push_back({static_cast<int>(k), static_cast<int>(qi)});
  }
  return g.custom(
      {palm.i, normal.i}, MatXd::Constant(1, 1, value),
      [palm, normal, &obj, gates = std::move(gates)](ad::Graph<double>& gg,
                                                     ad::Graph<double>::Node& self) {
        if (gates.empty()) return;
        const MatXd& pv = gg.val(palm);
        const Vec3d n = gg.val(normal).col(0);
        const double go = self.grad(0, 0);
        MatXd gp = MatXd::Zero(3, pv.cols());
        Vec3d gn = Vec3d::Zero();
        for (const auto& gate : gates) {
          Vec3d u = obj.col(gate.q) - pv.col(gate.k);
          double r = std::max(u.norm(), 1e-9);
          Vec3d d = u / r;
          double c = n.dot(d);
          double e = 2.0 * (c - 1.0) * go;
          gn += e * d;
          gp.col(gate.k) -= e * (n - c * d) / r;
        }
        gg.accum(palm.i, gp);
        gg.accum(normal.i, MatXd(gn));
      });
}

ad::Var foot_skate_node(ad::Graph<double>& g, ad::Var ht0, ad::Var ht1,
                        const std::array<bool, 4>& mask, double sigma_v) {
  const MatXd& a = g.val(ht0);
  const MatXd& b = g.val(ht1);
  std::vector<int> active;
  double value = 0;
  for (int j = 0; j < 4; ++j) {
    if (!mask[static_cast<size_t>(j)]) continue;
    double r = (b.col(j) - a.col(j)).norm();
    if (r <= sigma_v) continue;
    value += (r - sigma_v) * (r - sigma_v);
    active.push_back(j);
  }
  if (active.empty()) return {};
  return g.custom({ht0.i, ht1.i}, MatXd::Constant(1, 1, value),
                  [ht0, ht1, sigma_v, active = std::move(active)](ad::Graph<double>& gg,
                                                                  ad::Graph<double>::Node& self) {
                    const MatXd& a = gg.val(ht0);
                    const MatXd& b = gg.val(ht1);
                    const double go = self.grad(0, 0);
                    MatXd ga = MatXd::Zero(3, a.cols());
                    MatXd gb = MatXd::Zero(3, b.cols());
                    for (int j : active) {
                      Vec3d u = b.col(j) - a.col(j);
                      double r = u.norm();  // > sigma_v > 0 while gated
                      Vec3d step = (2.0 * (r - sigma_v) / r * go) * u;
                      gb.col(j) += step;
                      ga.col(j) -= step;
                    }
                    gg.accum(ht0.i, ga);
                    gg.accum(ht1.i, gb);
                  });
}


ad::Var motion_energy(ad::Graph<double>& g, const ToyBody& body,
                      const std::vector<ad::Var>& thetas, const MarkerVelAeT<double>& ae,
                      const MotionOptTargets& tgt, const MotionEnergyWeights& w,
                      MotionEnergyBreakdown* parts) {
  const int n = static_cast<int>(thetas.size());
  SAGA_REQUIRE(n >= 2, InvalidInput, "motion energy: needs at least two frames");
  SAGA_REQUIRE(static_cast<int>(tgt.frames.size()) == n, InvalidInput,
               "motion energy: frame count mismatch");
  for (const MatXd& f : tgt.frames)
    SAGA_REQUIRE(f.rows() == 3 && f.cols() == 79, InvalidInput,
                 "motion energy: target frames must be 3 x 79");
  SAGA_REQUIRE(tgt.foot.rows() == 4 && tgt.foot.cols() == n, InvalidInput,
               "motion energy: foot labels must be 4 x frames");
  SAGA_REQUIRE(tgt.obj_points.rows() == 3 && tgt.obj_normals.rows() == 3 &&
                   tgt.obj_points.cols() == tgt.obj_normals.cols() &&
                   tgt.contact_o.size() == tgt.obj_points.cols(),
               InvalidInput, "motion energy: object points/normals/contacts mismatch");
  const int T = n - 1;
  const Eigen::Index P = tgt.obj_points.cols();

  std::vector<ad::Var> verts(static_cast<size_t>(n)), markers(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    verts[static_cast<size_t>(t)] = body.skin_node(g, thetas[static_cast<size_t>(t)]);
    markers[static_cast<size_t>(t)] =
        body.markers_node(g, verts[static_cast<size_t>(t)], MarkerLayout::kMotion79);
  }

  MotionEnergyBreakdown bd;

  // Per-frame marker fit plus pose regularizer.
  ad::Var fit;
  for (int t = 0; t < n; ++t) {
    ad::Var term = g.sum_abs(g.sub(markers[static_cast<size_t>(t)],
                                   g.input_view(&tgt.frames[static_cast<size_t>(t)])));
    if (w.pose.alpha_theta > 0) {
      constexpr int n_pose = BodyParams::kBody + BodyParams::kHand + BodyParams::kExtra;
      ad::Var th = g.rows(thetas[static_cast<size_t>(t)], BodyParams::off_body(), n_pose);
      term = g.add(term, g.scale(g.sum_sq(th), w.pose.alpha_theta));
    }
    fit = fit.ok() ? g.add(fit, term) : term;
  }
  ad::Var total = fit;
  bd.fit = g.val(fit)(0, 0);

  std::vector<int> hand_ids;
  std::vector<ad::Var> hand(static_cast<size_t>(n));
  auto hand_at = [&](int t) {
    if (!hand[static_cast<size_t>(t)].ok()) {
      if (hand_ids.empty()) hand_ids = hand_vertex_ids(body);
      hand[static_cast<size_t>(t)] = g.gather_cols(verts[static_cast<size_t>(t)], hand_ids);
    }
    return hand[static_cast<size_t>(t)];
  };

  // Object points penetrating the hand, every frame.
  if (w.pose.alpha_colli_O > 0 && P > 0) {
    ad::Var colli;
    for (int t = 0; t < n; ++t) {
      VecXd sign = hand_containment_sign(body, g.val(verts[static_cast<size_t>(t)]),
                                         tgt.obj_points);
      ad::Var s = ad::signed_dist_probes_signed(g, tgt.obj_points, hand_at(t), sign);
      ad::Var term = g.sum(ad::collision_hinge(g, s, w.pose.sigma_o));
      colli = colli.ok() ? g.add(colli, term) : term;
    }
    colli = g.scale(colli, w.pose.alpha_colli_O);
    bd.colli = g.val(colli)(0, 0);
    total = g.add(total, colli);
  }

  // Object contact attraction on the last five frames.
  if (w.pose.alpha_cont_o > 0 && P > 0) {
    ad::Var wo = g.input(MatXd(tgt.contact_o.transpose()));
    ad::Var cont;
    for (int t = std::max(0, n - 5); t < n; ++t) {
      ad::Var d = g.sqdist_from_cloud(tgt.obj_points, verts[static_cast<size_t>(t)]);
      ad::Var term = g.sum(g.mul(d, wo));
      cont = cont.ok() ? g.add(cont, term) : term;
    }
    cont = g.scale(cont, w.pose.alpha_cont_o);
    bd.cont_o = g.val(cont)(0, 0);
    total = g.add(total, cont);
  }

  // Palm-facing alignment, decaying from full weight at the first frame to
  // zero at the last.
  if (w.alpha_facing > 0 && P > 0) {
    std::vector<int> palm_ids = palm_vertex_ids(body, tgt.right_hand);
    ad::Var facing;
    for (int t = 0; t < n; ++t) {
      double a_t = facing_time_weight(t, T);
      if (a_t == 0) continue;
      ad::Var palm = g.gather_cols(verts[static_cast<size_t>(t)], palm_ids);
      ad::Var normal =
          body.palm_normal_node(g, verts[static_cast<size_t>(t)], tgt.right_hand);
      ad::Var node = palm_facing_node(g, palm, normal, tgt.obj_points, w.sigma);
      ad::Var term = g.scale(node, a_t);
      facing = facing.ok() ? g.add(facing, term) : term;
    }
    if (facing.ok()) {
      facing = g.scale(facing, w.alpha_facing);
      bd.facing = g.val(facing)(0, 0);
      total = g.add(total, facing);
    }
  }

  // Smoothness: squared differences of consecutive velocity latents, plus
  // squared hand-vertex velocities damping fast hand motion.
  if (w.alpha_smooth_latent > 0 || w.alpha_smooth_hand > 0) {
    ad::Var smooth;
    if (w.alpha_smooth_latent > 0 && n >= 3) {
      ad::Var flat = colcat_flat(g, markers);
      ad::Var vel = g.sub(g.gather_cols(flat, index_range(1, n - 1)),
                          g.gather_cols(flat, index_range(0, n - 1)));
      ad::Var lat = ae.encode(g, vel);
      ad::Var dlat = g.sub(g.gather_cols(lat, index_range(1, n - 2)),
                           g.gather_cols(lat, index_range(0, n - 2)));
      smooth = g.scale(g.sum_sq(dlat), w.alpha_smooth_latent);
    }
    if (w.alpha_smooth_hand > 0) {
      std::vector<ad::Var> hv(static_cast<size_t>(n));
      for (int t = 0; t < n; ++t) hv[static_cast<size_t>(t)] = hand_at(t);
      ad::Var hflat = colcat_flat(g, hv);
      ad::Var hvel = g.sub(g.gather_cols(hflat, index_range(1, n - 1)),
                           g.gather_cols(hflat, index_range(0, n - 1)));
      ad::Var term = g.scale(g.sum_sq(hvel), w.alpha_smooth_hand);
      smooth = smooth.ok() ? g.add(smooth, term) : term;
    }
    if (smooth.ok()) {
      bd.smooth = g.val(smooth)(0, 0);
      total = g.add(total, smooth);
    }
  }

  // Foot-skating hinge on contact-labeled heel/toe vertices.
  if (w.alpha_skate > 0) {
    std::vector<int> ht_ids(body.heel_toe.data(), body.heel_toe.data() + body.heel_toe.size());
    std::vector<ad::Var> ht(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t)
      ht[static_cast<size_t>(t)] = g.gather_cols(verts[static_cast<size_t>(t)], ht_ids);
    ad::Var skate;
    for (int t = 0; t + 1 < n; ++t) {
      std::array<bool, 4> mask;
      for (int j = 0; j < 4; ++j)
        mask[static_cast<size_t>(j)] = tgt.foot(j, t) > 0.5 && tgt.foot(j, t + 1) > 0.5;
      ad::Var node = foot_skate_node(g, ht[static_cast<size_t>(t)], ht[static_cast<size_t>(t + 1)],
                                mask, w.sigma_v);
      if (!node.ok()) continue;
      skate = skate.ok() ? g.add(skate, node) : node;
    }
    if (skate.ok()) {
      skate = g.scale(skate, w.alpha_skate);
      bd.skate = g.val(skate)(0, 0);
      total = g.add(total, skate);
    }
  }

  bd.total = g.val(total)(0, 0);
  if (parts) *parts = bd;
  return total;
}

GraspMotionReport optimize_grasp_motion(const ToyBody& body, const MarkerVelAeT<double>& ae,
                                        const MotionOptTargets& tgt,
                                        const std::vector<BodyParams>& init,
                                        const GraspMotionOptions& opt) {
  const int n = static_cast<int>(init.size());
  SAGA_REQUIRE(n >= 2, InvalidInput, "motion optimizer: needs at least two frames");
  SAGA_REQUIRE(tgt.frames.size() == init.size(), InvalidInput,
               "motion optimizer: init/target length mismatch");

  nn::ParamStore<double> ps;
  nn::Param<double>* beta = ps.add("beta", BodyParams::kBeta, 1);
  beta->value = init[0].beta;
  struct FrameBlocks {
    nn::Param<double>*trans, *rot, *theta_b, *theta_h, *theta_e;
  };
  std::vector<FrameBlocks> fb(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    const std::string p = "f" + std::to_string(t) + ".";
    FrameBlocks& b = fb[static_cast<size_t>(t)];
    b.trans = ps.add(p + "trans", BodyParams::kTrans, 1);
    b.rot = ps.add(p + "rot", BodyParams::kRot, 1);
    b.theta_b = ps.add(p + "theta_b", BodyParams::kBody, 1);
    b.theta_h = ps.add(p + "theta_h", BodyParams::kHand, 1);
    b.theta_e = ps.add(p + "theta_e", BodyParams::kExtra, 1);
    const BodyParams& src = init[static_cast<size_t>(t)];
    b.trans->value = src.trans;
    b.rot->value = src.rot6;
    b.theta_b->value = src.theta_b;
    b.theta_h->value = src.theta_h;
    b.theta_e->value = src.theta_e;
  }

  // The first frame anchors the sequence and moves at a higher rate; the
  // shared shape descends with the rest.
  std::vector<nn::Param<double>*> group_first{fb[0].trans, fb[0].rot, fb[0].theta_b,
                                              fb[0].theta_h, fb[0].theta_e};
  std::vector<nn::Param<double>*> group_rest{beta};
  for (int t = 1; t < n; ++t) {
    const FrameBlocks& b = fb[static_cast<size_t>(t)];
    group_rest.insert(group_rest.end(), {b.trans, b.rot, b.theta_b, b.theta_h, b.theta_e});
  }

  std::ofstream trace;
  if (!opt.trace_csv.empty()) {
    trace.open(opt.trace_csv);
    SAGA_REQUIRE(trace.good(), InvalidInput, "cannot open trace file " + opt.trace_csv);
    trace << "step,stage,fit,colli,cont_o,facing,smooth,skate,total\n";
  }

  GraspMotionReport report;
  auto eval = [&](const MotionEnergyWeights& w, bool backward, MotionEnergyBreakdown* bd) {
    ad::Graph<double> g;
    ad::Var b = nn::leaf(g, beta);
    std::vector<ad::Var> thetas(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) {
      const FrameBlocks& blk = fb[static_cast<size_t>(t)];
      thetas[static_cast<size_t>(t)] =
          g.rowcat({b, nn::leaf(g, blk.trans), nn::leaf(g, blk.rot), nn::leaf(g, blk.theta_b),
                    nn::leaf(g, blk.theta_h), nn::leaf(g, blk.theta_e)});
    }
    ad::Var e = motion_energy(g, body, thetas, ae, tgt, w, bd);
    if (backward) g.backward(e);
    return bd->total;
  };

  MotionEnergyWeights fit_only = opt.weights;
  fit_only.pose.alpha_colli_O = fit_only.pose.alpha_cont_o = 0;
  fit_only.alpha_facing = 0;
  fit_only.alpha_smooth_latent = fit_only.alpha_smooth_hand = 0;
  fit_only.alpha_skate = 0;

  eval(opt.weights, false, &report.full_init);

  int global_step = 0;
  for (int s = 0; s < 2 && !report.aborted; ++s) {
    const MotionEnergyWeights& w = s == 0 ? fit_only : opt.weights;
    eval(w, false, &report.stage_start[static_cast<size_t>(s)]);
    nn::Adam<double> adam_first(group_first);
    nn::Adam<double> adam_rest(group_rest);
    MotionEnergyBreakdown bd;
    const int n_steps = opt.steps[static_cast<size_t>(s)];
    for (int step = 0; step < n_steps; ++step) {
      adam_first.zero_grad();
      adam_rest.zero_grad();
      double e = eval(w, true, &bd);
      if (!std::isfinite(e)) {
        report.aborted = true;
        break;
      }
      // Printed schedule: stage 1 steps the rate down to 0.01 after step 60
      // and 0.003 after step 80; stage 2 runs at 0.01 and halves to 0.005
      // after step 150. Each group is additionally capped at its own
      // initial rate.
      double sched = s == 0 ? (step < 60 ? 0.1 : step < 80 ? 0.01 : 0.003)
                            : (step < 150 ? 0.01 : 0.005);
      adam_first.step(std::min(opt.lr_first_frame, sched));
      adam_rest.step(std::min(opt.lr_rest, sched));
      if (trace.is_open())
        trace << global_step << ',' << s + 1 << ',' << bd.fit << ',' << bd.colli << ','
              << bd.cont_o << ',' << bd.facing << ',' << bd.smooth << ',' << bd.skate << ','
              << bd.total << '\n';
      ++global_step;
    }
    if (!report.aborted) eval(w, false, &report.stage_end[static_cast<size_t>(s)]);
  }

  report.seq.resize(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    BodyParams& p = report.seq[static_cast<size_t>(t)];
    const FrameBlocks& b = fb[static_cast<size_t>(t)];
    p.beta = beta->value;
    p.trans = b.trans->value;
    p.rot6 = b.rot->value;
    p.theta_b = b.theta_b->value;
    p.theta_h = b.theta_h->value;
    p.theta_e = b.theta_e->value;
  }
  report.steps = global_step;
  eval(opt.weights, false, &report.full_final);
  return report;
}

MarkerVelAeT<double> widen(const MarkerVelAe& ae) {
  MarkerVelAeT<double> out;
  Rng init_rng(0);
  out.init(init_rng);
  auto src = ae.params().all();
  auto dst = out.params().all();
  SAGA_REQUIRE(src.size() == dst.size(), Internal, "autoencoder widen: parameter count mismatch");
  for (size_t i = 0; i < src.size(); ++i) {
    SAGA_REQUIRE(src[i]->name == dst[i]->name && src[i]->value.rows() == dst[i]->value.rows() &&
                     src[i]->value.cols() == dst[i]->value.cols(),
                 Internal, "autoencoder widen: parameter layout mismatch");
    dst[i]->value = src[i]->value.cast<double>();
  }
  out.recon_threshold = ae.recon_threshold;
  return out;
}

}  // namespace saga
