#include "saga/grasppose_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "saga/energy_nodes.hpp"

namespace saga {

namespace {

std::vector<int> hand_vertex_ids(const ToyBody& body) {
  std::vector<int> ids = body.hand_verts_l;
  ids.insert(ids.end(), body.hand_verts_r.begin(), body.hand_verts_r.end());
  return ids;
}

}  // namespace

GraspPoseTargets make_pose_targets(const ObjectItem& obj, const WholeGraspSample& sample) {
  GraspPoseTargets tgt;
  const Vec3d lift(0, 0, obj.height);
  tgt.markers = sample.markers.colwise() + lift;
  tgt.contact_m = sample.contact_m;
  tgt.contact_o = sample.contact_o;
  tgt.obj_points = obj.cloud.points.transpose().colwise() + lift;
  tgt.obj_normals = obj.cloud.normals.transpose();
  return tgt;
}

ad::Var grasp_pose_energy(ad::Graph<double>& g, const ToyBody& body, ad::Var theta,
                          const GraspPoseTargets& tgt, const PoseEnergyWeights& w,
                          EnergyBreakdown* parts) {
  SAGA_REQUIRE(tgt.markers.rows() == 3 && tgt.markers.cols() == 143, InvalidInput,
               "pose energy: target markers must be 3 x 143");
  SAGA_REQUIRE(tgt.contact_m.size() == tgt.markers.cols(), InvalidInput,
               "pose energy: marker contact map size mismatch");
  SAGA_REQUIRE(tgt.obj_points.rows() == 3 && tgt.obj_normals.rows() == 3 &&
                   tgt.obj_points.cols() == tgt.obj_normals.cols() &&
                   tgt.contact_o.size() == tgt.obj_points.cols(),
               InvalidInput, "pose energy: object points/normals/contacts mismatch");

  ad::Var verts = body.skin_node(g, theta);
  ad::Var markers = body.markers_node(g, verts, MarkerLayout::kGrasp143);

  EnergyBreakdown bd;
  ad::Var fit = g.sum_abs(g.sub(markers, g.input(MatXd(tgt.markers))));
  if (w.alpha_theta > 0) {
    constexpr int n_pose = BodyParams::kBody + BodyParams::kHand + BodyParams::kExtra;
    ad::Var th = g.rows(theta, BodyParams::off_body(), n_pose);
    fit = g.add(fit, g.scale(g.sum_sq(th), w.alpha_theta));
  }
  ad::Var total = fit;
  bd.fit = g.val(fit)(0, 0);

  if (w.alpha_cont_m > 0 || w.alpha_cont_o > 0) {
    ad::Var cont;
    if (w.alpha_cont_m > 0) {
      ad::Var dm = g.sqdist_to_cloud(markers, tgt.obj_points);
      ad::Var wm = g.input(MatXd(tgt.contact_m.transpose()));
      cont = g.scale(g.sum(g.mul(dm, wm)), w.alpha_cont_m);
    }
    if (w.alpha_cont_o > 0) {
      ad::Var d_bo = g.sqdist_from_cloud(tgt.obj_points, verts);
      ad::Var wo = g.input(MatXd(tgt.contact_o.transpose()));
      ad::Var t2 = g.scale(g.sum(g.mul(d_bo, wo)), w.alpha_cont_o);
      cont = cont.ok() ? g.add(cont, t2) : t2;
    }
    bd.cont_o = g.val(cont)(0, 0);
    total = g.add(total, cont);
  }

  if (w.alpha_colli_O > 0 || w.alpha_colli_B > 0) {
    std::vector<int> hand_ids = hand_vertex_ids(body);
    ad::Var hand = g.gather_cols(verts, hand_ids);
    ad::Var colli;
    if (w.alpha_colli_O > 0) {
      // Sign from exact containment in the closed hand parts; the nearest
      // vertex supplies the magnitude (and the gradient path).
      VecXd sign = hand_containment_sign(body, g.val(verts), tgt.obj_points);
      ad::Var s = ad::signed_dist_probes_signed(g, tgt.obj_points, hand, sign);
      colli = g.scale(g.sum(ad::collision_hinge(g, s, w.sigma_o)), w.alpha_colli_O);
    }
    if (w.alpha_colli_B > 0) {
      ad::Var s = ad::signed_dist_to_cloud(g, hand, tgt.obj_points, tgt.obj_normals);
      ad::Var t2 = g.scale(g.sum(ad::collision_hinge(g, s, w.sigma_b)), w.alpha_colli_B);
      colli = colli.ok() ? g.add(colli, t2) : t2;
    }
    bd.colli = g.val(colli)(0, 0);
    total = g.add(total, colli);
  }

  if (w.alpha_cont_g > 0) {
    std::vector<int> feet(body.foot_verts.data(), body.foot_verts.data() + body.foot_verts.size());
    ad::Var fz = g.rows(g.gather_cols(verts, std::move(feet)), 2, 1);
    ad::Var ground = g.scale(g.sum_abs(fz), w.alpha_cont_g);
    bd.cont_g = g.val(ground)(0, 0);
    total = g.add(total, ground);
  }

  bd.total = g.val(total)(0, 0);
  if (parts) *parts = bd;
  return total;
}

GraspPoseReport optimize_grasp_pose(const ToyBody& body, const GraspPoseTargets& tgt,
                                    const BodyParams& init, const GraspPoseOptions& opt) {
  nn::ParamStore<double> ps;
  nn::Param<double>* beta = ps.add("beta", BodyParams::kBeta, 1);
  nn::Param<double>* trans = ps.add("trans", BodyParams::kTrans, 1);
  nn::Param<double>* rot = ps.add("rot", BodyParams::kRot, 1);
  nn::Param<double>* theta_b = ps.add("theta_b", BodyParams::kBody, 1);
  nn::Param<double>* theta_h = ps.add("theta_h", BodyParams::kHand, 1);
  nn::Param<double>* theta_e = ps.add("theta_e", BodyParams::kExtra, 1);
  beta->value = init.beta;
  trans->value = init.trans;
  rot->value = init.rot6;
  theta_b->value = init.theta_b;
  theta_h->value = init.theta_h;
  theta_e->value = init.theta_e;
  std::array<nn::Param<double>*, 6> blocks{beta, trans, rot, theta_b, theta_h, theta_e};

  // Per-stage active parameter blocks, indexed into `blocks`.
  const std::array<std::vector<int>, 3> active{{{1, 2}, {1, 2, 0, 3}, {3, 4, 5}}};

  std::ofstream trace;
  if (!opt.trace_csv.empty()) {
    trace.open(opt.trace_csv);
    SAGA_REQUIRE(trace.good(), InvalidInput, "cannot open trace file " + opt.trace_csv);
    trace << "step,stage,fit,colli,cont_o,cont_g,total\n";
  }

  GraspPoseReport report;
  auto eval = [&](const std::vector<int>& act, const PoseEnergyWeights& w, bool backward,
                  EnergyBreakdown* bd) {
    ad::Graph<double> g;
    std::vector<ad::Var> pieces;
    for (int k = 0; k < 6; ++k) {
      bool is_active = std::find(act.begin(), act.end(), k) != act.end();
      pieces.push_back(is_active ? nn::leaf(g, blocks[static_cast<size_t>(k)])
                                 : g.input(blocks[static_cast<size_t>(k)]->value));
    }
    ad::Var theta = g.rowcat(pieces);
    ad::Var e = grasp_pose_energy(g, body, theta, tgt, w, bd);
    if (backward) g.backward(e);
    return bd->total;
  };

  eval({}, opt.weights, false, &report.full_init);

  int global_step = 0;
  for (int s = 0; s < 3 && !report.aborted; ++s) {
    PoseEnergyWeights w = opt.weights;
    if (s < 2) {
      // Stages 1 and 2 descend the fit objective only (pose regularizer
      // included); contact, collision and ground terms enter in stage 3.
      w.alpha_cont_m = w.alpha_cont_o = 0;
      w.alpha_colli_O = w.alpha_colli_B = 0;
      w.alpha_cont_g = 0;
    }
    std::vector<nn::Param<double>*> act_params;
    for (int k : active[static_cast<size_t>(s)]) act_params.push_back(blocks[static_cast<size_t>(k)]);

    eval(active[static_cast<size_t>(s)], w, false, &report.stage_start[static_cast<size_t>(s)]);
    nn::Adam<double> adam(act_params);
    EnergyBreakdown bd;
    const int n_steps = opt.steps[static_cast<size_t>(s)];
    for (int step = 0; step < n_steps; ++step) {
      adam.zero_grad();
      double e = eval(active[static_cast<size_t>(s)], w, true, &bd);
      if (!std::isfinite(e)) {
        report.aborted = true;
        break;
      }
      // Stage rates are initial rates: hold for the first half, then
      // cosine-anneal to zero so the non-smooth fit term converges
      // instead of oscillating at a fixed step size.
      double u = std::max(0.0, 2.0 * step / n_steps - 1.0);
      double lr = opt.lr[static_cast<size_t>(s)] * 0.5 * (1.0 + std::cos(M_PI * u));
      adam.step(lr);
      if (trace.is_open())
        trace << global_step << ',' << s + 1 << ',' << bd.fit << ',' << bd.colli << ','
              << bd.cont_o << ',' << bd.cont_g << ',' << bd.total << '\n';
      ++global_step;
    }
    if (!report.aborted)
      eval(active[static_cast<size_t>(s)], w, false, &report.stage_end[static_cast<size_t>(s)]);
  }

  report.pose.beta = beta->value;
  report.pose.trans = trans->value;
  report.pose.rot6 = rot->value;
  report.pose.theta_b = theta_b->value;
  report.pose.theta_h = theta_h->value;
  report.pose.theta_e = theta_e->value;
  report.steps = global_step;
  eval({}, opt.weights, false, &report.full_final);
  return report;
}

BodyParams init_pose_from_markers(const ToyBody& body, const MatXd& markers_world) {
  SAGA_REQUIRE(markers_world.rows() == 3 && markers_world.cols() == 143, InvalidInput,
               "init_pose_from_markers: expects 3 x 143 markers");
  BodyParams rest = BodyParams::rest();
  MatXd m0 = body.markers(rest, MarkerLayout::kGrasp143);
  Vec3d pivot = body.joint_positions(rest).col(0);

  double best_cost = std::numeric_limits<double>::infinity();
  Mat3d best_R = Mat3d::Identity();
  Vec3d best_t = Vec3d::Zero();
  constexpr int kYawSteps = 72;
  for (int k = 0; k < kYawSteps; ++k) {
    double a = 2.0 * M_PI * k / kYawSteps;
    Mat3d R;
    R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    MatXd rotated = (R * (m0.colwise() - pivot)).colwise() + pivot;
    Vec3d t = (markers_world - rotated).rowwise().mean();
    double cost = ((rotated.colwise() + t) - markers_world).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best_R = R;
      best_t = t;
    }
  }
  BodyParams out = rest;
  out.rot6 = matrix_to_rot6d(best_R);
  out.trans = best_t;
  return out;
}

}  // namespace saga
