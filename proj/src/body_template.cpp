#include <map>
#include <tuple>

#include "saga/body_model.hpp"

namespace saga {

namespace {

// Assembles the toy body: joints first, then closed box parts rigidly
// attached to joints, then blendshapes and marker selections. Everything is
// deterministic; regen writes the result to data/ as golden files.
struct Builder {
  std::vector<std::string> joint_names;
  std::vector<int> parents;
  std::vector<Vec3<double>> joint_world;
  std::map<std::string, int> jid;

  std::vector<Vec3<double>> verts;
  std::vector<int> vjoint;
  std::vector<Eigen::RowVector3i> tris;
  std::vector<std::pair<int, int>> part_faces;
  std::map<std::string, std::pair<int, int>> part_vrange;
  std::map<std::string, std::pair<int, int>> part_frange;
  std::map<std::string, int> part_joint;

  std::vector<std::vector<std::pair<int, Vec3<double>>>> joint_dofs;
  int next_body_param = BodyParams::off_body();
  int next_hand_param = BodyParams::off_hand();

  int joint(const std::string& name, const std::string& parent, Vec3<double> world) {
    int id = static_cast<int>(joint_names.size());
    joint_names.push_back(name);
    parents.push_back(parent.empty() ? -1 : jid.at(parent));
    joint_world.push_back(world);
    jid[name] = id;
    joint_dofs.emplace_back();
    return id;
  }

  void dof_body(const std::string& jname, const Vec3<double>& axis) {
    SAGA_REQUIRE(next_body_param < BodyParams::off_body() + BodyParams::kBody, InvalidInput,
                 "too many body DOFs");
    joint_dofs[static_cast<size_t>(jid.at(jname))].push_back({next_body_param++, axis});
  }

  void dof_hand(const std::string& jname, const Vec3<double>& axis) {
    SAGA_REQUIRE(next_hand_param < BodyParams::off_hand() + BodyParams::kHand, InvalidInput,
                 "too many hand DOFs");
    joint_dofs[static_cast<size_t>(jid.at(jname))].push_back({next_hand_param++, axis});
  }

  // Closed box with a surface lattice; sub = cells per axis.
  void box(const std::string& part, const std::string& jname, Vec3<double> center,
           Vec3<double> half, Eigen::Vector3i sub) {
    int j = jid.at(jname);
    int v0 = static_cast<int>(verts.size());
    int f0 = static_cast<int>(tris.size());
    std::map<std::tuple<int, int, int>, int> lut;
    auto vid = [&](int i, int jj, int k) {
      auto key = std::make_tuple(i, jj, k);
      auto it = lut.find(key);
      if (it != lut.end()) return it->second;
      Vec3<double> p = center + Vec3<double>((2.0 * i / sub[0] - 1.0) * half[0],
                                             (2.0 * jj / sub[1] - 1.0) * half[1],
                                             (2.0 * k / sub[2] - 1.0) * half[2]);
      int id = static_cast<int>(verts.size());
      verts.push_back(p);
      vjoint.push_back(j);
      lut[key] = id;
      return id;
    };
    auto quad = [&](int a, int b, int c, int d, Vec3<double> outward) {
      // Split into two triangles oriented so normals point along `outward`.
      auto emit = [&](int x, int y, int z) {
        Vec3<double> n = (verts[y] - verts[x]).cross(verts[z] - verts[x]);
        if (n.dot(outward) < 0) std::swap(y, z);
        tris.push_back(Eigen::RowVector3i(x, y, z));
      };
      emit(a, b, c);
      emit(a, c, d);
    };
    for (int axis = 0; axis < 3; ++axis) {
      int u = (axis + 1) % 3, w = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        int fixed = side ? sub[axis] : 0;
        Vec3<double> outward = Vec3<double>::Zero();
        outward[axis] = side ? 1.0 : -1.0;
        for (int iu = 0; iu < sub[u]; ++iu)
          for (int iw = 0; iw < sub[w]; ++iw) {
            auto at = [&](int du, int dw) {
              int c[3];
              c[axis] = fixed;
              c[u] = iu + du;
              c[w] = iw + dw;
              return vid(c[0], c[1], c[2]);
            };
            quad(at(0, 0), at(1, 0), at(1, 1), at(0, 1), outward);
          }
      }
    }
    part_vrange[part] = {v0, static_cast<int>(verts.size())};
    part_frange[part] = {f0, static_cast<int>(tris.size())};
    part_faces.push_back({f0, static_cast<int>(tris.size())});
    part_joint[part] = j;
  }

  std::vector<int> pool(std::initializer_list<const char*> names) const {
    std::vector<int> out;
    for (auto* n : names) {
      auto [b, e] = part_vrange.at(n);
      for (int v = b; v < e; ++v) out.push_back(v);
    }
    return out;
  }

  // Farthest point sampling over a vertex pool, seeded at the pool front,
  // optionally pre-seeded with forced picks.
  std::vector<int> fps(const std::vector<int>& candidates, int k,
                       const std::vector<int>& forced = {}) const {
    std::vector<int> sel = forced;
    std::vector<double> dist(candidates.size(), std::numeric_limits<double>::infinity());
    auto update = [&](int chosen) {
      for (size_t i = 0; i < candidates.size(); ++i) {
        double d = (verts[static_cast<size_t>(candidates[i])] - verts[static_cast<size_t>(chosen)])
                       .squaredNorm();
        if (d < dist[i]) dist[i] = d;
      }
    };
    for (int f : sel) update(f);
    if (sel.empty()) {
      sel.push_back(candidates[0]);
      update(candidates[0]);
    }
    while (static_cast<int>(sel.size()) < k) {
      size_t best = 0;
      for (size_t i = 1; i < candidates.size(); ++i)
        if (dist[i] > dist[best]) best = i;
      sel.push_back(candidates[best]);
      update(candidates[best]);
    }
    return sel;
  }

  int nearest_vert(const std::string& part, Vec3<double> p) const {
    auto [b, e] = part_vrange.at(part);
    int best = b;
    double bd = std::numeric_limits<double>::infinity();
    for (int v = b; v < e; ++v) {
      double d = (verts[static_cast<size_t>(v)] - p).squaredNorm();
      if (d < bd) {
        bd = d;
        best = v;
      }
    }
    return best;
  }
};

constexpr double kShoulderX = 0.21, kElbowX = 0.44, kWristX = 0.70;

void build_arm_and_hand(Builder& B, int side /*-1 left, +1 right*/) {
  std::string s = side < 0 ? "l_" : "r_";
  double sx = static_cast<double>(side);
  B.joint(s + "shoulder", "chest", {sx * kShoulderX, 0, 1.40});
  B.joint(s + "elbow", s + "shoulder", {sx * kElbowX, 0, 1.40});
  B.joint(s + "wrist", s + "elbow", {sx * kWristX, 0, 1.40});

  B.box(s + "uarm", s + "shoulder", {sx * 0.325, 0, 1.40}, {0.115, 0.045, 0.045}, {3, 1, 1});
  B.box(s + "farm", s + "elbow", {sx * 0.57, 0, 1.40}, {0.125, 0.04, 0.04}, {3, 1, 1});
  B.box(s + "palm", s + "wrist", {sx * 0.765, 0, 1.40}, {0.05, 0.045, 0.014}, {4, 4, 1});

  // Thumb hangs off the front (-y) edge of the palm; two segments.
  B.joint(s + "thumb1", s + "wrist", {sx * 0.735, -0.045, 1.395});
  B.joint(s + "thumb2", s + "thumb1", {sx * 0.735, -0.085, 1.395});
  B.box(s + "thumb1", s + "thumb1", {sx * 0.735, -0.065, 1.395}, {0.009, 0.02, 0.009}, {1, 1, 1});
  B.box(s + "thumb2", s + "thumb2", {sx * 0.735, -0.105, 1.395}, {0.009, 0.02, 0.009}, {1, 1, 1});

  const char* fingers[4] = {"index", "middle", "ring", "pinky"};
  double fy[4] = {-0.034, -0.0115, 0.0115, 0.034};
  for (int f = 0; f < 4; ++f) {
    std::string fn = s + fingers[f];
    B.joint(fn + "1", s + "wrist", {sx * 0.82, fy[f], 1.40});
    B.joint(fn + "2", fn + "1", {sx * 0.855, fy[f], 1.40});
    B.box(fn + "1", fn + "1", {sx * 0.8375, fy[f], 1.40}, {0.0175, 0.008, 0.008}, {1, 1, 1});
    B.box(fn + "2", fn + "2", {sx * 0.8725, fy[f], 1.40}, {0.0175, 0.008, 0.008}, {1, 1, 1});
  }
}

void build_leg(Builder& B, int side) {
  std::string s = side < 0 ? "l_" : "r_";
  double sx = static_cast<double>(side);
  B.joint(s + "hip", "pelvis", {sx * 0.09, 0, 0.90});
  B.joint(s + "knee", s + "hip", {sx * 0.09, 0, 0.50});
  B.joint(s + "ankle", s + "knee", {sx * 0.09, 0, 0.08});
  B.joint(s + "toe", s + "ankle", {sx * 0.09, 0.10, 0.02});
  B.box(s + "thigh", s + "hip", {sx * 0.09, 0, 0.70}, {0.065, 0.065, 0.20}, {2, 1, 2});
  B.box(s + "shank", s + "knee", {sx * 0.09, 0, 0.29}, {0.05, 0.05, 0.21}, {2, 1, 2});
  B.box(s + "foot", s + "ankle", {sx * 0.09, 0.03, 0.04}, {0.05, 0.09, 0.04}, {2, 2, 1});
  B.box(s + "toes", s + "toe", {sx * 0.09, 0.145, 0.025}, {0.05, 0.025, 0.025}, {1, 1, 1});
}

ToyBody assemble() {
  Builder B;

  // --- skeleton (world rest positions; body faces +y, z up) -------------
  B.joint("pelvis", "", {0, 0, 0.95});
  B.joint("spine1", "pelvis", {0, 0, 1.10});
  B.joint("spine2", "spine1", {0, 0, 1.25});
  B.joint("chest", "spine2", {0, 0, 1.32});
  B.joint("neck", "chest", {0, 0, 1.45});
  B.joint("head", "neck", {0, 0, 1.55});

  B.box("pelvis", "pelvis", {0, 0, 0.95}, {0.14, 0.10, 0.09}, {3, 2, 2});
  B.box("torso", "spine1", {0, 0, 1.12}, {0.13, 0.095, 0.09}, {3, 2, 2});
  B.box("chest", "spine2", {0, 0, 1.32}, {0.16, 0.10, 0.11}, {4, 2, 2});
  B.box("neck", "neck", {0, 0, 1.47}, {0.04, 0.04, 0.045}, {1, 1, 1});
  B.box("head", "head", {0, 0, 1.62}, {0.08, 0.09, 0.10}, {3, 3, 3});

  build_arm_and_hand(B, -1);
  build_arm_and_hand(B, +1);
  build_leg(B, -1);
  build_leg(B, +1);

  // --- DOFs (theta_b order is part of the parameter contract) -----------
  const Vec3<double> X(1, 0, 0), Y(0, 1, 0), Z(0, 0, 1);
  B.dof_body("spine1", X);
  B.dof_body("spine1", Y);
  B.dof_body("spine1", Z);
  B.dof_body("neck", X);
  for (auto s : {"l_", "r_"}) {
    B.dof_body(std::string(s) + "shoulder", X);
    B.dof_body(std::string(s) + "shoulder", Y);
    B.dof_body(std::string(s) + "shoulder", Z);
  }
  for (auto s : {"l_", "r_"}) {
    B.dof_body(std::string(s) + "elbow", Z);
    B.dof_body(std::string(s) + "elbow", X);
  }
  for (auto s : {"l_", "r_"}) {
    B.dof_body(std::string(s) + "wrist", Z);
    B.dof_body(std::string(s) + "wrist", Y);
  }
  for (auto s : {"l_", "r_"}) {
    B.dof_body(std::string(s) + "hip", X);
    B.dof_body(std::string(s) + "hip", Y);
    B.dof_body(std::string(s) + "hip", Z);
  }
  for (auto s : {"l_", "r_"}) B.dof_body(std::string(s) + "knee", X);
  for (auto s : {"l_", "r_"}) {
    B.dof_body(std::string(s) + "ankle", X);
    B.dof_body(std::string(s) + "ankle", Y);
  }
  for (auto s : {"l_", "r_"}) B.dof_body(std::string(s) + "toe", X);

  for (auto s : {"l_", "r_"}) {
    std::string ss(s);
    B.dof_hand(ss + "thumb1", X);
    B.dof_hand(ss + "thumb1", Y);
    B.dof_hand(ss + "thumb1", Z);
    B.dof_hand(ss + "thumb2", X);
    for (auto f : {"index", "middle", "ring", "pinky"}) {
      B.dof_hand(ss + f + std::string("1"), Y);
      B.dof_hand(ss + f + std::string("1"), Z);
      B.dof_hand(ss + f + std::string("1"), X);
      B.dof_hand(ss + f + std::string("2"), Y);
      B.dof_hand(ss + f + std::string("2"), X);
    }
  }

  // --- pack into ToyBody -------------------------------------------------
  ToyBody body;
  const int V = static_cast<int>(B.verts.size());
  const int J = static_cast<int>(B.joint_names.size());
  body.joint_names = B.joint_names;
  body.parents = Eigen::Map<Eigen::VectorXi>(B.parents.data(), J);
  body.joint_dofs = B.joint_dofs;
  body.vtx_joint = Eigen::Map<Eigen::VectorXi>(B.vjoint.data(), V);
  body.faces.resize(static_cast<Eigen::Index>(B.tris.size()), 3);
  for (size_t t = 0; t < B.tris.size(); ++t) body.faces.row(static_cast<Eigen::Index>(t)) = B.tris[t];
  body.parts = B.part_faces;

  body.offsets0.resize(3, J);
  for (int j = 0; j < J; ++j) {
    int p = B.parents[static_cast<size_t>(j)];
    body.offsets0.col(j) =
        p < 0 ? B.joint_world[static_cast<size_t>(j)]
              : Vec3<double>(B.joint_world[static_cast<size_t>(j)] - B.joint_world[static_cast<size_t>(p)]);
  }
  body.local0.resize(3, V);
  for (int v = 0; v < V; ++v)
    body.local0.col(v) =
        B.verts[static_cast<size_t>(v)] - B.joint_world[static_cast<size_t>(B.vjoint[static_cast<size_t>(v)])];

  // --- blendshapes ---------------------------------------------------------
  body.vblend = MatXd::Zero(3 * V, 10);
  body.jblend = MatXd::Zero(3 * J, 10);
  auto in_part = [&](int v, std::initializer_list<const char*> names) {
    for (auto* n : names) {
      auto [b, e] = B.part_vrange.at(n);
      if (v >= b && v < e) return true;
    }
    return false;
  };
  auto wpos = [&](int v) { return B.verts[static_cast<size_t>(v)]; };
  auto jw = [&](const char* n) { return B.joint_world[static_cast<size_t>(B.jid.at(n))]; };

  for (int v = 0; v < V; ++v) {
    Vec3<double> l = body.local0.col(v);
    // 0 height: global z scale (joints carry most of it).
    body.vblend(3 * v + 2, 0) = 0.1 * l.z();
    // 1 girth: torso radial.
    if (in_part(v, {"pelvis", "torso", "chest"})) {
      body.vblend(3 * v + 0, 1) = 0.06 * wpos(v).x();
      body.vblend(3 * v + 1, 1) = 0.06 * wpos(v).y();
    }
    // 2 arm length: stretch arm boxes along their axis.
    if (in_part(v, {"l_uarm", "l_farm", "r_uarm", "r_farm"}))
      body.vblend(3 * v + 0, 2) = 0.12 * l.x();
    // 3 leg length.
    if (in_part(v, {"l_thigh", "l_shank", "r_thigh", "r_shank"}))
      body.vblend(3 * v + 2, 3) = 0.12 * l.z();
    // 4 shoulder width: chest stretch.
    if (in_part(v, {"chest"})) body.vblend(3 * v + 0, 4) = 0.15 * l.x();
    // 5 head size.
    if (in_part(v, {"head"})) {
      Vec3<double> d = wpos(v) - Vec3<double>(0, 0, 1.62);
      body.vblend.block<3, 1>(3 * v, 5) = 0.12 * d;
    }
    // 6 hand size.
    for (auto s : {"l_", "r_"}) {
      std::string ss(s);
      if (in_part(v, {(ss + "palm").c_str(), (ss + "thumb1").c_str(), (ss + "thumb2").c_str()}) ||
          in_part(v, {(ss + "index1").c_str(), (ss + "index2").c_str(), (ss + "middle1").c_str(),
                      (ss + "middle2").c_str()}) ||
          in_part(v, {(ss + "ring1").c_str(), (ss + "ring2").c_str(), (ss + "pinky1").c_str(),
                      (ss + "pinky2").c_str()})) {
        Vec3<double> d = wpos(v) - jw((ss + "wrist").c_str());
        body.vblend.block<3, 1>(3 * v, 6) += 0.15 * d;
      }
    }
    // 7 belly: front bulge of the lower torso.
    if (in_part(v, {"pelvis", "torso"}))
      body.vblend(3 * v + 1, 7) = 0.12 * std::max(l.y(), 0.0);
    // 8 foot size.
    if (in_part(v, {"l_foot", "l_toes"})) body.vblend(3 * v + 1, 8) = 0.2 * (wpos(v).y() - jw("l_ankle").y());
    if (in_part(v, {"r_foot", "r_toes"})) body.vblend(3 * v + 1, 8) = 0.2 * (wpos(v).y() - jw("r_ankle").y());
    // 9 torso length: stretch torso boxes vertically.
    if (in_part(v, {"torso", "chest"})) body.vblend(3 * v + 2, 9) = 0.15 * l.z();
  }

  auto jof = [&](const char* n) { return body.offsets0.col(B.jid.at(n)); };
  auto set_jblend = [&](const char* n, int k, Vec3<double> d) {
    body.jblend.block<3, 1>(3 * B.jid.at(n), k) += d;
  };
  for (int j = 0; j < J; ++j) body.jblend(3 * j + 2, 0) = 0.1 * body.offsets0(2, j);
  for (auto s : {"l_", "r_"}) {
    std::string ss(s);
    set_jblend((ss + "elbow").c_str(), 2, 0.12 * jof((ss + "elbow").c_str()));
    set_jblend((ss + "wrist").c_str(), 2, 0.12 * jof((ss + "wrist").c_str()));
    set_jblend((ss + "knee").c_str(), 3, 0.12 * jof((ss + "knee").c_str()));
    set_jblend((ss + "ankle").c_str(), 3, 0.12 * jof((ss + "ankle").c_str()));
    set_jblend((ss + "shoulder").c_str(), 4, Vec3<double>(0.25 * jof((ss + "shoulder").c_str()).x(), 0, 0));
    for (auto f : {"thumb1", "thumb2", "index1", "index2", "middle1", "middle2", "ring1", "ring2",
                   "pinky1", "pinky2"}) {
      std::string fn = ss + f;
      set_jblend(fn.c_str(), 6, 0.15 * jof(fn.c_str()));
    }
    set_jblend((ss + "toe").c_str(), 8, Vec3<double>(0, 0.2 * jof((ss + "toe").c_str()).y(), 0));
  }
  set_jblend("spine1", 9, Vec3<double>(0, 0, 0.2 * jof("spine1").z()));
  set_jblend("spine2", 9, Vec3<double>(0, 0, 0.2 * jof("spine2").z()));
  set_jblend("neck", 9, Vec3<double>(0, 0, 0.2 * jof("neck").z()));

  // --- markers -------------------------------------------------------------
  // Heels and toes are forced body markers so foot motion is always part of
  // marker fits; the rest are farthest-point picks for even coverage.
  int l_heel = B.nearest_vert("l_foot", {-0.09, -0.06, 0.0});
  int r_heel = B.nearest_vert("r_foot", {0.09, -0.06, 0.0});
  int l_toe = B.nearest_vert("l_toes", {-0.09, 0.17, 0.0});
  int r_toe = B.nearest_vert("r_toes", {0.09, 0.17, 0.0});
  body.heel_toe.resize(4);
  body.heel_toe << l_heel, r_heel, l_toe, r_toe;

  auto body_pool = B.pool({"pelvis", "torso", "chest", "neck", "l_uarm", "l_farm", "r_uarm",
                           "r_farm", "l_thigh", "l_shank", "l_foot", "l_toes", "r_thigh",
                           "r_shank", "r_foot", "r_toes"});
  std::vector<int> body49 = B.fps(body_pool, 49, {l_heel, r_heel, l_toe, r_toe});

  // Face: head vertices on the front (+y) surface.
  std::vector<int> face_pool;
  {
    auto [b, e] = B.part_vrange.at("head");
    for (int v = b; v < e; ++v)
      if (B.verts[static_cast<size_t>(v)].y() > 0.09 - 1e-6) face_pool.push_back(v);
  }
  std::vector<int> face14 = B.fps(face_pool, 14);

  // Hand-back markers: 3 per hand on the outer (+z in T-pose) palm face.
  std::vector<int> hand6;
  for (auto s : {"l_", "r_"}) {
    std::string palm = std::string(s) + "palm";
    double cx = (s[0] == 'l' ? -0.765 : 0.765);
    hand6.push_back(B.nearest_vert(palm, {cx, 0, 1.414}));
    hand6.push_back(B.nearest_vert(palm, {cx - 0.04, 0.03, 1.414}));
    hand6.push_back(B.nearest_vert(palm, {cx + 0.04, -0.03, 1.414}));
  }

  // Finger markers: proximal top, distal top, tip bottom, per finger.
  std::vector<int> finger30;
  std::vector<int> tips10;
  for (auto s : {"l_", "r_"}) {
    double sx = (s[0] == 'l' ? -1.0 : 1.0);
    std::string ss(s);
    for (auto f : {"thumb", "index", "middle", "ring", "pinky"}) {
      std::string f1 = ss + f + std::string("1"), f2 = ss + f + std::string("2");
      auto [b1, e1] = B.part_vrange.at(f1);
      auto [b2, e2] = B.part_vrange.at(f2);
      Vec3<double> c1 = Vec3<double>::Zero(), c2 = Vec3<double>::Zero();
      for (int v = b1; v < e1; ++v) c1 += B.verts[static_cast<size_t>(v)];
      for (int v = b2; v < e2; ++v) c2 += B.verts[static_cast<size_t>(v)];
      c1 /= (e1 - b1);
      c2 /= (e2 - b2);
      bool thumb = std::string(f) == "thumb";
      Vec3<double> up = thumb ? Vec3<double>(sx * 0.009, 0, 0) : Vec3<double>(0, 0, 0.008);
      Vec3<double> tipd = thumb ? Vec3<double>(0, -0.02, -0.009) : Vec3<double>(sx * 0.0175, 0, -0.008);
      finger30.push_back(B.nearest_vert(f1, c1 + up));
      finger30.push_back(B.nearest_vert(f2, c2 + up));
      int tip = B.nearest_vert(f2, c2 + tipd);
      finger30.push_back(tip);
      tips10.push_back(tip);
    }
  }

  // Palm contact markers: 22 per palm from the inner (-z in T-pose) face.
  std::vector<int> palm44;
  for (auto s : {"l_", "r_"}) {
    std::string palm = std::string(s) + "palm";
    auto [b, e] = B.part_vrange.at(palm);
    std::vector<int> inner;
    for (int v = b; v < e; ++v)
      if (B.verts[static_cast<size_t>(v)].z() < 1.40 - 0.014 + 1e-6) inner.push_back(v);
    auto picks = B.fps(inner, 22);
    palm44.insert(palm44.end(), picks.begin(), picks.end());
  }

  auto cat = [](std::initializer_list<const std::vector<int>*> lists) {
    std::vector<int> out;
    for (auto* l : lists) out.insert(out.end(), l->begin(), l->end());
    return out;
  };
  std::vector<int> g143 = cat({&body49, &face14, &hand6, &finger30, &palm44});
  std::vector<int> m79 = cat({&body49, &face14, &hand6, &tips10});
  SAGA_REQUIRE(g143.size() == 143 && m79.size() == 79, InvalidInput, "marker layout counts");
  body.markers_grasp = Eigen::Map<Eigen::VectorXi>(g143.data(), 143);
  body.markers_motion = Eigen::Map<Eigen::VectorXi>(m79.data(), 79);
  body.fingertips = Eigen::Map<Eigen::VectorXi>(tips10.data(), 10);
  for (int i = 0; i < 49; ++i) body.marker_group_names.push_back("body");
  for (int i = 0; i < 14; ++i) body.marker_group_names.push_back("face");
  for (int i = 0; i < 6; ++i) body.marker_group_names.push_back("hand");
  for (int i = 0; i < 30; ++i) body.marker_group_names.push_back("finger");
  for (int i = 0; i < 44; ++i) body.marker_group_names.push_back("palm");

  // --- hands, palms, feet ---------------------------------------------------
  for (auto s : {"l_", "r_"}) {
    std::string ss(s);
    std::vector<int>& hv = (s[0] == 'l') ? body.hand_verts_l : body.hand_verts_r;
    for (auto p : {"palm", "thumb1", "thumb2", "index1", "index2", "middle1", "middle2", "ring1",
                   "ring2", "pinky1", "pinky2"}) {
      auto [b, e] = B.part_vrange.at(ss + p);
      for (int v = b; v < e; ++v) hv.push_back(v);
    }
    // Inner palm faces nearest the palm center.
    double cx = (s[0] == 'l' ? -0.765 : 0.765);
    Vec3<double> pc(cx, 0, 1.40 - 0.014);
    auto [fb, fe] = B.part_frange.at(ss + "palm");
    std::vector<std::pair<double, int>> scored;
    for (int f = fb; f < fe; ++f) {
      Vec3<double> cen = (B.verts[static_cast<size_t>(B.tris[static_cast<size_t>(f)][0])] +
                          B.verts[static_cast<size_t>(B.tris[static_cast<size_t>(f)][1])] +
                          B.verts[static_cast<size_t>(B.tris[static_cast<size_t>(f)][2])]) /
                         3.0;
      if (cen.z() > 1.40 - 0.014 + 1e-6) continue;  // inner face only
      scored.push_back({(cen - pc).squaredNorm(), f});
    }
    std::sort(scored.begin(), scored.end());
    std::vector<int>& pf = (s[0] == 'l') ? body.palm_faces_l : body.palm_faces_r;
    for (int k = 0; k < 4 && k < static_cast<int>(scored.size()); ++k)
      pf.push_back(scored[static_cast<size_t>(k)].second);
    int& anchor = (s[0] == 'l') ? body.palm_anchor_l : body.palm_anchor_r;
    anchor = B.nearest_vert(ss + "palm", pc);
  }

  std::vector<int> fv;
  for (auto p : {"l_foot", "l_toes", "r_foot", "r_toes"}) {
    auto [b, e] = B.part_vrange.at(p);
    for (int v = b; v < e; ++v)
      if (B.verts[static_cast<size_t>(v)].z() < 0.005) fv.push_back(v);
  }
  body.foot_verts = Eigen::Map<Eigen::VectorXi>(fv.data(), static_cast<Eigen::Index>(fv.size()));

  return body;
}

}  // namespace

const ToyBody& builtin_template() {
  static const ToyBody body = assemble();
  return body;
}

}  // namespace saga
