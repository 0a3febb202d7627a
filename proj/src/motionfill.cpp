#include "saga/motionfill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "saga/geometry.hpp"
#include "saga/tensor_file.hpp"

namespace saga {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Index checked_cols(const MatXd& traj) {
  SAGA_REQUIRE(traj.rows() == 4 && traj.cols() >= 3, InvalidInput,
               "trajectory must be 4 x (T+2) with T >= 1");
  return traj.cols();
}

VecXd flatten_traj(const MatXd& traj) {
  return Eigen::Map<const VecXd>(traj.data(), traj.size());
}

MatXd unflatten_traj(const VecXd& v) {
  SAGA_REQUIRE(v.size() % 4 == 0, Internal, "trajectory vector length");
  return Eigen::Map<const MatXd>(v.data(), 4, v.size() / 4);
}

// Numerically stable binary cross-entropy from a logit.
double bce_from_logit(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Root states and trajectories
// ---------------------------------------------------------------------------

void renorm_heading(double& cg, double& sg) {
  double n2 = cg * cg + sg * sg;
  if (n2 < 1e-16) {
    cg = 1;
    sg = 0;
    return;
  }
  if (std::abs(n2 - 1.0) <= 1e-12) return;  // keep exact bits when already unit
  double n = std::sqrt(n2);
  cg /= n;
  sg /= n;
}

RootState traj_state(const MatXd& traj, int t) {
  Eigen::Index n = checked_cols(traj);
  SAGA_REQUIRE(t >= 0 && t < n, InvalidInput, "trajectory frame out of range");
  return {traj(0, t), traj(1, t), traj(2, t), traj(3, t)};
}

void set_traj_state(MatXd& traj, int t, const RootState& s) {
  Eigen::Index n = checked_cols(traj);
  SAGA_REQUIRE(t >= 0 && t < n, InvalidInput, "trajectory frame out of range");
  traj(0, t) = s.x;
  traj(1, t) = s.y;
  traj(2, t) = s.cg;
  traj(3, t) = s.sg;
}

double heading_delta(const RootState& a, const RootState& b) {
  double dot = a.cg * b.cg + a.sg * b.sg;
  double cross = a.cg * b.sg - a.sg * b.cg;
  return std::atan2(cross, dot);
}

RootState extrapolate_state(const RootState& prev, const RootState& last) {
  RootState out;
  out.x = 2 * last.x - prev.x;
  out.y = 2 * last.y - prev.y;
  double ang = std::atan2(last.sg, last.cg) + heading_delta(prev, last);
  out.cg = std::cos(ang);
  out.sg = std::sin(ang);
  renorm_heading(out.cg, out.sg);
  return out;
}

RootState root_state_of(const ToyBody& body, const BodyParams& p) {
  int pelvis = -1;
  for (size_t j = 0; j < body.joint_names.size(); ++j)
    if (body.joint_names[j] == "pelvis") {
      pelvis = static_cast<int>(j);
      break;
    }
  SAGA_REQUIRE(pelvis >= 0, Internal, "body template has no pelvis joint");
  MatXd joints = body.joint_positions(p);
  Eigen::Matrix<double, 6, 1> r6 = p.rot6;
  Mat3d R = rot6d_to_matrix<double>(r6);
  Vec3d fwd = R * Vec3d(0, 1, 0);
  double n = std::hypot(fwd.x(), fwd.y());
  if (!(n > 1e-8)) throw DegenerateRotation("root heading undefined: forward axis is vertical");
  RootState s;
  s.x = joints(0, pelvis);
  s.y = joints(1, pelvis);
  s.cg = fwd.y() / n;
  s.sg = -fwd.x() / n;
  return s;
}

Trajectory interp_traj(const RootState& g0, const RootState& gT, int T) {
  SAGA_REQUIRE(T >= 1, InvalidInput, "interp_traj: need at least one step");
  SAGA_REQUIRE(std::abs(g0.cg * g0.cg + g0.sg * g0.sg - 1.0) <= 1e-6 &&
                   std::abs(gT.cg * gT.cg + gT.sg * gT.sg - 1.0) <= 1e-6,
               InvalidInput, "interp_traj: endpoint headings must be unit");
  Trajectory out;
  out.states.resize(4, T + 2);

  double delta = heading_delta(g0, gT);
  if (kPi - std::abs(delta) < 1e-9) {
    delta = kPi;  // opposite headings: rotate the positive way
    out.antipodal = true;
  }
  double a0 = std::atan2(g0.sg, g0.cg);
  double sx = (gT.x - g0.x) / T;
  double sy = (gT.y - g0.y) / T;
  for (int t = 0; t <= T + 1; ++t) {
    double ang = a0 + delta * (static_cast<double>(t) / T);
    RootState s{g0.x + sx * t, g0.y + sy * t, std::cos(ang), std::sin(ang)};
    renorm_heading(s.cg, s.sg);
    set_traj_state(out.states, t, s);
  }
  set_traj_state(out.states, 0, g0);
  set_traj_state(out.states, T, gT);
  return out;
}

MatXd localize_markers(const MatXd& global3xN, const RootState& s) {
  SAGA_REQUIRE(global3xN.rows() == 3, InvalidInput, "markers must be 3 x N");
  MatXd out(3, global3xN.cols());
  for (Eigen::Index i = 0; i < global3xN.cols(); ++i) {
    double dx = global3xN(0, i) - s.x;
    double dy = global3xN(1, i) - s.y;
    out(0, i) = s.cg * dx + s.sg * dy;
    out(1, i) = -s.sg * dx + s.cg * dy;
    out(2, i) = global3xN(2, i);
  }
  return out;
}

MatXd globalize_markers(const MatXd& local3xN, const RootState& s) {
  SAGA_REQUIRE(local3xN.rows() == 3, InvalidInput, "markers must be 3 x N");
  MatXd out(3, local3xN.cols());
  for (Eigen::Index i = 0; i < local3xN.cols(); ++i) {
    double lx = local3xN(0, i);
    double ly = local3xN(1, i);
    out(0, i) = s.cg * lx - s.sg * ly + s.x;
    out(1, i) = s.sg * lx + s.cg * ly + s.y;
    out(2, i) = local3xN(2, i);
  }
  return out;
}

Vec3d local_root_velocity(const RootState& a, const RootState& b) {
  double dx = b.x - a.x;
  double dy = b.y - a.y;
  return Vec3d(a.cg * dx + a.sg * dy, -a.sg * dx + a.cg * dy, heading_delta(a, b));
}

// ---------------------------------------------------------------------------
// Normalization statistics
// ---------------------------------------------------------------------------

namespace {

double pow2_scale(double std_value) {
  double inv = 1.0 / std::max(std_value, 1e-12);
  double e = std::round(std::log2(inv));
  e = std::min(10.0, std::max(-10.0, e));
  return std::exp2(e);
}

void check_clip(const MotionClip& clip) {
  SAGA_REQUIRE(clip.frames.size() >= 2, InvalidInput, "clip too short");
  int t = static_cast<int>(clip.frames.size()) - 1;
  SAGA_REQUIRE(clip.contacts.rows() == 4 &&
                   clip.contacts.cols() == static_cast<Eigen::Index>(t) + 1,
               InvalidInput, "clip contact shape");
  SAGA_REQUIRE(clip.traj.rows() == 4 && clip.traj.cols() == static_cast<Eigen::Index>(t) + 2,
               InvalidInput, "clip trajectory shape");
  for (const MatXd& f : clip.frames)
    SAGA_REQUIRE(f.rows() == 3 && f.cols() == kMotionMarkers, InvalidInput, "clip marker shape");
}

}  // namespace

MotionStats compute_motion_stats(const std::vector<const MotionClip*>& clips) {
  SAGA_REQUIRE(!clips.empty(), InvalidInput, "no clips for statistics");
  const int rows = 3 * kMotionMarkers;
  VecXd msum = VecXd::Zero(rows), msq = VecXd::Zero(rows);
  VecXd vsum = VecXd::Zero(3), vsq = VecXd::Zero(3);
  long mcount = 0, vcount = 0;
  for (const MotionClip* clip : clips) {
    check_clip(*clip);
    int t_frames = static_cast<int>(clip->frames.size()) - 1;
    for (int t = 1; t <= t_frames; ++t) {
      RootState s = traj_state(clip->traj, t);
      MatXd local = localize_markers(clip->frames[static_cast<size_t>(t)], s);
      Eigen::Map<const VecXd> flat(local.data(), rows);
      msum += flat;
      msq += flat.cwiseProduct(flat);
      ++mcount;
      Vec3d v = local_root_velocity(s, traj_state(clip->traj, t + 1));
      vsum += v;
      vsq += v.cwiseProduct(v);
      ++vcount;
    }
  }
  MotionStats st;
  st.marker_mean = msum / mcount;
  st.marker_std =
      ((msq / mcount) - st.marker_mean.cwiseProduct(st.marker_mean)).cwiseMax(0.0).cwiseSqrt();
  st.vel_mean = vsum / vcount;
  st.vel_std = ((vsq / vcount) - st.vel_mean.cwiseProduct(st.vel_mean)).cwiseMax(0.0).cwiseSqrt();
  st.marker_scale.resize(rows);
  for (int i = 0; i < rows; ++i) st.marker_scale[i] = pow2_scale(st.marker_std[i]);
  st.vel_scale.resize(3);
  for (int i = 0; i < 3; ++i) st.vel_scale[i] = pow2_scale(st.vel_std[i]);
  return st;
}

// ---------------------------------------------------------------------------
// Motion images
// ---------------------------------------------------------------------------

namespace {

void fill_velocity_channels(VecXd& img, const MatXd& traj, const MotionStats& stats, int width) {
  const Eigen::Index hw = static_cast<Eigen::Index>(kImgRows) * width;
  for (int c = 0; c < width; ++c) {
    Vec3d v = local_root_velocity(traj_state(traj, c + 1), traj_state(traj, c + 2));
    for (int k = 0; k < 3; ++k) {
      double value = v[k] * stats.vel_scale[k];
      for (int h = 0; h < kImgRows; ++h)
        img[(1 + k) * hw + static_cast<Eigen::Index>(h) * width + c] = value;
    }
  }
}

void fill_marker_column(VecXd& img, const MatXd& local, const MotionStats& stats, int width,
                        int c) {
  for (int m = 0; m < kMotionMarkers; ++m)
    for (int d = 0; d < 3; ++d) {
      int row = 4 + 3 * m + d;
      img[static_cast<Eigen::Index>(row) * width + c] =
          local(d, m) * stats.marker_scale[3 * m + d];
    }
}

}  // namespace

VecXd build_motion_image(const std::vector<MatXd>& frames, const MatXd& contacts,
                         const MatXd& traj, const MotionStats& stats) {
  SAGA_REQUIRE(stats.ready(), NotReady, "normalization statistics missing");
  SAGA_REQUIRE(frames.size() >= 2, InvalidInput, "need at least two frames");
  const int width = static_cast<int>(frames.size()) - 1;
  SAGA_REQUIRE(contacts.rows() == 4 && contacts.cols() == width + 1, InvalidInput,
               "contact shape mismatch");
  SAGA_REQUIRE(traj.rows() == 4 && traj.cols() == width + 2, InvalidInput,
               "trajectory shape mismatch");
  VecXd img = VecXd::Zero(static_cast<Eigen::Index>(kImgChannels) * kImgRows * width);
  for (int c = 0; c < width; ++c) {
    int t = c + 1;
    const MatXd& f = frames[static_cast<size_t>(t)];
    SAGA_REQUIRE(f.rows() == 3 && f.cols() == kMotionMarkers, InvalidInput,
                 "marker frame shape mismatch");
    for (int h = 0; h < 4; ++h) img[static_cast<Eigen::Index>(h) * width + c] = contacts(h, t);
    MatXd local = localize_markers(f, traj_state(traj, t));
    fill_marker_column(img, local, stats, width, c);
  }
  fill_velocity_channels(img, traj, stats, width);
  return img;
}

VecXd condition_mask(const VecXd& img) {
  const Eigen::Index n = img.size();
  SAGA_REQUIRE(n % (static_cast<Eigen::Index>(kImgChannels) * kImgRows) == 0, InvalidInput,
               "image size mismatch");
  const int width = static_cast<int>(n / (static_cast<Eigen::Index>(kImgChannels) * kImgRows));
  VecXd out = img;
  for (int h = 0; h < kImgRows; ++h)
    for (int c = 1; c + 1 < width; ++c) out[static_cast<Eigen::Index>(h) * width + c] = 0.0;
  return out;
}

VecXd condition_from_endpoints(const MatXd& start_markers, const MatXd& end_markers,
                               const VecXd& start_contacts, const VecXd& end_contacts,
                               const MatXd& traj, const MotionStats& stats) {
  SAGA_REQUIRE(stats.ready(), NotReady, "normalization statistics missing");
  SAGA_REQUIRE(start_markers.rows() == 3 && start_markers.cols() == kMotionMarkers &&
                   end_markers.rows() == 3 && end_markers.cols() == kMotionMarkers,
               InvalidInput, "endpoint marker shape mismatch");
  SAGA_REQUIRE(start_contacts.size() == 4 && end_contacts.size() == 4, InvalidInput,
               "endpoint contact shape mismatch");
  const int width = static_cast<int>(checked_cols(traj)) - 2;
  VecXd img = VecXd::Zero(static_cast<Eigen::Index>(kImgChannels) * kImgRows * width);
  for (int h = 0; h < 4; ++h) {
    img[static_cast<Eigen::Index>(h) * width + 0] = start_contacts[h];
    img[static_cast<Eigen::Index>(h) * width + width - 1] = end_contacts[h];
  }
  // The first image column belongs to frame 1, which is unknown before
  // decoding; the start markers localized at state 1 stand in for it.
  fill_marker_column(img, localize_markers(start_markers, traj_state(traj, 1)), stats, width, 0);
  fill_marker_column(img, localize_markers(end_markers, traj_state(traj, width)), stats, width,
                     width - 1);
  fill_velocity_channels(img, traj, stats, width);
  return img;
}

MatXd image_channel0(const VecXd& img) {
  const Eigen::Index n = img.size();
  SAGA_REQUIRE(n % (static_cast<Eigen::Index>(kImgChannels) * kImgRows) == 0, InvalidInput,
               "image size mismatch");
  const int width = static_cast<int>(n / (static_cast<Eigen::Index>(kImgChannels) * kImgRows));
  MatXd out(kImgRows, width);
  for (int h = 0; h < kImgRows; ++h)
    for (int c = 0; c < width; ++c) out(h, c) = img[static_cast<Eigen::Index>(h) * width + c];
  return out;
}

MatXd channel0_local_markers(const MatXd& ch0, const MotionStats& stats, int col) {
  SAGA_REQUIRE(stats.ready(), NotReady, "normalization statistics missing");
  SAGA_REQUIRE(ch0.rows() == kImgRows && col >= 0 && col < ch0.cols(), InvalidInput,
               "channel block shape mismatch");
  MatXd local(3, kMotionMarkers);
  for (int m = 0; m < kMotionMarkers; ++m)
    for (int d = 0; d < 3; ++d)
      local(d, m) = ch0(4 + 3 * m + d, col) / stats.marker_scale[3 * m + d];
  return local;
}

void decode_channel0(const MatXd& ch0, const MatXd& traj, const MotionStats& stats, bool logits,
                     std::vector<MatXd>* frames, MatXd* contacts) {
  SAGA_REQUIRE(ch0.rows() == kImgRows, InvalidInput, "channel block shape mismatch");
  const int width = static_cast<int>(ch0.cols());
  SAGA_REQUIRE(checked_cols(traj) == width + 2, InvalidInput, "trajectory length mismatch");
  if (frames) {
    frames->clear();
    frames->reserve(static_cast<size_t>(width));
    for (int c = 0; c < width; ++c)
      frames->push_back(
          globalize_markers(channel0_local_markers(ch0, stats, c), traj_state(traj, c + 1)));
  }
  if (contacts) {
    contacts->resize(4, width);
    for (int h = 0; h < 4; ++h)
      for (int c = 0; c < width; ++c)
        (*contacts)(h, c) = logits ? 1.0 / (1.0 + std::exp(-ch0(h, c))) : ch0(h, c);
  }
}

// ---------------------------------------------------------------------------
// Trajectory CVAE
// ---------------------------------------------------------------------------

template <class T>
void TrajFillT<T>::init(int t_frames, Rng& rng) {
  SAGA_REQUIRE(t_frames >= 1, InvalidInput, "trajectory CVAE needs at least one step");
  t_ = t_frames;
  store_ = nn::ParamStore<T>();
  const int s = state_dim();
  const int d = 2 * s;
  enc1_.build(store_, "enc1", d, d, rng);
  enc2_.build(store_, "enc2", d, d, rng);
  mu_.build(store_, "mu", d, kLatent, rng, 1.0);
  lv_.build(store_, "logvar", d, kLatent, rng, 1.0);
  dec_in_.build(store_, "dec_in", kLatent + s, d, rng);
  dec_res1_.build(store_, "dec_res1", d, d, rng);
  dec_mid_.build(store_, "dec_mid", d, s, rng);
  dec_res2_.build(store_, "dec_res2", s, s, rng);
}

template <class T>
ad::Var TrajFillT<T>::decode_delta(ad::Graph<T>& g, ad::Var z, ad::Var rough) const {
  ad::Var h = dec_in_.fwd(g, g.rowcat({z, rough}));
  h = dec_res1_.fwd(g, h);
  h = dec_mid_.fwd(g, h);
  return dec_res2_.fwd(g, h);
}

template <class T>
ad::Var TrajFillT<T>::loss_batch(ad::Graph<T>& g, const MatX<T>& gt, const MatX<T>& rough,
                                 Rng& noise, TrajLossParts* parts) const {
  const int s = state_dim();
  SAGA_REQUIRE(gt.rows() == s && rough.rows() == s && gt.cols() == rough.cols() && gt.cols() > 0,
               InvalidInput, "trajectory batch shape mismatch");
  const Eigen::Index b = gt.cols();

  ad::Var xg = g.input_view(&gt);
  ad::Var xr = g.input_view(&rough);
  ad::Var h = enc2_.fwd(g, enc1_.fwd(g, g.rowcat({g.sub(xg, xr), xr})));
  ad::Var mu = mu_.fwd(g, h);
  ad::Var lv = lv_.fwd(g, h);

  MatX<T> eps(kLatent, b);
  noise.fill_normal(eps, 1.0);
  ad::Var z = g.add(mu, g.mul(g.input(std::move(eps)), g.exp_(g.scale(lv, T(0.5)))));
  ad::Var recon = g.add(xr, decode_delta(g, z, xr));

  ad::Var rec = g.scale(g.sum_abs(g.sub(recon, xg)), T(1.0 / static_cast<double>(b)));
  ad::Var dv = g.sub(g.rows(recon, 4, s - 4), g.rows(recon, 0, s - 4));
  ad::Var dg = g.sub(g.rows(xg, 4, s - 4), g.rows(xg, 0, s - 4));
  ad::Var vel = g.scale(g.sum_abs(g.sub(dv, dg)), T(0.05 / static_cast<double>(b)));
  ad::Var kl = g.mean(g.charbonnier(g.gauss_kl(mu, lv)));
  ad::Var total = g.add(g.add(rec, vel), kl);
  if (parts) {
    parts->rec = static_cast<double>(g.val(rec)(0, 0));
    parts->vel = static_cast<double>(g.val(vel)(0, 0));
    parts->kl = static_cast<double>(g.val(kl)(0, 0));
    parts->total = static_cast<double>(g.val(total)(0, 0));
  }
  return total;
}

template <class T>
MatXd TrajFillT<T>::decode(const VecXd& z, const MatXd& rough) const {
  const int s = state_dim();
  SAGA_REQUIRE(z.size() == kLatent, InvalidInput, "latent size mismatch");
  SAGA_REQUIRE(rough.rows() == 4 && rough.cols() == t_ + 2, InvalidInput,
               "trajectory length differs from the trained model");
  VecXd flat = flatten_traj(rough);
  MatX<T> zin = z.cast<T>();
  MatX<T> rin = flat.cast<T>();
  ad::Graph<T> g;
  ad::Var delta = decode_delta(g, g.input_view(&zin), g.input_view(&rin));
  // Deviations are added to the interpolation in double so a zero decoder
  // reproduces it bit-for-bit.
  VecXd out = flat + g.val(delta).template cast<double>();
  MatXd traj = unflatten_traj(out);
  traj.col(0) = rough.col(0);
  traj.col(t_) = rough.col(t_);
  for (int t = 0; t <= t_ + 1; ++t) renorm_heading(traj(2, t), traj(3, t));
  return traj;
}

template <class T>
void TrajFillT<T>::posterior(const MatXd& gt, const MatXd& rough, VecXd* mu_out,
                             VecXd* logvar_out) const {
  const int s = state_dim();
  SAGA_REQUIRE(gt.rows() == 4 && gt.cols() == t_ + 2 && rough.rows() == 4 &&
                   rough.cols() == t_ + 2,
               InvalidInput, "trajectory length differs from the trained model");
  MatX<T> xg = flatten_traj(gt).cast<T>();
  MatX<T> xr = flatten_traj(rough).cast<T>();
  ad::Graph<T> g;
  ad::Var h = enc2_.fwd(
      g, enc1_.fwd(g, g.rowcat({g.sub(g.input_view(&xg), g.input_view(&xr)), g.input_view(&xr)})));
  if (mu_out) *mu_out = g.val(mu_.fwd(g, h)).template cast<double>();
  if (logvar_out) *logvar_out = g.val(lv_.fwd(g, h)).template cast<double>();
  (void)s;
}

template <class T>
void TrajFillT<T>::save(const std::string& path, int epoch) const {
  TensorFile tf;
  tf.meta["kind"] = "trajfill";
  tf.meta["format"] = 1;
  tf.meta["t_frames"] = t_;
  tf.meta["latent"] = kLatent;
  tf.meta["epoch"] = epoch;
  store_.save(tf, "p.");
  tf.save(path);
}

template <class T>
TrajFillT<T> TrajFillT<T>::load(const std::string& path, int* epoch) {
  TensorFile tf = TensorFile::load(path);
  SAGA_REQUIRE(tf.meta.value("kind", "") == "trajfill", InvalidInput,
               path + ": not a trajectory model checkpoint");
  TrajFillT model;
  Rng rng(0);
  model.init(tf.meta.value("t_frames", 60), rng);
  model.store_.load(tf, "p.");
  if (epoch) *epoch = tf.meta.value("epoch", 0);
  return model;
}

// ---------------------------------------------------------------------------
// Local motion CVAE
// ---------------------------------------------------------------------------

template <class T>
void LocalMotionFillT<T>::init(Rng& rng, int width) {
  SAGA_REQUIRE(width >= 16, InvalidInput, "image width too small for the conv ladder");
  w_ = width;
  store_ = nn::ParamStore<T>();
  ladder_.clear();
  ladder_.push_back(in_shape());
  const int widths[4] = {32, 64, 128, 256};
  nn::SepConvDown<T>* enc[4] = {&e1_, &e2_, &e3_, &e4_};
  int cin = kImgChannels;
  for (int i = 0; i < 4; ++i) {
    enc[i]->build(store_, "enc" + std::to_string(i + 1), cin, widths[i], rng);
    ad::ImgShape prev = ladder_.back();
    ladder_.push_back({widths[i], ad::conv_out_size(prev.h, 3, 2, 1),
                       ad::conv_out_size(prev.w, 3, 2, 1)});
    cin = widths[i];
  }
  SAGA_REQUIRE(ladder_.back().h % 2 == 0 && ladder_.back().w % 2 == 0, InvalidInput,
               "image width incompatible with the pooling stage");
  pooled_ = {ladder_.back().c, ladder_.back().h / 2, ladder_.back().w / 2};
  const int flat = static_cast<int>(pooled_.flat());
  mu_.build(store_, "mu", flat, kLatent, rng, 1.0);
  lv_.build(store_, "logvar", flat, kLatent, rng, 1.0);
  nn::SepConvDown<T>* cnd[4] = {&c1_, &c2_, &c3_, &c4_};
  cin = kImgChannels;
  for (int i = 0; i < 4; ++i) {
    cnd[i]->build(store_, "cond" + std::to_string(i + 1), cin, widths[i], rng);
    cin = widths[i];
  }
  cond_fc_.build(store_, "cond_fc", flat, kCondDim, rng);
  dec_fc_.build(store_, "dec_fc", kLatent + kCondDim, flat, rng);
  u1_.build(store_, "dec1", 256, 128, rng);
  u2_.build(store_, "dec2", 128, 64, rng);
  u3_.build(store_, "dec3", 64, 32, rng);
  u4_.build(store_, "dec4", 32, 16, rng);
  out_.build(store_, "out", 16, 1, rng, 1.0);
}

template <class T>
ad::Var LocalMotionFillT<T>::encode_ladder(ad::Graph<T>& g, ad::Var x, bool condition) const {
  const nn::SepConvDown<T>* blocks[4] = {condition ? &c1_ : &e1_, condition ? &c2_ : &e2_,
                                         condition ? &c3_ : &e3_, condition ? &c4_ : &e4_};
  ad::Var h = x;
  for (int i = 0; i < 4; ++i) {
    ad::ImgShape out;
    h = blocks[i]->fwd(g, h, ladder_[static_cast<size_t>(i)], &out);
  }
  return ad::avgpool2(g, h, ladder_[4], nullptr);
}

template <class T>
ad::Var LocalMotionFillT<T>::decode_graph(ad::Graph<T>& g, ad::Var z, ad::Var cond_feat) const {
  ad::Var h = g.relu(dec_fc_.fwd(g, g.rowcat({z, cond_feat})));
  ad::ImgShape s;
  h = ad::upsample2(g, h, pooled_, &s);
  h = u1_.fwd(g, h, s, ladder_[3].h, ladder_[3].w, &s);
  h = u2_.fwd(g, h, s, ladder_[2].h, ladder_[2].w, &s);
  h = u3_.fwd(g, h, s, ladder_[1].h, ladder_[1].w, &s);
  h = u4_.fwd(g, h, s, ladder_[0].h, ladder_[0].w, &s);
  return ad::pointwise_conv(g, nn::leaf(g, out_.W), nn::leaf(g, out_.b), h,
                            ad::ImgShape{16, kImgRows, w_});
}

template <class T>
ad::Var LocalMotionFillT<T>::loss_batch(ad::Graph<T>& g, const MatX<T>& imgs,
                                        const MatX<T>& conds, Rng& noise,
                                        MotionLossParts* parts) const {
  const Eigen::Index flat = image_size();
  SAGA_REQUIRE(imgs.rows() == flat && conds.rows() == flat && imgs.cols() == conds.cols() &&
                   imgs.cols() > 0,
               InvalidInput, "image batch shape mismatch");
  const Eigen::Index b = imgs.cols();
  const Eigen::Index hw = static_cast<Eigen::Index>(kImgRows) * w_;
  const Eigen::Index contact_rows = 4 * static_cast<Eigen::Index>(w_);
  const Eigen::Index marker_rows = hw - contact_rows;

  ad::Var enc = encode_ladder(g, g.input_view(&imgs), false);
  ad::Var mu = mu_.fwd(g, enc);
  ad::Var lv = lv_.fwd(g, enc);
  MatX<T> eps(kLatent, b);
  noise.fill_normal(eps, 1.0);
  ad::Var z = g.add(mu, g.mul(g.input(std::move(eps)), g.exp_(g.scale(lv, T(0.5)))));
  ad::Var cond = g.relu(cond_fc_.fwd(g, encode_ladder(g, g.input_view(&conds), true)));
  ad::Var pred = decode_graph(g, z, cond);

  MatX<T> gt_contacts = imgs.topRows(contact_rows);
  ad::Var bce = g.bce_logits(g.rows(pred, 0, contact_rows), gt_contacts, T(1));

  MatX<T> gt_markers = imgs.middleRows(contact_rows, marker_rows);
  ad::Var pred_m = g.rows(pred, contact_rows, marker_rows);
  ad::Var rec = g.scale(g.sum_abs(g.sub(pred_m, g.input_view(&gt_markers))),
                        T(1.0 / static_cast<double>(b)));

  const int tracks = 3 * kMotionMarkers;
  MatX<T> gt_vel(static_cast<Eigen::Index>(tracks) * (w_ - 1), b);
  for (Eigen::Index col = 0; col < b; ++col)
    for (int r = 0; r < tracks; ++r)
      for (int c = 0; c + 1 < w_; ++c)
        gt_vel(static_cast<Eigen::Index>(r) * (w_ - 1) + c, col) =
            gt_markers(static_cast<Eigen::Index>(r) * w_ + c + 1, col) -
            gt_markers(static_cast<Eigen::Index>(r) * w_ + c, col);
  ad::Var vel = g.scale(g.sum_abs(g.sub(ad::width_diff(g, pred_m, tracks, w_),
                                        g.input(std::move(gt_vel)))),
                        T(0.5 / static_cast<double>(b)));

  ad::Var kl = g.mean(g.charbonnier(g.gauss_kl(mu, lv)));
  ad::Var total = g.add(g.add(g.add(bce, rec), vel), kl);
  if (parts) {
    parts->bce = static_cast<double>(g.val(bce)(0, 0));
    parts->rec = static_cast<double>(g.val(rec)(0, 0));
    parts->vel = static_cast<double>(g.val(vel)(0, 0));
    parts->kl = static_cast<double>(g.val(kl)(0, 0));
    parts->total = static_cast<double>(g.val(total)(0, 0));
  }
  return total;
}

template <class T>
MatXd LocalMotionFillT<T>::decode(const VecXd& z, const VecXd& cond) const {
  SAGA_REQUIRE(z.size() == kLatent, InvalidInput, "latent size mismatch");
  SAGA_REQUIRE(cond.size() == image_size(), InvalidInput, "condition image size mismatch");
  MatX<T> zin = z.cast<T>();
  MatX<T> cin = cond.cast<T>();
  ad::Graph<T> g;
  ad::Var cf = g.relu(cond_fc_.fwd(g, encode_ladder(g, g.input_view(&cin), true)));
  ad::Var pred = decode_graph(g, g.input_view(&zin), cf);
  const MatX<T>& pv = g.val(pred);
  MatXd out(kImgRows, w_);
  for (int h = 0; h < kImgRows; ++h)
    for (int c = 0; c < w_; ++c)
      out(h, c) = static_cast<double>(pv(static_cast<Eigen::Index>(h) * w_ + c, 0));
  return out;
}

template <class T>
void LocalMotionFillT<T>::posterior(const VecXd& img, VecXd* mu_out, VecXd* logvar_out) const {
  SAGA_REQUIRE(img.size() == image_size(), InvalidInput, "image size mismatch");
  MatX<T> xin = img.cast<T>();
  ad::Graph<T> g;
  ad::Var enc = encode_ladder(g, g.input_view(&xin), false);
  if (mu_out) *mu_out = g.val(mu_.fwd(g, enc)).template cast<double>();
  if (logvar_out) *logvar_out = g.val(lv_.fwd(g, enc)).template cast<double>();
}

// ---------------------------------------------------------------------------
// Marker-velocity autoencoder
// ---------------------------------------------------------------------------

template <class T>
void MarkerVelAeT<T>::init(Rng& rng) {
  store_ = nn::ParamStore<T>();
  e1_.build(store_, "enc1", kIn, 128, rng);
  e2_.build(store_, "enc2", 128, kLatent, rng, 1.0);
  d1_.build(store_, "dec1", kLatent, 128, rng);
  d2_.build(store_, "dec2", 128, kIn, rng, 1.0);
}

template <class T>
ad::Var MarkerVelAeT<T>::encode(ad::Graph<T>& g, ad::Var v) const {
  return e2_.fwd(g, g.lrelu(e1_.fwd(g, v), T(0.1)));
}

template <class T>
ad::Var MarkerVelAeT<T>::decode(ad::Graph<T>& g, ad::Var s) const {
  return d2_.fwd(g, g.lrelu(d1_.fwd(g, s), T(0.1)));
}

template <class T>
ad::Var MarkerVelAeT<T>::recon_loss(ad::Graph<T>& g, const MatX<T>& vels) const {
  SAGA_REQUIRE(vels.rows() == kIn && vels.cols() > 0, InvalidInput, "velocity batch shape");
  ad::Var v = g.input_view(&vels);
  ad::Var diff = g.sub(decode(g, encode(g, v)), v);
  return g.scale(g.sum_sq(diff), T(1.0 / static_cast<double>(vels.size())));
}

template <class T>
MatXd MarkerVelAeT<T>::reconstruct(const MatXd& vels) const {
  SAGA_REQUIRE(vels.rows() == kIn, InvalidInput, "velocity shape");
  MatX<T> vin = vels.cast<T>();
  ad::Graph<T> g;
  return g.val(decode(g, encode(g, g.input_view(&vin)))).template cast<double>();
}

// ---------------------------------------------------------------------------
// Checkpoint bundle
// ---------------------------------------------------------------------------

namespace {

void put_stats(TensorFile& tf, const MotionStats& st) {
  tf.set_vec("stats.marker_scale", st.marker_scale);
  tf.set_vec("stats.vel_scale", st.vel_scale);
  tf.set_vec("stats.marker_mean", st.marker_mean);
  tf.set_vec("stats.marker_std", st.marker_std);
  tf.set_vec("stats.vel_mean", st.vel_mean);
  tf.set_vec("stats.vel_std", st.vel_std);
}

MotionStats take_stats(const TensorFile& tf) {
  MotionStats st;
  st.marker_scale = tf.get("stats.marker_scale");
  st.vel_scale = tf.get("stats.vel_scale");
  st.marker_mean = tf.get("stats.marker_mean");
  st.marker_std = tf.get("stats.marker_std");
  st.vel_mean = tf.get("stats.vel_mean");
  st.vel_std = tf.get("stats.vel_std");
  return st;
}

}  // namespace

void MotionFillIo::save(const std::string& path, const LocalMotionFill& model,
                        const MarkerVelAe& ae, const MotionStats& stats, int epoch) {
  TensorFile tf;
  tf.meta["kind"] = "motionfill";
  tf.meta["format"] = 1;
  tf.meta["width"] = model.width();
  tf.meta["latent"] = LocalMotionFill::kLatent;
  tf.meta["cond_dim"] = LocalMotionFill::kCondDim;
  tf.meta["channels"] = {32, 64, 128, 256};
  tf.meta["epoch"] = epoch;
  tf.meta["ae_threshold"] = ae.recon_threshold;
  put_stats(tf, stats);
  model.params().save(tf, "lmf.");
  ae.params().save(tf, "ae.");
  tf.save(path);
}

template <class T>
void MotionFillIo::load(const std::string& path, LocalMotionFillT<T>* model, MarkerVelAeT<T>* ae,
                        MotionStats* stats, int* epoch) {
  TensorFile tf = TensorFile::load(path);
  SAGA_REQUIRE(tf.meta.value("kind", "") == "motionfill", InvalidInput,
               path + ": not a motion model checkpoint");
  Rng rng(0);
  if (model) {
    model->init(rng, tf.meta.value("width", kImgCols));
    model->params().load(tf, "lmf.");
  }
  if (ae) {
    ae->init(rng);
    ae->params().load(tf, "ae.");
    ae->recon_threshold = tf.meta.value("ae_threshold", 0.0);
  }
  if (stats) *stats = take_stats(tf);
  if (epoch) *epoch = tf.meta.value("epoch", 0);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

void shuffle_indices(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }
}

MatXd rough_of_clip(const MotionClip& clip) {
  int t = static_cast<int>(clip.frames.size()) - 1;
  return interp_traj(traj_state(clip.traj, 0), traj_state(clip.traj, t), t).states;
}

}  // namespace

TrajTrainReport train_trajfill(TrajFill& model, const MotionDataset& data, uint64_t seed,
                               const std::string& log_path, const MotionFillConfig& cfg) {
  SAGA_REQUIRE(data.clips.size() >= 20, InvalidInput, "motion dataset too small to train on");
  const int t = static_cast<int>(data.clips[0].frames.size()) - 1;
  for (const MotionClip& c : data.clips) {
    check_clip(c);
    SAGA_REQUIRE(static_cast<int>(c.frames.size()) - 1 == t, InvalidInput,
                 "clips must share one length");
  }
  Rng root(seed);
  Rng init_rng = root.fork(1);
  Rng noise_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  model.init(t, init_rng);
  const int s = model.state_dim();

  std::vector<const MotionClip*> train, val;
  split_train_val(data.clips, train, val);
  MatXf gt_all(s, static_cast<Eigen::Index>(train.size()));
  MatXf rough_all(s, static_cast<Eigen::Index>(train.size()));
  for (size_t i = 0; i < train.size(); ++i) {
    gt_all.col(static_cast<Eigen::Index>(i)) = flatten_traj(train[i]->traj).cast<float>();
    rough_all.col(static_cast<Eigen::Index>(i)) =
        flatten_traj(rough_of_clip(*train[i])).cast<float>();
  }
  std::vector<MatXd> val_rough;
  val_rough.reserve(val.size());
  for (const MotionClip* c : val) val_rough.push_back(rough_of_clip(*c));

  nn::Adam<float> opt(model.params().all());
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    SAGA_REQUIRE(log.good(), InvalidInput, "cannot open training log " + log_path);
    log << "epoch,train_loss,rec,vel,kl,val_l1\n";
  }

  TrajTrainReport report;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t(0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    shuffle_indices(order, shuffle_rng);
    TrajLossParts acc;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      MatXf gt(s, static_cast<Eigen::Index>(stop - start));
      MatXf rough(s, static_cast<Eigen::Index>(stop - start));
      for (size_t k = start; k < stop; ++k) {
        gt.col(static_cast<Eigen::Index>(k - start)) =
            gt_all.col(static_cast<Eigen::Index>(order[k]));
        rough.col(static_cast<Eigen::Index>(k - start)) =
            rough_all.col(static_cast<Eigen::Index>(order[k]));
      }
      model.params().zero_grad();
      ad::Graph<float> g;
      TrajLossParts parts;
      ad::Var total = model.loss_batch(g, gt, rough, noise_rng, &parts);
      g.backward(total);
      opt.step(cfg.lr);
      acc.rec += parts.rec;
      acc.vel += parts.vel;
      acc.kl += parts.kl;
      acc.total += parts.total;
      ++n_batches;
    }
    double inv = 1.0 / std::max(1, n_batches);
    double val_l1 = 0;
    long val_n = 0;
    for (size_t i = 0; i < val.size(); ++i) {
      VecXd mu;
      model.posterior(val[i]->traj, val_rough[i], &mu, nullptr);
      MatXd recon = model.decode(mu, val_rough[i]);
      val_l1 += (recon - val[i]->traj).cwiseAbs().sum();
      val_n += recon.size();
    }
    val_l1 /= std::max<long>(1, val_n);
    auto t1 = std::chrono::steady_clock::now();
    std::fprintf(stderr, "[traj] epoch %2d/%d loss %.4f rec %.4f vel %.4f kl %.3f | val L1 %.5f (%.1fs)\n",
                 epoch, cfg.epochs, acc.total * inv, acc.rec * inv, acc.vel * inv, acc.kl * inv,
                 val_l1, std::chrono::duration<double>(t1 - t0).count());
    if (log.is_open())
      log << epoch << ',' << acc.total * inv << ',' << acc.rec * inv << ',' << acc.vel * inv << ','
          << acc.kl * inv << ',' << val_l1 << '\n';
    report.epochs = epoch;
    report.train_loss = acc.total * inv;
    report.val_l1 = val_l1;
  }
  return report;
}

LocalMotionTrainReport train_localmotion(LocalMotionFill& model, MarkerVelAe& ae,
                                         MotionStats& stats_out, const MotionDataset& data,
                                         uint64_t seed, const std::string& log_path,
                                         const MotionFillConfig& cfg) {
  SAGA_REQUIRE(data.clips.size() >= 20, InvalidInput, "motion dataset too small to train on");
  const int width = static_cast<int>(data.clips[0].frames.size()) - 1;
  for (const MotionClip& c : data.clips) {
    check_clip(c);
    SAGA_REQUIRE(static_cast<int>(c.frames.size()) - 1 == width, InvalidInput,
                 "clips must share one length");
  }
  Rng root(seed);
  Rng init_rng = root.fork(1);
  Rng noise_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  model.init(init_rng, width);
  ae.init(init_rng);

  std::vector<const MotionClip*> train, val;
  split_train_val(data.clips, train, val);
  MotionStats stats = compute_motion_stats(train);
  stats_out = stats;

  const Eigen::Index flat = model.image_size();
  MatXf imgs_all(flat, static_cast<Eigen::Index>(data.clips.size()));
  for (size_t i = 0; i < data.clips.size(); ++i) {
    const MotionClip& c = data.clips[i];
    imgs_all.col(static_cast<Eigen::Index>(i)) =
        build_motion_image(c.frames, c.contacts, c.traj, stats).cast<float>();
  }
  std::vector<size_t> train_ids, val_ids;
  for (size_t i = 0; i < data.clips.size(); ++i)
    (i % 10 == 9 ? val_ids : train_ids).push_back(i);

  nn::Adam<float> opt(model.params().all());
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    SAGA_REQUIRE(log.good(), InvalidInput, "cannot open training log " + log_path);
    log << "phase,epoch,train_loss,bce,rec,vel,kl,val_a,val_b\n";
  }

  const Eigen::Index hw = static_cast<Eigen::Index>(kImgRows) * width;
  auto mask_cols = [&](MatXf& m) {
    for (Eigen::Index col = 0; col < m.cols(); ++col)
      for (int h = 0; h < kImgRows; ++h)
        for (int c = 1; c + 1 < width; ++c)
          m(static_cast<Eigen::Index>(h) * width + c, col) = 0.0f;
    (void)hw;
  };

  LocalMotionTrainReport report;
  std::vector<size_t> order(train_ids.size());
  std::iota(order.begin(), order.end(), size_t(0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    shuffle_indices(order, shuffle_rng);
    MotionLossParts acc;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      MatXf imgs(flat, static_cast<Eigen::Index>(stop - start));
      for (size_t k = start; k < stop; ++k)
        imgs.col(static_cast<Eigen::Index>(k - start)) =
            imgs_all.col(static_cast<Eigen::Index>(train_ids[order[k]]));
      MatXf conds = imgs;
      mask_cols(conds);
      model.params().zero_grad();
      ad::Graph<float> g;
      MotionLossParts parts;
      ad::Var total = model.loss_batch(g, imgs, conds, noise_rng, &parts);
      g.backward(total);
      opt.step(cfg.lr);
      acc.bce += parts.bce;
      acc.rec += parts.rec;
      acc.vel += parts.vel;
      acc.kl += parts.kl;
      acc.total += parts.total;
      ++n_batches;
    }
    double inv = 1.0 / std::max(1, n_batches);

    // Validation: posterior mean decode against each clip's own condition.
    double val_l1 = 0, val_bce = 0;
    long l1_n = 0, bce_n = 0;
    for (size_t vi : val_ids) {
      VecXd img = imgs_all.col(static_cast<Eigen::Index>(vi)).cast<double>();
      VecXd cond = condition_mask(img);
      VecXd mu;
      model.posterior(img, &mu, nullptr);
      MatXd pred = model.decode(mu, cond);
      MatXd gt = image_channel0(img);
      for (int h = 0; h < 4; ++h)
        for (int c = 0; c < width; ++c) {
          val_bce += bce_from_logit(pred(h, c), gt(h, c));
          ++bce_n;
        }
      for (int r = 0; r < 3 * kMotionMarkers; ++r)
        for (int c = 0; c < width; ++c) {
          val_l1 += std::abs(pred(4 + r, c) - gt(4 + r, c)) / stats.marker_scale[r];
          ++l1_n;
        }
    }
    val_l1 /= std::max<long>(1, l1_n);
    val_bce /= std::max<long>(1, bce_n);
    auto t1 = std::chrono::steady_clock::now();
    std::fprintf(stderr,
                 "[motion] epoch %2d/%d loss %.4f bce %.4f rec %.2f vel %.2f kl %.3f | "
                 "val L1 %.4fm bce %.4f (%.1fs)\n",
                 epoch, cfg.epochs, acc.total * inv, acc.bce * inv, acc.rec * inv, acc.vel * inv,
                 acc.kl * inv, val_l1, val_bce,
                 std::chrono::duration<double>(t1 - t0).count());
    if (log.is_open())
      log << "motion," << epoch << ',' << acc.total * inv << ',' << acc.bce * inv << ','
          << acc.rec * inv << ',' << acc.vel * inv << ',' << acc.kl * inv << ',' << val_l1 << ','
          << val_bce << '\n';
    report.epochs = epoch;
    report.train_loss = acc.total * inv;
    report.val_marker_l1 = val_l1;
    report.val_bce = val_bce;
  }

  // Marker-velocity autoencoder on per-frame global marker velocities.
  const int vel_dim = MarkerVelAe::kIn;
  auto clip_velocities = [&](const std::vector<size_t>& ids) {
    MatXf out(vel_dim, static_cast<Eigen::Index>(ids.size()) * width);
    Eigen::Index col = 0;
    for (size_t i : ids) {
      const MotionClip& c = data.clips[i];
      for (int t = 0; t < width; ++t) {
        MatXd d = c.frames[static_cast<size_t>(t) + 1] - c.frames[static_cast<size_t>(t)];
        out.col(col++) = Eigen::Map<const VecXd>(d.data(), vel_dim).cast<float>();
      }
    }
    return out;
  };
  MatXf vel_train = clip_velocities(train_ids);
  MatXf vel_val = clip_velocities(val_ids);
  nn::Adam<float> ae_opt(ae.params().all());
  const int ae_batch = 256;
  std::vector<size_t> vorder(static_cast<size_t>(vel_train.cols()));
  std::iota(vorder.begin(), vorder.end(), size_t(0));
  double ae_train = 0, ae_val = 0;
  for (int epoch = 1; epoch <= cfg.ae_epochs; ++epoch) {
    shuffle_indices(vorder, shuffle_rng);
    double acc = 0;
    int n_batches = 0;
    for (size_t start = 0; start < vorder.size(); start += static_cast<size_t>(ae_batch)) {
      size_t stop = std::min(vorder.size(), start + static_cast<size_t>(ae_batch));
      MatXf batch(vel_dim, static_cast<Eigen::Index>(stop - start));
      for (size_t k = start; k < stop; ++k)
        batch.col(static_cast<Eigen::Index>(k - start)) =
            vel_train.col(static_cast<Eigen::Index>(vorder[k]));
      ae.params().zero_grad();
      ad::Graph<float> g;
      ad::Var loss = ae.recon_loss(g, batch);
      g.backward(loss);
      ae_opt.step(cfg.lr);
      acc += static_cast<double>(g.val(loss)(0, 0));
      ++n_batches;
    }
    ae_train = acc / std::max(1, n_batches);
    {
      ad::Graph<float> g;
      ae_val = static_cast<double>(g.val(ae.recon_loss(g, vel_val))(0, 0));
    }
    if (epoch == cfg.ae_epochs || epoch % 10 == 0)
      std::fprintf(stderr, "[velae] epoch %2d/%d mse %.3e val %.3e\n", epoch, cfg.ae_epochs,
                   ae_train, ae_val);
    if (log.is_open())
      log << "velae," << epoch << ',' << ae_train << ",0,0,0,0," << ae_val << ",0\n";
  }
  ae.recon_threshold = std::max(2.0 * ae_val, 1e-8);
  report.ae_val_mse = ae_val;
  return report;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

MatXd sample_trajectory(const TrajFill& tf, const RootState& g0, const RootState& gT, Rng& rng,
                        bool* antipodal) {
  Trajectory rough = interp_traj(g0, gT, tf.t_frames());
  if (antipodal) *antipodal = rough.antipodal;
  MatXd z(TrajFill::kLatent, 1);
  rng.fill_normal(z, 1.0);
  return tf.decode(VecXd(z.col(0)), rough.states);
}

MotionSample sample_motion(const TrajFill& tf, const LocalMotionFill& lmf,
                           const MotionStats& stats, const MatXd& start_markers,
                           const MatXd& end_markers, const VecXd& start_contacts,
                           const VecXd& end_contacts, const RootState& g0, const RootState& gT,
                           Rng& rng) {
  SAGA_REQUIRE(tf.t_frames() == lmf.width(), InvalidInput,
               "trajectory and motion models disagree on clip length");
  const int width = lmf.width();
  MotionSample out;
  out.traj = sample_trajectory(tf, g0, gT, rng, &out.antipodal);

  VecXd cond = condition_from_endpoints(start_markers, end_markers, start_contacts, end_contacts,
                                        out.traj, stats);
  MatXd z(LocalMotionFill::kLatent, 1);
  rng.fill_normal(z, 1.0);
  MatXd ch0 = lmf.decode(VecXd(z.col(0)), cond);

  std::vector<MatXd> mid;
  MatXd mid_contacts;
  decode_channel0(ch0, out.traj, stats, /*logits=*/true, &mid, &mid_contacts);

  out.frames.clear();
  out.frames.reserve(static_cast<size_t>(width) + 1);
  out.frames.push_back(start_markers);
  for (int c = 0; c < width; ++c) out.frames.push_back(mid[static_cast<size_t>(c)]);
  out.frames[static_cast<size_t>(width)] = end_markers;

  out.contacts.resize(4, width + 1);
  out.contacts.col(0) = start_contacts;
  for (int c = 0; c + 1 < width; ++c) out.contacts.col(c + 1) = mid_contacts.col(c);
  out.contacts.col(width) = end_contacts;
  return out;
}

template class TrajFillT<float>;
template class TrajFillT<double>;
template class LocalMotionFillT<float>;
template class LocalMotionFillT<double>;
template class MarkerVelAeT<float>;
template class MarkerVelAeT<double>;
template void MotionFillIo::load<float>(const std::string&, LocalMotionFillT<float>*,
                                        MarkerVelAeT<float>*, MotionStats*, int*);
template void MotionFillIo::load<double>(const std::string&, LocalMotionFillT<double>*,
                                         MarkerVelAeT<double>*, MotionStats*, int*);

}  // namespace saga
