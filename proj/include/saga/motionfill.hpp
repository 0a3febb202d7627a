#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saga/autodiff.hpp"
#include "saga/body_model.hpp"
#include "saga/conv.hpp"
#include "saga/data.hpp"
#include "saga/nn.hpp"
#include "saga/rng.hpp"

namespace saga {

// ---------------------------------------------------------------------------
// Root states and planar trajectories
// ---------------------------------------------------------------------------

// Planar root state: ground-plane position plus a unit heading (cos g, sin g).
// The body-local frame has x to the right, y forward, origin at the root's
// ground projection: global = R_z(heading) * local + (x, y, 0).
struct RootState {
  double x = 0, y = 0;
  double cg = 1, sg = 0;
};

// Root states for frames 0..T plus one constant-velocity extrapolated state
// (column T+1), stored as a 4 x (T+2) matrix with rows (x, y, cos g, sin g).
struct Trajectory {
  MatXd states;
  bool antipodal = false;  // endpoint headings were opposite; positive rotation chosen
  int t_frames() const { return static_cast<int>(states.cols()) - 2; }
};

// Normalizes a heading in place. Near-unit headings are kept bit-for-bit
// (so the operation is idempotent); near-zero vectors fall back to (1, 0).
void renorm_heading(double& cg, double& sg);

RootState traj_state(const MatXd& traj, int t);
void set_traj_state(MatXd& traj, int t, const RootState& s);

// Signed shortest-arc rotation (radians, in (-pi, pi]) taking a's heading
// onto b's.
double heading_delta(const RootState& a, const RootState& b);

// One-step constant-velocity extrapolation past `last` (heading advanced by
// the same shortest-arc increment as prev -> last).
RootState extrapolate_state(const RootState& prev, const RootState& last);

// Root state of a posed body: pelvis ground projection plus the heading of
// the root rotation's forward (+y) axis.
RootState root_state_of(const ToyBody& body, const BodyParams& p);

// Linear position interpolation with one-step extrapolation (column T+1);
// headings follow the shortest arc and endpoints are reproduced exactly.
// Opposite endpoint headings tie-break toward positive rotation and set the
// antipodal flag.
Trajectory interp_traj(const RootState& g0, const RootState& gT, int T);

// Rigid per-frame localization (and its inverse): local = R_z(g)^T (global -
// root), z unchanged.
MatXd localize_markers(const MatXd& global3xN, const RootState& s);
MatXd globalize_markers(const MatXd& local3xN, const RootState& s);

// Root velocity a -> b expressed in a's frame: (dx_local, dy_local, dheading).
Vec3d local_root_velocity(const RootState& a, const RootState& b);

// ---------------------------------------------------------------------------
// Normalization statistics for motion images
// ---------------------------------------------------------------------------

// Per-row scales applied to image content. The applied scales are powers of
// two with zero offset, so normalize -> denormalize round-trips bit-for-bit;
// the raw mean/std of the training split are stored alongside for reference.
struct MotionStats {
  VecXd marker_scale;  // 237 power-of-two scales (normalized = raw * scale)
  VecXd vel_scale;     // 3 power-of-two scales for root velocity channels
  VecXd marker_mean, marker_std;  // raw per-row statistics (not applied)
  VecXd vel_mean, vel_std;
  bool ready() const { return marker_scale.size() > 0 && vel_scale.size() == 3; }
};

MotionStats compute_motion_stats(const std::vector<const MotionClip*>& clips);

// ---------------------------------------------------------------------------
// Motion images
// ---------------------------------------------------------------------------
//
// A motion clip of T+1 frames becomes a 4-channel image with 4 + 3*79 = 241
// rows and T columns, flattened (channel, row, column) into one vector.
// Column c holds frame c+1: the first frame is pinned by the given start pose
// (outputs clamp it exactly), while the last column is the grasp frame, and
// its velocity entry uses the extrapolated trajectory state. Channel 0 stacks
// the four foot contacts on the normalized local markers; channels 1-3
// broadcast the normalized root velocity components.

inline constexpr int kMotionMarkers = 79;
inline constexpr int kImgChannels = 4;
inline constexpr int kImgRows = 4 + 3 * kMotionMarkers;  // 241
inline constexpr int kImgCols = 60;

// Full image from a clip's frames (T+1 of 3x79 global markers), contacts
// (4 x (T+1)) and trajectory (4 x (T+2)). Throws NotReady without stats.
VecXd build_motion_image(const std::vector<MatXd>& frames, const MatXd& contacts,
                         const MatXd& traj, const MotionStats& stats);

// Condition image: channel 0 kept at the first and last columns only,
// velocity channels unchanged.
VecXd condition_mask(const VecXd& img);

// Condition image built from endpoints alone (inference path): the first
// column approximates frame 1 with the start markers localized at state 1;
// the last column holds the goal markers localized at state T.
VecXd condition_from_endpoints(const MatXd& start_markers, const MatXd& end_markers,
                               const VecXd& start_contacts, const VecXd& end_contacts,
                               const MatXd& traj, const MotionStats& stats);

// Channel 0 of a flattened image as a kImgRows x T matrix.
MatXd image_channel0(const VecXd& img);

// Exact inverse of the marker normalization for one image column: the local
// 3x79 markers of frame col+1, bit-for-bit equal to what the builder saw.
MatXd channel0_local_markers(const MatXd& ch0, const MotionStats& stats, int col);

// Full decode of a channel-0 block: global marker frames 1..T (via the
// trajectory) and foot-contact values (sigmoid applied when `logits`).
void decode_channel0(const MatXd& ch0, const MatXd& traj, const MotionStats& stats, bool logits,
                     std::vector<MatXd>* frames, MatXd* contacts);

// ---------------------------------------------------------------------------
// Differences along the image width (per-row time differences)
// ---------------------------------------------------------------------------

namespace ad {

// Input (R*W) x B where each run of W rows is one track; output (R*(W-1)) x B
// of consecutive differences along the width.
template <class T>
Var width_diff(Graph<T>& g, Var x, int rows, int width) {
  const MatX<T>& xv = g.val(x);
  SAGA_REQUIRE(xv.rows() == static_cast<Eigen::Index>(rows) * width && width >= 2, InvalidInput,
               "width_diff: shape mismatch");
  Eigen::Index B = xv.cols();
  MatX<T> out(static_cast<Eigen::Index>(rows) * (width - 1), B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c + 1 < width; ++c)
        out(static_cast<Eigen::Index>(r) * (width - 1) + c, b) =
            xv(static_cast<Eigen::Index>(r) * width + c + 1, b) -
            xv(static_cast<Eigen::Index>(r) * width + c, b);
  return g.custom({x.i}, std::move(out),
                  [x, rows, width](Graph<T>& g2, typename Graph<T>::Node& self) {
                    const MatX<T>& xv2 = g2.val(x);
                    MatX<T> gx = MatX<T>::Zero(xv2.rows(), xv2.cols());
                    for (Eigen::Index b = 0; b < gx.cols(); ++b)
                      for (int r = 0; r < rows; ++r)
                        for (int c = 0; c + 1 < width; ++c) {
                          T go = self.grad(static_cast<Eigen::Index>(r) * (width - 1) + c, b);
                          gx(static_cast<Eigen::Index>(r) * width + c + 1, b) += go;
                          gx(static_cast<Eigen::Index>(r) * width + c, b) -= go;
                        }
                    g2.accum(x.i, gx);
                  });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Trajectory CVAE
// ---------------------------------------------------------------------------
//
// Encodes the deviation of a ground-truth trajectory from its straight-line
// interpolation (both flattened to 4*(T+2) coordinates) and decodes a
// deviation to add back onto the interpolation. Decoded trajectories clamp
// both endpoints to the given states and renormalize headings.

struct TrajLossParts {
  double rec = 0, vel = 0, kl = 0, total = 0;
};

template <class T>
class TrajFillT {
 public:
  static constexpr int kLatent = 512;

  void init(int t_frames, Rng& rng);
  int t_frames() const { return t_; }
  int state_dim() const { return 4 * (t_ + 2); }

  // Training loss on flattened (state_dim x B) ground-truth/interpolated
  // pairs: reconstruction L1 + 0.05 * velocity L1 (sums per clip, mean over
  // the batch) + robust KL.
  ad::Var loss_batch(ad::Graph<T>& g, const MatX<T>& gt, const MatX<T>& rough, Rng& noise,
                     TrajLossParts* parts) const;

  // Deterministic decode of one latent against an interpolated trajectory
  // (4 x (T+2)): adds the decoded deviation, clamps frames 0 and T to the
  // interpolation's exact endpoints, renormalizes headings.
  MatXd decode(const VecXd& z, const MatXd& rough) const;

  // Posterior parameters for one ground-truth/interpolation pair.
  void posterior(const MatXd& gt, const MatXd& rough, VecXd* mu, VecXd* logvar) const;

  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }

  void save(const std::string& path, int epoch) const;
  static TrajFillT load(const std::string& path, int* epoch = nullptr);

 private:
  ad::Var decode_delta(ad::Graph<T>& g, ad::Var z, ad::Var rough) const;

  int t_ = 0;
  nn::ParamStore<T> store_;
  nn::ResBlock<T> enc1_, enc2_;
  nn::Linear<T> mu_, lv_;
  nn::Linear<T> dec_in_, dec_mid_;
  nn::ResBlock<T> dec_res1_, dec_res2_;
};

using TrajFill = TrajFillT<float>;

// ---------------------------------------------------------------------------
// Local motion CVAE over motion images
// ---------------------------------------------------------------------------
//
// Convolutional encoder/decoder over the 4 x 241 x T image: four
// depthwise-separable downsampling blocks (channels 32, 64, 128, 256) plus a
// 2x2 average pool feed the 128-dim latent heads; a matching condition
// encoder on the masked image feeds a 512-dim feature; the decoder mirrors
// the ladder with nearest-neighbor upsampling and transposed depthwise
// blocks down to a single output channel (contact logits in rows 0..3,
// normalized local markers below).

struct MotionLossParts {
  double bce = 0, rec = 0, vel = 0, kl = 0, total = 0;
};

template <class T>
class LocalMotionFillT {
 public:
  static constexpr int kLatent = 128;
  static constexpr int kCondDim = 512;

  void init(Rng& rng, int width = kImgCols);
  int width() const { return w_; }
  ad::ImgShape in_shape() const { return {kImgChannels, kImgRows, w_}; }
  Eigen::Index image_size() const { return in_shape().flat(); }

  // Training loss on flattened images (full + condition, image_size() x B):
  // contact BCE (element mean) + marker L1 + 0.5 * marker-velocity L1 (sums
  // per clip, mean over the batch) + robust KL.
  ad::Var loss_batch(ad::Graph<T>& g, const MatX<T>& imgs, const MatX<T>& conds, Rng& noise,
                     MotionLossParts* parts) const;

  // Deterministic decode: channel-0 block (kImgRows x width), rows 0..3 raw
  // contact logits, remaining rows normalized local markers.
  MatXd decode(const VecXd& z, const VecXd& cond) const;

  // Posterior parameters from one full image.
  void posterior(const VecXd& img, VecXd* mu, VecXd* logvar) const;

  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }

 private:
  friend struct MotionFillIo;
  ad::Var encode_ladder(ad::Graph<T>& g, ad::Var x, bool condition) const;
  ad::Var decode_graph(ad::Graph<T>& g, ad::Var z, ad::Var cond_feat) const;

  int w_ = 0;
  std::vector<ad::ImgShape> ladder_;  // input, then shape after each down block
  ad::ImgShape pooled_{};
  nn::ParamStore<T> store_;
  nn::SepConvDown<T> e1_, e2_, e3_, e4_;
  nn::Linear<T> mu_, lv_;
  nn::SepConvDown<T> c1_, c2_, c3_, c4_;
  nn::Linear<T> cond_fc_;
  nn::Linear<T> dec_fc_;
  nn::SepConvUp<T> u1_, u2_, u3_, u4_;
  nn::Linear<T> out_;  // 1x1 output conv (weights 1 x 16)
};

using LocalMotionFill = LocalMotionFillT<float>;

// ---------------------------------------------------------------------------
// Marker-velocity autoencoder (compact latent for smoothness objectives)
// ---------------------------------------------------------------------------

template <class T>
class MarkerVelAeT {
 public:
  static constexpr int kIn = 3 * kMotionMarkers;  // 237
  static constexpr int kLatent = 64;

  void init(Rng& rng);
  ad::Var encode(ad::Graph<T>& g, ad::Var v) const;  // kLatent x B
  ad::Var decode(ad::Graph<T>& g, ad::Var s) const;  // kIn x B
  ad::Var recon_loss(ad::Graph<T>& g, const MatX<T>& vels) const;  // per-element MSE
  MatXd reconstruct(const MatXd& vels) const;

  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }

  // Per-element reconstruction MSE the trained model is expected to stay
  // under on its training distribution (stored with the checkpoint).
  double recon_threshold = 0;

 private:
  nn::ParamStore<T> store_;
  nn::Linear<T> e1_, e2_, d1_, d2_;
};

using MarkerVelAe = MarkerVelAeT<float>;

// ---------------------------------------------------------------------------
// Checkpoint bundle for the local-motion stage
// ---------------------------------------------------------------------------

struct MotionFillIo {
  static void save(const std::string& path, const LocalMotionFill& model, const MarkerVelAe& ae,
                   const MotionStats& stats, int epoch);
  // Any output pointer may be null to skip that component.
  template <class T>
  static void load(const std::string& path, LocalMotionFillT<T>* model, MarkerVelAeT<T>* ae,
                   MotionStats* stats, int* epoch = nullptr);
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct MotionFillConfig {
  int epochs = 40;
  int batch = 16;
  double lr = 1e-3;
  int ae_epochs = 40;
};

struct TrajTrainReport {
  int epochs = 0;
  double train_loss = 0;
  double val_l1 = 0;  // mean |error| per state coordinate on validation clips
};

TrajTrainReport train_trajfill(TrajFill& model, const MotionDataset& data, uint64_t seed,
                               const std::string& log_path = "",
                               const MotionFillConfig& cfg = {});

struct LocalMotionTrainReport {
  int epochs = 0;
  double train_loss = 0;
  double val_marker_l1 = 0;  // metres per marker coordinate (denormalized)
  double val_bce = 0;
  double ae_val_mse = 0;
};

// Computes normalization statistics on the training split (returned through
// stats_out), trains the image CVAE, then the marker-velocity autoencoder.
LocalMotionTrainReport train_localmotion(LocalMotionFill& model, MarkerVelAe& ae,
                                         MotionStats& stats_out, const MotionDataset& data,
                                         uint64_t seed, const std::string& log_path = "",
                                         const MotionFillConfig& cfg = {});

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct MotionSample {
  std::vector<MatXd> frames;  // T+1 global 3x79 marker frames
  MatXd contacts;             // 4 x (T+1); endpoint columns hold the given labels
  MatXd traj;                 // 4 x (T+2) filled trajectory
  bool antipodal = false;
};

// Fills a trajectory between the endpoint states with one prior draw.
MatXd sample_trajectory(const TrajFill& tf, const RootState& g0, const RootState& gT, Rng& rng,
                        bool* antipodal = nullptr);

// Full two-stage sample: trajectory fill, then local motion decode against
// the endpoint condition image. Frames 0 and T reproduce the given markers
// exactly; endpoint contacts reproduce the given labels.
MotionSample sample_motion(const TrajFill& tf, const LocalMotionFill& lmf,
                           const MotionStats& stats, const MatXd& start_markers,
                           const MatXd& end_markers, const VecXd& start_contacts,
                           const VecXd& end_contacts, const RootState& g0, const RootState& gT,
                           Rng& rng);

}  // namespace saga
