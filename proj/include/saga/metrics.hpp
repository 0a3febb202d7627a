#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saga/common.hpp"
#include "saga/geometry.hpp"

namespace saga {

// Sample-set diversity: mean pairwise L2 distance between flattened marker
// sets (columns flattened column-major). Plain accumulation order so a
// brute-force oracle matches bitwise.
double apd(const std::vector<MatXd>& samples);

// Accuracy of the closest sample: min over samples of the mean per-column
// L2 distance to the ground truth (columns are markers, possibly stacked
// over frames).
double ade(const std::vector<MatXd>& samples, const MatXd& gt);

// A grasp counts as "in contact" when any queried vertex is within
// `thresh` of the object surface or inside it.
bool in_contact(const MatXd& verts3xN, const ObjectCloud& obj, double thresh = 0.005);
double contact_ratio(const std::vector<MatXd>& hand_vert_sets, const ObjectCloud& obj,
                     double thresh = 0.005);

// Power-spectrum KL between two (channels x freq) nonnegative power
// matrices: normalize each channel with epsilon smoothing, mean KL over
// channels.
double power_spectrum_kl(const MatXd& p_power, const MatXd& q_power, double eps = 1e-8);

// Power spectrum of the per-channel second differences of a (D x T)
// sequence, via a direct DFT (rows: channels, cols: frequency bins).
MatXd accel_power_spectrum(const MatXd& seq);

// PSKL-J in both directions between two joint sequences (D x T).
struct PsklPair {
  double gt_to_pred = 0.0;
  double pred_to_gt = 0.0;
};
PsklPair pskl_j(const MatXd& gt, const MatXd& pred);

// Foot skating: fraction of frames (t = 1..T-1) where both heels are below
// `height_thresh` and both heel speeds exceed `speed_thresh` (m/s).
double skating_ratio(const MatXd& heel_l, const MatXd& heel_r, double fps,
                     double height_thresh = 0.05, double speed_thresh = 0.075);

// Fraction of vertices on or above the ground plane, averaged over frames.
double non_collision(const std::vector<MatXd>& vert_frames, double ground_z = 0.0);

// Aggregate report emitted by the CLI; absent metrics stay unset.
struct MetricReport {
  std::optional<double> apd;
  std::optional<double> ade;
  std::optional<double> contact_ratio;
  std::optional<double> inter_volume_cm3;
  std::optional<double> inter_depth_cm;
  std::optional<double> pskl_gt_pred;
  std::optional<double> pskl_pred_gt;
  std::optional<double> skating;
  std::optional<double> non_collision;

  nlohmann::ordered_json to_json() const;
  void validate() const;  // throws InvalidInput when ratios leave [0,1]
};

}  // namespace saga
