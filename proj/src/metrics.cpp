#include "saga/metrics.hpp"

#include <cmath>

namespace saga {

namespace {

double flat_l2(const MatXd& a, const MatXd& b) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double d = a(i, j) - b(i, j);
      acc += d * d;
    }
  return std::sqrt(acc);
}

}  // namespace

double apd(const std::vector<MatXd>& samples) {
  size_t k = samples.size();
  SAGA_REQUIRE(k >= 2, InvalidInput, "apd: needs at least two samples");
  for (auto& s : samples)
    SAGA_REQUIRE(s.rows() == samples[0].rows() && s.cols() == samples[0].cols(), InvalidInput,
                 "apd: sample shapes differ");
  double acc = 0.0;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = i + 1; j < k; ++j) acc += flat_l2(samples[i], samples[j]);
  return acc * 2.0 / (static_cast<double>(k) * static_cast<double>(k - 1));
}

double ade(const std::vector<MatXd>& samples, const MatXd& gt) {
  SAGA_REQUIRE(!samples.empty(), InvalidInput, "ade: no samples");
  double best = std::numeric_limits<double>::infinity();
  for (auto& s : samples) {
    SAGA_REQUIRE(s.rows() == gt.rows() && s.cols() == gt.cols(), InvalidInput,
                 "ade: shape mismatch");
    double acc = 0.0;
    for (Eigen::Index c = 0; c < gt.cols(); ++c) {
      double sq = 0.0;
      for (Eigen::Index r = 0; r < gt.rows(); ++r) {
        double d = s(r, c) - gt(r, c);
        sq += d * d;
      }
      acc += std::sqrt(sq);
    }
    best = std::min(best, acc / static_cast<double>(gt.cols()));
  }
  return best;
}

bool in_contact(const MatXd& verts3xN, const ObjectCloud& obj, double thresh) {
  for (Eigen::Index i = 0; i < verts3xN.cols(); ++i) {
    Vec3<double> x = verts3xN.col(i);
    double s = signed_dist(x, obj);
    if (s < thresh) return true;  // inside counts as contact too
  }
  return false;
}

double contact_ratio(const std::vector<MatXd>& hand_vert_sets, const ObjectCloud& obj,
                     double thresh) {
  SAGA_REQUIRE(!hand_vert_sets.empty(), InvalidInput, "contact_ratio: empty");
  long hits = 0;
  for (auto& h : hand_vert_sets)
    if (in_contact(h, obj, thresh)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(hand_vert_sets.size());
}

double power_spectrum_kl(const MatXd& p_power, const MatXd& q_power, double eps) {
  SAGA_REQUIRE(p_power.rows() == q_power.rows() && p_power.cols() == q_power.cols(), InvalidInput,
               "power_spectrum_kl: shape mismatch");
  SAGA_REQUIRE(p_power.cols() > 0 && p_power.rows() > 0, InvalidInput,
               "power_spectrum_kl: empty spectrum");
  double total = 0.0;
  for (Eigen::Index ch = 0; ch < p_power.rows(); ++ch) {
    double ps = 0.0, qs = 0.0;
    for (Eigen::Index k = 0; k < p_power.cols(); ++k) {
      ps += p_power(ch, k) + eps;
      qs += q_power(ch, k) + eps;
    }
    double kl = 0.0;
    for (Eigen::Index k = 0; k < p_power.cols(); ++k) {
      double p = (p_power(ch, k) + eps) / ps;
      double q = (q_power(ch, k) + eps) / qs;
      kl += p * std::log(p / q);
    }
    total += kl;
  }
  return total / static_cast<double>(p_power.rows());
}

MatXd accel_power_spectrum(const MatXd& seq) {
  Eigen::Index D = seq.rows(), T = seq.cols();
  SAGA_REQUIRE(T >= 4, InvalidInput, "accel_power_spectrum: sequence too short");
  Eigen::Index n = T - 2;  // second differences
  MatXd acc(D, n);
  for (Eigen::Index d = 0; d < D; ++d)
    for (Eigen::Index t = 0; t < n; ++t)
      acc(d, t) = seq(d, t + 2) - 2.0 * seq(d, t + 1) + seq(d, t);

  Eigen::Index nf = n / 2 + 1;
  MatXd power(D, nf);
  const double w = 2.0 * M_PI / static_cast<double>(n);
  for (Eigen::Index d = 0; d < D; ++d)
    for (Eigen::Index k = 0; k < nf; ++k) {
      double re = 0.0, im = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        double a = w * static_cast<double>(k) * static_cast<double>(t);
        re += acc(d, t) * std::cos(a);
        im -= acc(d, t) * std::sin(a);
      }
      power(d, k) = re * re + im * im;
    }
  return power;
}

PsklPair pskl_j(const MatXd& gt, const MatXd& pred) {
  MatXd pg = accel_power_spectrum(gt);
  MatXd pp = accel_power_spectrum(pred);
  PsklPair out;
  out.gt_to_pred = power_spectrum_kl(pg, pp);
  out.pred_to_gt = power_spectrum_kl(pp, pg);
  return out;
}

double skating_ratio(const MatXd& heel_l, const MatXd& heel_r, double fps, double height_thresh,
                     double speed_thresh) {
  SAGA_REQUIRE(heel_l.rows() == 3 && heel_r.rows() == 3 && heel_l.cols() == heel_r.cols(),
               InvalidInput, "skating_ratio: expects 3 x T heel tracks");
  Eigen::Index T = heel_l.cols();
  SAGA_REQUIRE(T >= 2, InvalidInput, "skating_ratio: need at least 2 frames");
  long skate = 0;
  for (Eigen::Index t = 1; t < T; ++t) {
    bool low = heel_l(2, t) < height_thresh && heel_r(2, t) < height_thresh;
    if (!low) continue;
    double vl = (heel_l.col(t) - heel_l.col(t - 1)).norm() * fps;
    double vr = (heel_r.col(t) - heel_r.col(t - 1)).norm() * fps;
    if (vl > speed_thresh && vr > speed_thresh) ++skate;
  }
  return static_cast<double>(skate) / static_cast<double>(T - 1);
}

double non_collision(const std::vector<MatXd>& vert_frames, double ground_z) {
  SAGA_REQUIRE(!vert_frames.empty(), InvalidInput, "non_collision: empty");
  double acc = 0.0;
  for (auto& f : vert_frames) {
    long ok = 0;
    for (Eigen::Index i = 0; i < f.cols(); ++i)
      if (f(2, i) >= ground_z) ++ok;
    acc += static_cast<double>(ok) / static_cast<double>(f.cols());
  }
  return acc / static_cast<double>(vert_frames.size());
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&j](const char* k, const std::optional<double>& v) {
    if (v)
      j[k] = *v;
    else
      j[k] = nullptr;
  };
  put("apd", apd);
  put("ade", ade);
  put("contact_ratio", contact_ratio);
  put("inter_volume_cm3", inter_volume_cm3);
  put("inter_depth_cm", inter_depth_cm);
  put("pskl_gt_pred", pskl_gt_pred);
  put("pskl_pred_gt", pskl_pred_gt);
  put("skating", skating);
  put("non_collision", non_collision);
  return j;
}

void MetricReport::validate() const {
  auto ratio = [](const char* name, const std::optional<double>& v) {
    if (v) SAGA_REQUIRE(*v >= 0.0 && *v <= 1.0, InvalidInput,
                        std::string("metric out of range: ") + name);
  };
  ratio("contact_ratio", contact_ratio);
  ratio("skating", skating);
  ratio("non_collision", non_collision);
  auto nonneg = [](const char* name, const std::optional<double>& v) {
    if (v) SAGA_REQUIRE(*v >= 0.0, InvalidInput, std::string("metric negative: ") + name);
  };
  nonneg("apd", apd);
  nonneg("ade", ade);
  nonneg("inter_volume_cm3", inter_volume_cm3);
  nonneg("inter_depth_cm", inter_depth_cm);
  nonneg("pskl_gt_pred", pskl_gt_pred);
  nonneg("pskl_pred_gt", pskl_pred_gt);
}

}  // namespace saga
