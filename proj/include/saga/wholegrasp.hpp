#pragma once

#include <memory>
#include <string>
#include <vector>

#include "saga/autodiff.hpp"
#include "saga/data.hpp"
#include "saga/nn.hpp"
#include "saga/rng.hpp"

namespace saga {

// Precomputed point grouping for the two set-abstraction levels of the
// object encoder. Depends only on the cloud geometry, so it is built once
// per object and reused every epoch.
//
// Farthest-point sampling starts from a canonical point (largest norm,
// coordinate-lexicographic tiebreak) so the selected centroids — and hence
// the pooled features — are stable under permutations of the input order.
// Ball queries gather up to `nsample` in-radius points ordered by
// (distance, coordinates); short groups are padded by repeating the
// nearest member (the centroid itself is always in range, so a group is
// never empty).
struct GroupingPlan {
  int nsample = 8;
  std::vector<int> fps1;  // 256 centroid ids into the cloud
  std::vector<int> nb1;   // 256*nsample cloud ids
  std::vector<int> fps2;  // 128 ids into fps1 (the level-1 centroid list)
  std::vector<int> nb2;   // 128*nsample ids into the 256 level-1 centroids

  // Ground-truth squared contact distances for the consistency term:
  // marker k -> nearest cloud point, and cloud point p -> nearest marker.
  // Filled by build_item; empty when the plan was built from a bare cloud.
  VecXd gt_dm;  // 143
  VecXd gt_do;  // P

  static GroupingPlan build(const ObjectCloud& cloud, int nsample = 8);
  static GroupingPlan build_item(const GraspItem& item, int nsample = 8);
};

struct WholeGraspConfig {
  int latent = 16;
  int nsample = 8;
  int markers = 143;
  int points = 2048;
  double lr = 1e-3;
  int batch = 16;
  int epochs = 40;
  double kl_step = 0.005;   // KL weight per (1-based) epoch
  double pw_marker = 5.0;   // positive-class weight, marker contacts
  double pw_object = 3.0;   // positive-class weight, object contacts
  double w_consistency = 1.0;
};

// Loss breakdown: marker reconstruction, marker-contact BCE, object-contact
// BCE, robust KL, and the contact-distance consistency term.
struct WholeGraspLoss {
  double total = 0, rec_m = 0, rec_cm = 0, rec_co = 0, kl = 0, consistency = 0;
};

struct WholeGraspSample {
  MatXd markers;    // 3 x 143, object-centered frame
  VecXd contact_m;  // 143 probabilities
  VecXd contact_o;  // P probabilities
};

// Conditional VAE producing whole-body grasp markers and the mutual
// body/object contact maps for a given object cloud + height. The scalar
// type is a template parameter so gradient checks can run in double;
// training and inference use the float alias below.
template <class T>
class WholeGraspVaeT {
 public:
  explicit WholeGraspVaeT(const WholeGraspConfig& cfg = {});

  void init(Rng& rng);

  // Builds the loss graph for one batch; optionally runs backward
  // (gradients accumulate into the parameter store).
  WholeGraspLoss loss_batch(const std::vector<const GraspItem*>& batch,
                            const std::vector<const GroupingPlan*>& plans, double kl_weight,
                            Rng& noise_rng, bool backward);

  struct ValStats {
    double marker_l1 = 0;  // mean |err| per marker coordinate, metres
    double bce = 0;        // mean of the two weighted contact BCE terms
  };
  ValStats validate(const std::vector<const GraspItem*>& val,
                    const std::vector<const GroupingPlan*>& plans);

  // Posterior Gaussian parameters for one item (deterministic encoder pass).
  void posterior(const GraspItem& item, const GroupingPlan& plan, VecXd* mu, VecXd* logvar);

  // Decodes `n` latent draws for one object.
  std::vector<WholeGraspSample> sample(const ObjectItem& obj, int n, Rng& rng) const;

  nn::ParamStore<T>& params() { return store_; }
  const WholeGraspConfig& config() const { return cfg_; }

  void save(const std::string& path, int epoch) const;
  static WholeGraspVaeT load(const std::string& path);

 private:
  struct Decoded {
    ad::Var markers;  // 429 x B
    ad::Var logit_m;  // 143 x B
    ad::Var logit_o;  // 1 x (B*points)
  };

  ad::Var encode_objects(ad::Graph<T>& g, const std::vector<const GraspItem*>& batch,
                         const std::vector<const GroupingPlan*>& plans) const;  // 512 x B
  ad::Var condition(ad::Graph<T>& g, const std::vector<const ObjectItem*>& objs,
                    const std::vector<const GroupingPlan*>& plans) const;  // 257 x B
  Decoded decode(ad::Graph<T>& g, ad::Var zc, const std::vector<const ObjectItem*>& objs) const;

  WholeGraspConfig cfg_;
  nn::ParamStore<T> store_;

  // posterior object branch (set abstraction)
  nn::Linear<T> sa1a_, sa1b_, sa2a_, sa2b_, sa3a_, sa3b_;
  // posterior body branch and heads
  nn::Linear<T> body_in_;
  nn::ResBlock<T> body_res1_, body_res2_;
  nn::Linear<T> fuse_, mu_, logvar_;
  // condition branch
  nn::Linear<T> cond1_, cond2_, cond3_;
  // decoder
  nn::Linear<T> dec_in_;
  nn::ResBlock<T> dec_res_;
  nn::Linear<T> head_markers_, head_cm_;
  nn::Linear<T> obj_proj_, obj_h1_, obj_h2_;
};

using WholeGraspVae = WholeGraspVaeT<float>;

// Full training loop (deterministic shuffling, every-10th validation split).
struct WholeGraspTrainReport {
  int epochs = 0;
  double val_marker_l1 = 0;
  double val_bce = 0;
  double train_loss = 0;
  std::vector<double> val_l1_history;  // one entry per epoch
};

WholeGraspTrainReport train_wholegrasp(WholeGraspVae& model, const GraspDataset& data,
                                       uint64_t seed, const std::string& log_path = "");

}  // namespace saga
