#pragma once

#include <string>
#include <vector>

#include "saga/body_model.hpp"
#include "saga/common.hpp"
#include "saga/geometry.hpp"

namespace saga {

// A conditioned object: centered point cloud plus its world placement
// height (the centroid's z; xy placement is fixed at the origin).
struct ObjectItem {
  ObjectCloud cloud;
  double height = 0.0;
  std::string kind;     // sphere / box / cylinder
  double yaw = 0.0;     // orientation applied before centering
};

// One grasp example. Markers are expressed in the object-centered frame
// (subtract the object's world centroid); ground sits at z = -height there.
struct GraspItem {
  ObjectItem object;
  MatXd markers;     // 3 x 143
  VecXd contacts_m;  // 143, binary
  VecXd contacts_o;  // P, binary
  BodyParams truth;  // generator pose, world frame (kept for tests/debug)
};

// One motion clip: 61 frames at 30 fps, world frame reset so the frame-0
// pelvis ground projection is the origin and the body faces +y.
struct MotionClip {
  std::vector<MatXd> frames;  // 61 of 3 x 79 whole-body markers
  MatXd contacts;             // 4 x 61 foot-ground contacts (l/r heel, l/r toe)
  MatXd traj;                 // 4 x 62 root states (x, y, cos g, sin g); last extrapolated
  BodyParams start;           // frame-0 body parameters
  BodyParams end;             // frame-60 body parameters (the grasp pose)
  int grasp_index = -1;       // grasp dataset item the clip ends in, if any
};

struct GraspDataset {
  std::vector<GraspItem> items;
  void save(const std::string& dir) const;
  static GraspDataset load(const std::string& dir);
};

struct MotionDataset {
  std::vector<MotionClip> clips;
  std::vector<ObjectItem> objects;  // aligned with clips (the grasped object)
  void save(const std::string& dir) const;
  static MotionDataset load(const std::string& dir);
};

// Deterministic split: every 10th item is validation.
template <class T>
void split_train_val(const std::vector<T>& all, std::vector<const T*>& train,
                     std::vector<const T*>& val) {
  for (size_t i = 0; i < all.size(); ++i) {
    if (i % 10 == 9)
      val.push_back(&all[i]);
    else
      train.push_back(&all[i]);
  }
}

// Object cloud <-> tensor-file helpers (shared by datasets and the CLI).
class TensorFile;

void put_object(TensorFile& tf, const ObjectItem& obj, const std::string& prefix = "object.");
ObjectItem take_object(const TensorFile& tf, const std::string& prefix = "object.");

void save_object(const std::string& path, const ObjectItem& obj);
ObjectItem load_object(const std::string& path);

}  // namespace saga
