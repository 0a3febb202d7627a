#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saga/body_model.hpp"
#include "saga/data.hpp"
#include "saga/rng.hpp"

namespace saga {

// ---------------------------------------------------------------------------
// Primitive object clouds
// ---------------------------------------------------------------------------
//
// Deterministic surface samplings of desk-scale primitives, centered at the
// origin with outward unit normals. Spheres use a Fibonacci spiral; boxes
// spread an area-proportional share of points on each face as a half-cell
// offset grid; cylinders combine a spiral side wall with sunflower caps.

ObjectCloud sample_sphere(double radius, int n);
ObjectCloud sample_box(const Vec3d& half_extents, int n);
ObjectCloud sample_cylinder(double radius, double half_height, int n);

// Rotates points and normals about +z (applied before any recentering).
void rotate_cloud_z(ObjectCloud& cloud, double yaw);

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct GenConfig {
  int points = 2048;   // cloud samples per object
  int clip_frames = 61;
  int t_go = 8;        // frames [0, t_go] hold the start pose
  int t_stop = 52;     // frames [t_stop, T] hold the grasp pose
};

struct SynthDatasets {
  GraspDataset grasps;
  MotionDataset motions;
};

// Procedurally generates n grasp examples and n matching approach clips.
// Each item poses the body reaching with the right arm, places a primitive
// object at the palm (nearest surface sample a few millimetres from the
// inner-palm anchor marker), labels mutual contacts by the 5 mm rule, and
// synthesizes a 61-frame clip from a rest pose at the origin to the grasp
// pose by eased articulated interpolation with analytic foot contacts.
// Deterministic per seed: every item draws from its own rng fork.
SynthDatasets gen_synthetic(int n, uint64_t seed, const GenConfig& cfg = {});

// ---------------------------------------------------------------------------
// Clip preparation for externally captured sequences
// ---------------------------------------------------------------------------

struct ClipSpec {
  double fps = 30;
  int frames = 61;
};

struct RawSequence {
  double fps = 120;
  std::vector<BodyParams> poses;
};

// Stride-decimates a raw sequence to the clip rate keeping the LAST frame,
// pads short inputs by repeating the first frame, and resets the world
// frame: the frame-0 pelvis maps exactly to the origin, x is the horizontal
// left-to-right-shoulder direction, z stays up, y = z x x (forward).
// Errors: empty input or a non-positive rate -> invalid input; a frame-0
// pose whose shoulders are vertically aligned -> degenerate rotation.
MotionClip clip_sequence(const ToyBody& body, const RawSequence& raw, const ClipSpec& spec = {});

// Foot-ground contact labels (4 x n: l_heel, r_heel, l_toe, r_toe) from the
// posed heel/toe vertices: a vertex is in contact when it sits within 5 cm
// of the sequence's ground level (the lowest heel/toe height seen) and moves
// less than 2 mm between adjacent frames.
MatXd foot_contacts(const ToyBody& body, const std::vector<BodyParams>& poses);

// ---------------------------------------------------------------------------
// Layered text configuration
// ---------------------------------------------------------------------------
//
// Plain "key = value" pairs with '#' comments. Later layers override earlier
// ones: struct defaults < config file < command-line overrides.

class Config {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;

  // Parses a config file; malformed lines throw invalid-input.
  void load_file(const std::string& path);
  // Applies "key=value" strings (CLI layer).
  void apply_overrides(const std::vector<std::string>& kvs);

  // Deterministic "key = value" dump in insertion order.
  std::string dump() const;

 private:
  int find(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> kv_;
};

}  // namespace saga
