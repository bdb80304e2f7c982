#pragma once

// Deterministic 2D top-down push simulator on the unit square.
// Quasi-static, translation-only: the pusher disc is swept along a segment
// and penetrations are resolved positionally at each substep.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "slotlab/image.hpp"
#include "slotlab/rng.hpp"

namespace slotlab::sim {

struct Vec2 {
  double x = 0, y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

enum class ObjKind { kDisc, kSquare };

struct SceneObject {
  ObjKind kind = ObjKind::kDisc;
  double size = 0.08;  // radius (disc) or half-side (square)
  std::array<float, 3> color{1.f, 0.f, 0.f};
  Vec2 center;

  // conservative radius bound used for workspace margins and broad checks
  double extent() const {
    return kind == ObjKind::kDisc ? size : size * 1.4142135623730951;
  }
};

struct SimConfig {
  int image_size = 64;
  double pusher_radius = 0.035;
  double max_push_len = 0.3;  // L_max
  double min_push_len = 0.05;
  double min_obj_size = 0.06;
  double max_obj_size = 0.10;
  int push_substeps = 100;
  int resolve_rounds = 50;
  double overlap_tol = 1e-6;
  double targeted_push_prob = 0.7;
  bool checker_background = false;
  std::array<float, 3> background_color{0.84f, 0.84f, 0.84f};
  std::array<float, 3> pusher_color{0.25f, 0.25f, 0.28f};
};

struct SceneState {
  std::vector<SceneObject> objects;
  std::optional<Vec2> pusher_pos;  // absent until the first push
  double pusher_radius = 0.035;
  uint64_t rng_seed = 0;
};

// Point-to-point push in normalized image coordinates.
struct PushAction {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  Vec2 start() const { return {x0, y0}; }
  Vec2 end() const { return {x1, y1}; }
  double length() const { return (end() - start()).norm(); }
  bool valid(double max_len) const;
};

// Signed penetration depth between two objects (> 0 means overlap) and the
// unit direction that separates them (pointing from a to b).
struct Contact {
  double depth = 0;
  Vec2 normal{1, 0};
};
Contact object_contact(const SceneObject& a, const SceneObject& b);
Contact disc_object_contact(Vec2 disc_center, double disc_radius,
                            const SceneObject& obj);

// Rejection-samples non-overlapping objects; deterministic in (seed, cfg).
// Throws IoError("workspace too crowded") after 10,000 rejected placements.
SceneState init_scene(int num_objects, uint64_t seed, const SimConfig& cfg);

SceneState apply_push(const SceneState& state, const PushAction& action,
                      const SimConfig& cfg);

Image render(const SceneState& state, const SimConfig& cfg);
LabelMap render_labels(const SceneState& state, const SimConfig& cfg);

PushAction sample_random_push(const SceneState& state, Rng& rng,
                              const SimConfig& cfg);

// Largest object-object penetration in the scene (for invariant checks).
double max_pair_penetration(const SceneState& state);

}  // namespace slotlab::sim
