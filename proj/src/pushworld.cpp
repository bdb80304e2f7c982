#include "slotlab/sim/pushworld.hpp"

#include <algorithm>
#include <cmath>

#include "slotlab/common.hpp"

namespace slotlab::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Closest point on an axis-aligned square to p.
Vec2 closest_on_square(Vec2 p, Vec2 center, double half) {
  return {clampd(p.x, center.x - half, center.x + half),
          clampd(p.y, center.y - half, center.y + half)};
}

// Disc (center c, radius r) vs axis-aligned square.
Contact disc_square_contact(Vec2 c, double r, Vec2 sq_center, double half) {
  Vec2 q = closest_on_square(c, sq_center, half);
  Vec2 d = q - c;
  double dist = d.norm();
  if (dist > 1e-12) {
    // disc center outside the square
    return {r - dist, d * (1.0 / dist)};
  }
  // center inside: push out along the axis of least penetration
  double dx_left = c.x - (sq_center.x - half);
  double dx_right = (sq_center.x + half) - c.x;
  double dy_top = c.y - (sq_center.y - half);
  double dy_bot = (sq_center.y + half) - c.y;
  double m = std::min({dx_left, dx_right, dy_top, dy_bot});
  Vec2 n{0, 0};
  if (m == dx_left) n = {1, 0};
  else if (m == dx_right) n = {-1, 0};
  else if (m == dy_top) n = {0, 1};
  else n = {0, -1};
  // depth measured so that moving the square by depth*n separates it
  return {r + m, n};
}

Contact disc_disc_contact(Vec2 a, double ra, Vec2 b, double rb) {
  Vec2 d = b - a;
  double dist = d.norm();
  if (dist < 1e-12) return {ra + rb, {1, 0}};
  return {ra + rb - dist, d * (1.0 / dist)};
}

Contact square_square_contact(Vec2 a, double ha, Vec2 b, double hb) {
  double ox = (ha + hb) - std::abs(b.x - a.x);
  double oy = (ha + hb) - std::abs(b.y - a.y);
  if (ox <= 0 || oy <= 0) return {std::min(ox, oy), {1, 0}};
  if (ox < oy) return {ox, {b.x >= a.x ? 1.0 : -1.0, 0}};
  return {oy, {0, b.y >= a.y ? 1.0 : -1.0}};
}

void clamp_to_workspace(SceneObject& o) {
  double m = o.extent();
  o.center.x = clampd(o.center.x, m, 1.0 - m);
  o.center.y = clampd(o.center.y, m, 1.0 - m);
}

// One sweep of pairwise positional projection; returns the largest
// penetration seen before correction.
double resolve_pairs_once(SceneState& s, double tol) {
  double worst = 0;
  int n = static_cast<int>(s.objects.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Contact c = object_contact(s.objects[i], s.objects[j]);
      if (c.depth > worst) worst = c.depth;
      if (c.depth > tol) {
        Vec2 half = c.normal * (c.depth * 0.5);
        s.objects[i].center = s.objects[i].center - half;
        s.objects[j].center = s.objects[j].center + half;
      }
    }
  }
  return worst;
}

void resolve_objects(SceneState& s, const SimConfig& cfg, int max_rounds) {
  for (int round = 0; round < max_rounds; ++round) {
    double worst = resolve_pairs_once(s, cfg.overlap_tol);
    for (auto& o : s.objects) clamp_to_workspace(o);
    if (worst <= cfg.overlap_tol) break;
  }
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  double m = v - c;
  return {float(r + m), float(g + m), float(b + m)};
}

}  // namespace

bool PushAction::valid(double max_len) const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in01(x0) && in01(y0) && in01(x1) && in01(y1) &&
         length() <= max_len + 1e-9;
}

Contact object_contact(const SceneObject& a, const SceneObject& b) {
  if (a.kind == ObjKind::kDisc && b.kind == ObjKind::kDisc)
    return disc_disc_contact(a.center, a.size, b.center, b.size);
  if (a.kind == ObjKind::kSquare && b.kind == ObjKind::kSquare)
    return square_square_contact(a.center, a.size, b.center, b.size);
  if (a.kind == ObjKind::kDisc) {
    Contact c = disc_square_contact(a.center, a.size, b.center, b.size);
    return c;
  }
  // a square, b disc: flip the disc-square result
  Contact c = disc_square_contact(b.center, b.size, a.center, a.size);
  return {c.depth, c.normal * -1.0};
}

Contact disc_object_contact(Vec2 disc_center, double disc_radius,
                            const SceneObject& obj) {
  if (obj.kind == ObjKind::kDisc)
    return disc_disc_contact(disc_center, disc_radius, obj.center, obj.size);
  return disc_square_contact(disc_center, disc_radius, obj.center, obj.size);
}

double max_pair_penetration(const SceneState& state) {
  double worst = 0;
  int n = static_cast<int>(state.objects.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      worst = std::max(worst,
                       object_contact(state.objects[i], state.objects[j]).depth);
  return worst;
}

SceneState init_scene(int num_objects, uint64_t seed, const SimConfig& cfg) {
  SLOTLAB_REQUIRE(num_objects >= 0 && num_objects <= 8,
                  "init_scene: num_objects must be in [0,8], got ", num_objects);
  Rng rng(split_seed(seed, "scene"));
  SceneState s;
  s.pusher_radius = cfg.pusher_radius;
  s.rng_seed = seed;

  // distinct high-saturation colors: evenly spaced hues, random offset
  double hue0 = rng.uniform();
  int rejections = 0;
  for (int i = 0; i < num_objects; ++i) {
    SceneObject o;
    o.kind = rng.uniform() < 0.5 ? ObjKind::kDisc : ObjKind::kSquare;
    o.size = rng.uniform(cfg.min_obj_size, cfg.max_obj_size);
    double hue = std::fmod(hue0 + double(i) / std::max(1, num_objects), 1.0);
    o.color = hsv_to_rgb(hue, 0.85 + 0.15 * rng.uniform(),
                         0.85 + 0.15 * rng.uniform());
    double m = o.extent();
    while (true) {
      o.center = {rng.uniform(m, 1.0 - m), rng.uniform(m, 1.0 - m)};
      bool ok = true;
      for (const auto& prev : s.objects)
        if (object_contact(prev, o).depth > 0) { ok = false; break; }
      if (ok) break;
      if (++rejections >= 10000)
        throw ContractError("workspace too crowded");
    }
    s.objects.push_back(o);
  }
  return s;
}

SceneState apply_push(const SceneState& state, const PushAction& action,
                      const SimConfig& cfg) {
  SLOTLAB_REQUIRE(action.valid(cfg.max_push_len),
                  "apply_push: invalid action (bounds or length)");
  SceneState s = state;
  Vec2 p0 = action.start();
  Vec2 delta = action.end() - action.start();
  int n_sub = std::max(1, cfg.push_substeps);
  for (int i = 1; i <= n_sub; ++i) {
    Vec2 p = p0 + delta * (double(i) / n_sub);
    for (auto& o : s.objects) {
      Contact c = disc_object_contact(p, s.pusher_radius, o);
      if (c.depth > 0) o.center = o.center + c.normal * c.depth;
    }
    resolve_objects(s, cfg, cfg.resolve_rounds);
  }
  // settle residual contacts so the overlap invariant holds exactly
  resolve_objects(s, cfg, 10000);
  s.pusher_pos = action.end();
  return s;
}

namespace {

// Owner of a pixel: -2 background, -1 pusher, otherwise object index.
// Painter's order: background < objects (index order) < pusher.
int pixel_owner(const SceneState& s, double px, double py) {
  if (s.pusher_pos) {
    Vec2 d{px - s.pusher_pos->x, py - s.pusher_pos->y};
    if (d.norm() <= s.pusher_radius) return -1;
  }
  for (int i = static_cast<int>(s.objects.size()) - 1; i >= 0; --i) {
    const auto& o = s.objects[i];
    if (o.kind == ObjKind::kDisc) {
      Vec2 d{px - o.center.x, py - o.center.y};
      if (d.norm() <= o.size) return i;
    } else {
      if (std::abs(px - o.center.x) <= o.size &&
          std::abs(py - o.center.y) <= o.size)
        return i;
    }
  }
  return -2;
}

}  // namespace

Image render(const SceneState& state, const SimConfig& cfg) {
  int n = cfg.image_size;
  Image img({n, n, 3});
  for (int y = 0; y < n; ++y) {
    double py = (y + 0.5) / n;
    for (int x = 0; x < n; ++x) {
      double px = (x + 0.5) / n;
      int owner = pixel_owner(state, px, py);
      std::array<float, 3> c;
      if (owner == -1) {
        c = cfg.pusher_color;
      } else if (owner >= 0) {
        c = state.objects[owner].color;
      } else {
        c = cfg.background_color;
        if (cfg.checker_background && (((x / 8) + (y / 8)) % 2 == 1))
          c = {c[0] - 0.08f, c[1] - 0.08f, c[2] - 0.08f};
      }
      float* p = img.data() + (size_t(y) * n + x) * 3;
      p[0] = c[0];
      p[1] = c[1];
      p[2] = c[2];
    }
  }
  return img;
}

LabelMap render_labels(const SceneState& state, const SimConfig& cfg) {
  int n = cfg.image_size;
  LabelMap labels({n, n});
  for (int y = 0; y < n; ++y) {
    double py = (y + 0.5) / n;
    for (int x = 0; x < n; ++x) {
      double px = (x + 0.5) / n;
      int owner = pixel_owner(state, px, py);
      uint8_t v = 0;
      if (owner == -1) v = 1;
      else if (owner >= 0) v = static_cast<uint8_t>(owner + 2);
      labels[size_t(y) * n + x] = v;
    }
  }
  return labels;
}

PushAction sample_random_push(const SceneState& state, Rng& rng,
                              const SimConfig& cfg) {
  auto uniform_segment = [&]() {
    for (int tries = 0; tries < 1000; ++tries) {
      PushAction a;
      a.x0 = rng.uniform();
      a.y0 = rng.uniform();
      double len = rng.uniform(cfg.min_push_len, cfg.max_push_len);
      double ang = rng.uniform(0, 2 * kPi);
      a.x1 = a.x0 + len * std::cos(ang);
      a.y1 = a.y0 + len * std::sin(ang);
      if (a.valid(cfg.max_push_len)) return a;
    }
    return PushAction{0.5, 0.5, 0.5, 0.5};
  };

  if (!state.objects.empty() && rng.uniform() < cfg.targeted_push_prob) {
    for (int tries = 0; tries < 100; ++tries) {
      const auto& o = state.objects[rng.uniform_int(state.objects.size())];
      double ang = rng.uniform(0, 2 * kPi);
      Vec2 dir{std::cos(ang), std::sin(ang)};
      double gap = rng.uniform(0.002, 0.01);
      double standoff = o.extent() + state.pusher_radius + gap;
      Vec2 start = o.center + dir * standoff;
      double len = rng.uniform(cfg.min_push_len, cfg.max_push_len);
      Vec2 end = start - dir * len;  // straight through the object center
      PushAction a{start.x, start.y, end.x, end.y};
      if (a.valid(cfg.max_push_len)) return a;
    }
  }
  return uniform_segment();
}

}  // namespace slotlab::sim
