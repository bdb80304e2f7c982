#pragma once

// Dataset layout on disk:
//   <out>/dataset.json                     version "slotlab-ds-1", counts
//   <out>/ep_<05d>/frame_<03d>.png         8-bit RGB
//   <out>/ep_<05d>/label_<03d>.png         8-bit single channel, raw labels
//   <out>/ep_<05d>/actions.jsonl           {"t":i,"action":[x0,y0,x1,y1]}
//   <out>/ep_<05d>/poses.jsonl             per-frame pusher/object centers
//   <out>/ep_<05d>/meta.json               object shapes/sizes/colors, seed

#include <string>
#include <vector>

#include "slotlab/sim/pushworld.hpp"

namespace slotlab::sim {

inline constexpr const char* kDatasetVersion = "slotlab-ds-1";

struct EpisodeData {
  std::vector<Image> frames;
  std::vector<PushAction> actions;  // frames.size() - 1
  std::vector<LabelMap> labels;     // evaluation only
  std::vector<std::vector<Vec2>> object_centers;  // per frame, eval only
  std::vector<std::optional<Vec2>> pusher_pos;    // per frame
  SceneState initial_state;
  uint64_t seed = 0;
};

struct Dataset {
  int episodes = 0;
  int steps = 0;
  int num_objects = 0;
  int image_size = 0;
  std::vector<EpisodeData> eps;
};

// Simulates one episode: initial frame plus `steps` random pushes.
EpisodeData generate_episode(int steps, int num_objects, uint64_t episode_seed,
                             const SimConfig& cfg);

// Generates and writes a dataset; episodes are independently seeded from
// `seed` and generated in parallel. Throws IoError on write failure.
void generate_dataset(int episodes, int steps, int num_objects, uint64_t seed,
                      const std::string& out_dir, const SimConfig& cfg);

// Loads a dataset written by generate_dataset. Validates the version string
// and frame/action count consistency.
Dataset load_dataset(const std::string& dir);

}  // namespace slotlab::sim
