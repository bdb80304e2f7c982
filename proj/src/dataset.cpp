#include "slotlab/sim/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "slotlab/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotlab::sim {

namespace {

std::string ep_dirname(int ep) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ep_%05d", ep);
  return buf;
}

std::string frame_name(const char* prefix, int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", prefix, t);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

json pose_line(int t, const EpisodeData& ep) {
  json j;
  j["t"] = t;
  if (ep.pusher_pos[t])
    j["pusher"] = {ep.pusher_pos[t]->x, ep.pusher_pos[t]->y};
  else
    j["pusher"] = nullptr;
  json centers = json::array();
  for (const auto& c : ep.object_centers[t]) centers.push_back({c.x, c.y});
  j["centers"] = centers;
  return j;
}

void write_episode(const fs::path& dir, const EpisodeData& ep,
                   const SimConfig& cfg) {
  fs::create_directories(dir);
  for (size_t t = 0; t < ep.frames.size(); ++t) {
    write_png_rgb((dir / frame_name("frame", (int)t)).string(), ep.frames[t]);
    write_png_gray((dir / frame_name("label", (int)t)).string(), ep.labels[t]);
  }
  std::string actions;
  for (size_t t = 0; t < ep.actions.size(); ++t) {
    json j;
    j["t"] = (int)t;
    j["action"] = {ep.actions[t].x0, ep.actions[t].y0, ep.actions[t].x1,
                   ep.actions[t].y1};
    actions += j.dump() + "\n";
  }
  write_text(dir / "actions.jsonl", actions);

  std::string poses;
  for (size_t t = 0; t < ep.frames.size(); ++t)
    poses += pose_line((int)t, ep).dump() + "\n";
  write_text(dir / "poses.jsonl", poses);

  json meta;
  meta["seed"] = ep.seed;
  meta["resolution"] = cfg.image_size;
  json objs = json::array();
  for (const auto& o : ep.initial_state.objects) {
    json jo;
    jo["shape"] = o.kind == ObjKind::kDisc ? "disc" : "square";
    jo["size"] = o.size;
    jo["color"] = {o.color[0], o.color[1], o.color[2]};
    objs.push_back(jo);
  }
  meta["objects"] = objs;
  meta["pusher_radius"] = ep.initial_state.pusher_radius;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

std::vector<Vec2> centers_of(const SceneState& s) {
  std::vector<Vec2> out;
  out.reserve(s.objects.size());
  for (const auto& o : s.objects) out.push_back(o.center);
  return out;
}

}  // namespace

EpisodeData generate_episode(int steps, int num_objects, uint64_t episode_seed,
                             const SimConfig& cfg) {
  EpisodeData ep;
  ep.seed = episode_seed;
  SceneState state = init_scene(num_objects, episode_seed, cfg);
  ep.initial_state = state;
  Rng rng(split_seed(episode_seed, "pushes"));
  ep.frames.push_back(render(state, cfg));
  ep.labels.push_back(render_labels(state, cfg));
  ep.object_centers.push_back(centers_of(state));
  ep.pusher_pos.push_back(state.pusher_pos);
  for (int t = 0; t < steps; ++t) {
    PushAction a = sample_random_push(state, rng, cfg);
    state = apply_push(state, a, cfg);
    ep.actions.push_back(a);
    ep.frames.push_back(render(state, cfg));
    ep.labels.push_back(render_labels(state, cfg));
    ep.object_centers.push_back(centers_of(state));
    ep.pusher_pos.push_back(state.pusher_pos);
  }
  return ep;
}

void generate_dataset(int episodes, int steps, int num_objects, uint64_t seed,
                      const std::string& out_dir, const SimConfig& cfg) {
  fs::path root(out_dir);
  fs::create_directories(root);

  int workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<int>(workers, std::max(1, episodes));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int ep = w; ep < episodes; ep += workers) {
          uint64_t ep_seed = split_seed(seed, "episode", (uint64_t)ep);
          EpisodeData data = generate_episode(steps, num_objects, ep_seed, cfg);
          write_episode(root / ep_dirname(ep), data, cfg);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json top;
  top["version"] = kDatasetVersion;
  top["episodes"] = episodes;
  top["steps"] = steps;
  top["num_objects"] = num_objects;
  top["image_size"] = cfg.image_size;
  write_text(root / "dataset.json", top.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  json top;
  try {
    top = json::parse(read_text(root / "dataset.json"));
  } catch (const json::exception& e) {
    throw IoError("invalid dataset.json in " + dir + ": " + e.what());
  }
  if (!top.contains("version") || top["version"] != kDatasetVersion)
    throw IoError("dataset version mismatch in " + dir + " (want " +
                  std::string(kDatasetVersion) + ")");
  Dataset ds;
  ds.episodes = top.at("episodes").get<int>();
  ds.steps = top.at("steps").get<int>();
  ds.num_objects = top.at("num_objects").get<int>();
  ds.image_size = top.at("image_size").get<int>();
  ds.eps.reserve(ds.episodes);
  for (int ep = 0; ep < ds.episodes; ++ep) {
    fs::path d = root / ep_dirname(ep);
    EpisodeData e;
    for (int t = 0; t <= ds.steps; ++t) {
      e.frames.push_back(read_png_rgb((d / frame_name("frame", t)).string()));
      e.labels.push_back(read_png_gray((d / frame_name("label", t)).string()));
    }
    std::istringstream actions(read_text(d / "actions.jsonl"));
    std::string line;
    while (std::getline(actions, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      auto a = j.at("action");
      e.actions.push_back(
          {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(),
           a.at(3).get<double>()});
    }
    if ((int)e.actions.size() != ds.steps)
      throw IoError("episode " + ep_dirname(ep) + ": expected " +
                    std::to_string(ds.steps) + " actions, found " +
                    std::to_string(e.actions.size()));
    std::istringstream poses(read_text(d / "poses.jsonl"));
    while (std::getline(poses, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      std::vector<Vec2> centers;
      for (const auto& c : j.at("centers"))
        centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      e.object_centers.push_back(std::move(centers));
      if (j.at("pusher").is_null())
        e.pusher_pos.push_back(std::nullopt);
      else
        e.pusher_pos.push_back(
            Vec2{j.at("pusher").at(0).get<double>(),
                 j.at("pusher").at(1).get<double>()});
    }
    if (e.object_centers.size() != e.frames.size())
      throw IoError("episode " + ep_dirname(ep) + ": pose/frame count mismatch");
    e.seed = split_seed(0, "unknown");  // not used by consumers of loaded data
    ds.eps.push_back(std::move(e));
  }
  return ds;
}

}  // namespace slotlab::sim
