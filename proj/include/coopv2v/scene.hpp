#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coopv2v/rng.hpp"
#include "coopv2v/tensor.hpp"

namespace coopv2v {

/// Oriented 3D box: center (x,y,z), size (w,l,h), yaw theta. At theta = 0
/// the length l runs along x and the width w along y.
struct Box {
  double x = 0, y = 0, z = 0;
  double w = 1, l = 1, h = 1;
  double theta = 0;
};

struct SceneConfig {
  double world = 64.0;        // square world edge (m)
  int min_objects = 2;
  int max_objects = 8;
  int num_cavs = 2;           // K collaborators besides the ego
  double sensing_radius = 30.0;
  double dropout = 0.12;      // per (agent, visible object) miss probability
  int grid = 64;              // raster cells per edge

  void validate() const {
    if (num_cavs < 1)
      throw std::invalid_argument("SceneConfig: need at least one CAV");
    if (!(sensing_radius > 0.0))
      throw std::invalid_argument("SceneConfig: sensing radius must be > 0");
    if (min_objects < 1 || max_objects < min_objects)
      throw std::invalid_argument("SceneConfig: bad object count range");
    if (!(world > 0.0) || grid < 1)
      throw std::invalid_argument("SceneConfig: bad world/grid size");
  }
};

/// One generated scene: world boxes, agent positions (agents[0] is the
/// ego), and the per-agent visible object indices. Visibility is stored
/// explicitly so a dumped scene replays bit-identically.
struct Scene {
  double world = 64.0;
  std::vector<Box> boxes;
  std::vector<std::array<double, 2>> agents;
  std::vector<std::vector<int>> visible;
};

struct AgentView {
  int agent_id = 0;
  Tensor raster;  // (1, grid, grid) occupancy in [0,1]
  Tensor mask;    // (1, grid, grid) cells within sensing range
};

/// Every object ends up visible to at least one agent: its nearest
/// in-range agent is exempt from dropout, and objects are re-drawn until
/// some agent covers them.
inline Scene generate_scene(const SceneConfig& cfg, Rng& rng) {
  cfg.validate();
  Scene sc;
  sc.world = cfg.world;
  double margin = 0.1875 * cfg.world;  // keeps agents away from the walls
  int num_agents = cfg.num_cavs + 1;
  for (int a = 0; a < num_agents; ++a)
    sc.agents.push_back({rng.uniform(margin, cfg.world - margin),
                         rng.uniform(margin, cfg.world - margin)});

  int n_obj = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  double obj_margin = 4.0;
  for (int o = 0; o < n_obj; ++o) {
    Box b;
    b.w = rng.uniform(1.6, 2.2);
    b.l = rng.uniform(3.4, 5.0);
    b.h = rng.uniform(1.3, 1.7);
    b.z = b.h * 0.5;
    b.theta = rng.uniform(-0.25 * kTwoPi, 0.25 * kTwoPi);  // [-pi/2, pi/2)
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      b.x = rng.uniform(obj_margin, cfg.world - obj_margin);
      b.y = rng.uniform(obj_margin, cfg.world - obj_margin);
      for (const auto& ag : sc.agents) {
        double dx = b.x - ag[0], dy = b.y - ag[1];
        if (std::hypot(dx, dy) <= cfg.sensing_radius) {
          placed = true;
          break;
        }
      }
    }
    if (!placed) {
      // park it next to a random agent
      const auto& ag = sc.agents[static_cast<std::size_t>(
          rng.uniform_int(0, num_agents - 1))];
      b.x = std::clamp(ag[0] + rng.uniform(-5.0, 5.0), obj_margin,
                       cfg.world - obj_margin);
      b.y = std::clamp(ag[1] + rng.uniform(-5.0, 5.0), obj_margin,
                       cfg.world - obj_margin);
    }
    sc.boxes.push_back(b);
  }

  sc.visible.assign(static_cast<std::size_t>(num_agents), {});
  for (int o = 0; o < n_obj; ++o) {
    const Box& b = sc.boxes[static_cast<std::size_t>(o)];
    int guarantor = -1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(num_agents));
    for (int a = 0; a < num_agents; ++a) {
      dist[a] = std::hypot(b.x - sc.agents[a][0], b.y - sc.agents[a][1]);
      if (dist[a] <= cfg.sensing_radius && dist[a] < best) {
        best = dist[a];
        guarantor = a;
      }
    }
    for (int a = 0; a < num_agents; ++a) {
      if (dist[a] > cfg.sensing_radius) continue;
      bool dropped = a != guarantor && rng.uniform() < cfg.dropout;
      if (!dropped) sc.visible[static_cast<std::size_t>(a)].push_back(o);
    }
  }
  return sc;
}

namespace detail {
inline bool point_in_box_bev(double px, double py, const Box& b) {
  double dx = px - b.x, dy = py - b.y;
  double c = std::cos(-b.theta), s = std::sin(-b.theta);
  double lx = c * dx - s * dy;
  double ly = s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}
}  // namespace detail

/// Bird's-eye occupancy raster of the objects an agent sees, with its
/// range mask. Cells are marked when their center falls inside a box
/// footprint.
inline AgentView make_agent_view(const Scene& sc, int agent, int grid,
                                 double sensing_radius) {
  AgentView view;
  view.agent_id = agent;
  view.raster = Tensor({1, grid, grid});
  view.mask = Tensor({1, grid, grid});
  double cell = sc.world / grid;
  double ax = sc.agents[static_cast<std::size_t>(agent)][0];
  double ay = sc.agents[static_cast<std::size_t>(agent)][1];
  for (int r = 0; r < grid; ++r) {
    for (int c = 0; c < grid; ++c) {
      double cx = (c + 0.5) * cell;
      double cy = (r + 0.5) * cell;
      if (std::hypot(cx - ax, cy - ay) <= sensing_radius)
        view.mask.at(0, r, c) = 1.0;
    }
  }
  for (int o : sc.visible[static_cast<std::size_t>(agent)]) {
    const Box& b = sc.boxes[static_cast<std::size_t>(o)];
    double reach = 0.5 * std::hypot(b.l, b.w);
    int r0 = std::max(0, static_cast<int>((b.y - reach) / cell));
    int r1 = std::min(grid - 1, static_cast<int>((b.y + reach) / cell));
    int c0 = std::max(0, static_cast<int>((b.x - reach) / cell));
    int c1 = std::min(grid - 1, static_cast<int>((b.x + reach) / cell));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (detail::point_in_box_bev((c + 0.5) * cell, (r + 0.5) * cell, b))
          view.raster.at(0, r, c) = 1.0;
  }
  return view;
}

inline std::vector<AgentView> make_agent_views(const Scene& sc,
                                               const SceneConfig& cfg) {
  std::vector<AgentView> views;
  for (std::size_t a = 0; a < sc.agents.size(); ++a)
    views.push_back(make_agent_view(sc, static_cast<int>(a), cfg.grid,
                                    cfg.sensing_radius));
  return views;
}

// ---- JSON-lines fixture format: one scene per line ----

inline void write_scenes_jsonl(const std::vector<Scene>& scenes,
                               std::ostream& os) {
  for (const Scene& sc : scenes) {
    nlohmann::json j;
    j["world"] = sc.world;
    auto& boxes = j["boxes"] = nlohmann::json::array();
    for (const Box& b : sc.boxes)
      boxes.push_back({b.x, b.y, b.z, b.w, b.l, b.h, b.theta});
    auto& agents = j["agents"] = nlohmann::json::array();
    for (const auto& a : sc.agents) agents.push_back({a[0], a[1]});
    j["visible"] = sc.visible;
    os << j.dump() << '\n';
  }
}

inline std::vector<Scene> read_scenes_jsonl(std::istream& is) {
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Scene sc;
    sc.world = j.at("world").get<double>();
    for (const auto& jb : j.at("boxes")) {
      Box b;
      b.x = jb.at(0);
      b.y = jb.at(1);
      b.z = jb.at(2);
      b.w = jb.at(3);
      b.l = jb.at(4);
      b.h = jb.at(5);
      b.theta = jb.at(6);
      sc.boxes.push_back(b);
    }
    for (const auto& ja : j.at("agents"))
      sc.agents.push_back({ja.at(0).get<double>(), ja.at(1).get<double>()});
    sc.visible = j.at("visible").get<std::vector<std::vector<int>>>();
    scenes.push_back(std::move(sc));
  }
  return scenes;
}

}  // namespace coopv2v
