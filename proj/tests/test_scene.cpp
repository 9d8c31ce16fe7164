#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "test_util.hpp"

using namespace coopv2v;

TEST_CASE("full sensing and no dropout makes every object visible everywhere") {
  SceneConfig cfg;
  cfg.dropout = 0.0;
  cfg.sensing_radius = 2.0 * cfg.world;  // beyond the world diagonal
  Rng rng(201);
  for (int trial = 0; trial < 20; ++trial) {
    Scene sc = generate_scene(cfg, rng);
    for (const auto& vis : sc.visible)
      REQUIRE(vis.size() == sc.boxes.size());
  }
}

TEST_CASE("infeasible configs are rejected") {
  SceneConfig cfg;
  cfg.num_cavs = 0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.sensing_radius = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SceneConfig{};
  cfg.min_objects = 5;
  cfg.max_objects = 3;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ego view misses roughly a third of the objects at defaults") {
  SceneConfig cfg;
  Rng rng(202);
  std::int64_t total = 0, missed = 0;
  for (int s = 0; s < 1000; ++s) {
    Scene sc = generate_scene(cfg, rng);
    total += static_cast<std::int64_t>(sc.boxes.size());
    missed += static_cast<std::int64_t>(sc.boxes.size() - sc.visible[0].size());
  }
  double frac = static_cast<double>(missed) / static_cast<double>(total);
  REQUIRE(frac > 0.2);
  REQUIRE(frac < 0.4);
}

TEST_CASE("every object is visible to at least one agent") {
  SceneConfig cfg;
  Rng rng(203);
  for (int s = 0; s < 200; ++s) {
    Scene sc = generate_scene(cfg, rng);
    std::vector<int> seen(sc.boxes.size(), 0);
    for (const auto& vis : sc.visible)
      for (int o : vis) seen[static_cast<std::size_t>(o)] = 1;
    for (int flag : seen) REQUIRE(flag == 1);
  }
}

TEST_CASE("boxes stay inside the world with yaw in [-pi/2, pi/2)") {
  SceneConfig cfg;
  Rng rng(204);
  for (int s = 0; s < 100; ++s) {
    Scene sc = generate_scene(cfg, rng);
    for (const Box& b : sc.boxes) {
      REQUIRE(b.x >= 0.0);
      REQUIRE(b.x <= cfg.world);
      REQUIRE(b.y >= 0.0);
      REQUIRE(b.y <= cfg.world);
      REQUIRE(b.theta >= -0.25 * kTwoPi);
      REQUIRE(b.theta < 0.25 * kTwoPi);
      REQUIRE(b.w > 0.0);
      REQUIRE(b.l > 0.0);
      REQUIRE(b.h > 0.0);
    }
  }
}

TEST_CASE("rasters are binary occupancy and invisible objects leave no trace") {
  Scene sc;
  sc.world = 64.0;
  sc.agents = {{10.0, 10.0}, {50.0, 50.0}};
  Box far;
  far.x = 50.0;
  far.y = 50.0;
  far.w = 2.0;
  far.l = 4.0;
  far.h = 1.5;
  sc.boxes = {far};
  sc.visible = {{}, {0}};  // outside the ego's radius

  AgentView ego = make_agent_view(sc, 0, 64, 15.0);
  for (double v : ego.raster.data) REQUIRE(v == 0.0);

  AgentView cav = make_agent_view(sc, 1, 64, 15.0);
  double occupied = 0.0;
  for (double v : cav.raster.data) {
    REQUIRE((v == 0.0 || v == 1.0));
    occupied += v;
  }
  REQUIRE(occupied > 0.0);
  REQUIRE(occupied <= 4.0 * 2.0 * 4.0);  // footprint plus discretization slack
  // mask marks exactly the in-range cells
  REQUIRE(cav.mask.at(0, 49, 49) == 1.0);
  REQUIRE(cav.mask.at(0, 0, 0) == 0.0);
}

TEST_CASE("scenes replay bit-identically through the JSONL fixture") {
  SceneConfig cfg;
  Rng rng(205);
  std::vector<Scene> scenes;
  for (int i = 0; i < 10; ++i) scenes.push_back(generate_scene(cfg, rng));
  std::stringstream buf;
  write_scenes_jsonl(scenes, buf);
  std::vector<Scene> loaded = read_scenes_jsonl(buf);
  REQUIRE(loaded.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    REQUIRE(loaded[i].world == scenes[i].world);
    REQUIRE(loaded[i].visible == scenes[i].visible);
    REQUIRE(loaded[i].boxes.size() == scenes[i].boxes.size());
    for (std::size_t b = 0; b < scenes[i].boxes.size(); ++b) {
      REQUIRE(loaded[i].boxes[b].x == scenes[i].boxes[b].x);
      REQUIRE(loaded[i].boxes[b].theta == scenes[i].boxes[b].theta);
    }
    // identical rasters after the round trip
    AgentView a = make_agent_view(scenes[i], 0, cfg.grid, cfg.sensing_radius);
    AgentView b = make_agent_view(loaded[i], 0, cfg.grid, cfg.sensing_radius);
    for (std::int64_t k = 0; k < a.raster.size(); ++k)
      REQUIRE(a.raster[k] == b.raster[k]);
  }
}

TEST_CASE("identical seeds generate identical scenes") {
  SceneConfig cfg;
  Rng a(206), b(206);
  Scene sa = generate_scene(cfg, a);
  Scene sb = generate_scene(cfg, b);
  REQUIRE(sa.boxes.size() == sb.boxes.size());
  for (std::size_t i = 0; i < sa.boxes.size(); ++i) {
    REQUIRE(sa.boxes[i].x == sb.boxes[i].x);
    REQUIRE(sa.boxes[i].y == sb.boxes[i].y);
  }
  REQUIRE(sa.visible == sb.visible);
}
