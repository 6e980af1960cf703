#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "../support/rect_oracle.hpp"
#include "roadsim/error.hpp"
#include "roadsim/rng.hpp"
#include "roadsim/world.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace roadsim;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("roadsim_world_" + name); }

Eigen::Matrix<double, Eigen::Dynamic, 3> unit_speed_track(int frames) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> track(frames, 3);
  for (int t = 0; t < frames; ++t) track.row(t) << t, 0.0, 0.0;
  return track;
}

} // namespace

TEST_CASE("synth: single agent without noise drives along the lane center") {
  SynthConfig cfg;
  cfg.layouts = {LaneLayout::straight};
  cfg.min_agents = cfg.max_agents = 1;
  cfg.lateral_noise = 0.0;
  cfg.brake_probability = 0.0;
  cfg.random_rotation = false;
  const Scenario sc = synth_generate(cfg, 5);
  REQUIRE(sc.num_agents() == 1);
  CHECK(sc.num_frames() == cfg.frames);
  const double psi0 = sc.states.at(0, 0)(2);
  for (Index t = 1; t < sc.num_frames(); ++t) {
    CHECK(sc.states.at(0, t)(2) == doctest::Approx(psi0).epsilon(1e-12));
    // straight lanes run along x, so the lateral coordinate is fixed
    CHECK(sc.states.at(0, t)(1) == doctest::Approx(sc.states.at(0, 0)(1)).epsilon(1e-12));
  }
}

TEST_CASE("synth: 10^3 scenarios, no collisions, step bound holds") {
  const SynthConfig cfg;
  int collisions = 0, step_violations = 0, bad_agent_counts = 0;
  for (int i = 0; i < 1000; ++i) {
    const Scenario sc = synth_generate(cfg, derive_seed(1234, "synth", i));
    if (sc.num_agents() < cfg.min_agents || sc.num_agents() > cfg.max_agents) ++bad_agent_counts;
    for (Index t = 0; t < sc.num_frames(); ++t) {
      for (Index a = 0; a < sc.num_agents(); ++a)
        for (Index b = a + 1; b < sc.num_agents(); ++b)
          if (oracle::exact_overlap(sc.states.at(a, t), sc.dims[a].length, sc.dims[a].width, sc.states.at(b, t),
                                    sc.dims[b].length, sc.dims[b].width))
            ++collisions;
      if (t > 0)
        for (Index a = 0; a < sc.num_agents(); ++a)
          if ((sc.states.at(a, t).head<2>() - sc.states.at(a, t - 1).head<2>()).norm() >= kMaxStepDisplacement)
            ++step_violations;
    }
  }
  CHECK(collisions == 0);
  CHECK(step_violations == 0);
  CHECK(bad_agent_counts == 0);
}

TEST_CASE("synth is deterministic per seed") {
  const SynthConfig cfg;
  CHECK(synth_generate(cfg, 77) == synth_generate(cfg, 77));
  CHECK(!(synth_generate(cfg, 77) == synth_generate(cfg, 78)));
}

TEST_CASE("save/load round trip is bit-exact") {
  const Scenario sc = synth_generate(SynthConfig{}, 99, "rt");
  const fs::path path = temp_file("rt.csv");
  save_scenario(sc, path);
  CHECK(fs::exists(map_path_for(path)));
  const Scenario back = load_scenario(path);
  CHECK(back == sc);
  fs::remove(path);
  fs::remove(map_path_for(path));
}

TEST_CASE("load_scenario schema errors") {
  const Scenario sc = synth_generate(SynthConfig{}, 3, "bad");
  const fs::path path = temp_file("bad.csv");
  save_scenario(sc, path);

  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  const auto hdr = text.find("psi_rad");
  REQUIRE(hdr != std::string::npos);
  std::string broken = text;
  broken.replace(hdr, 7, "heading");
  std::ofstream(path, std::ios::trunc) << broken;
  try {
    load_scenario(path);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("missing column 'psi_rad'") != std::string::npos);
  }

  const auto first_row = text.find('\n', text.find('\n') + 1) + 1;
  std::ofstream(path, std::ios::trunc) << text.substr(0, first_row);
  try {
    load_scenario(path);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("empty scenario") != std::string::npos);
  }

  std::string bad_number = text;
  const auto row3 = bad_number.find('\n', first_row) + 1;
  bad_number.insert(row3, "bad,1,0,0,car,x,0,0,4,2\n");
  std::ofstream(path, std::ios::trunc) << bad_number;
  try {
    load_scenario(path);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("row 4") != std::string::npos);
  }
  fs::remove(path);
  fs::remove(map_path_for(path));
}

TEST_CASE("replay controller") {
  const auto track = unit_speed_track(41);
  const ReplayController exact(track, 1.0);
  const States history;
  for (int t = 0; t <= 40; ++t) CHECK(exact.next_state(history, t) == track.row(t));

  const ReplayController slow(track, 0.5);
  CHECK(slow.next_state(history, 40) == track.row(20));
  CHECK(slow.next_state(history, 1)(0) == doctest::Approx(0.5));
  CHECK(slow.next_state(history, 1000) == track.row(40));

  CHECK_THROWS_AS(ReplayController(track, 0.0), ConfigError);
  CHECK_THROWS_AS(ReplayController(track, 1.5), ConfigError);
}

TEST_CASE("collision_check examples") {
  const AgentDims d{2.0, 1.0};
  const State a(0.0, 0.0, 0.0);
  CHECK(collision_check(a, d, a, d));
  CHECK_FALSE(collision_check(a, d, State(10.0, 0.0, 0.0), d));
  CHECK(collision_check(a, d, State(2.0, 0.0, 0.0), d));  // touching edges
  CHECK_FALSE(collision_check(a, d, State(2.0 + 1e-9, 0.0, 0.0), d));

  const State r(1.2, 0.0, M_PI / 4);
  CHECK(collision_check(a, d, r, d) == oracle::sampled_overlap(a, 2.0, 1.0, r, 2.0, 1.0));
  CHECK(collision_check(a, d, r, d) == oracle::exact_overlap(a, 2.0, 1.0, r, 2.0, 1.0));
}

TEST_CASE("collision_check: symmetric, rigid-invariant, agrees with oracles on 10^4 pairs") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI), off(-50.0, 50.0);
  int disagreements = 0, banded = 0, asym = 0, rigid = 0;
  for (int i = 0; i < 10000; ++i) {
    const oracle::Pair p = oracle::random_pair(rng);
    const bool sat = collision_check(p.a, p.da, p.b, p.db);
    if (sat != collision_check(p.b, p.db, p.a, p.da)) ++asym;

    const double th = ang(rng);
    const Eigen::Rotation2Dd R(th);
    const Eigen::Vector2d t(off(rng), off(rng));
    auto move = [&](const State& s) {
      const Eigen::Vector2d q = R * Eigen::Vector2d(s(0), s(1)) + t;
      return State(q.x(), q.y(), s(2) + th);
    };
    const bool moved = collision_check(move(p.a), p.da, move(p.b), p.db);

    if (oracle::in_band(p, 1e-3)) {
      ++banded;
      continue;
    }
    if (moved != sat) ++rigid;
    const bool sampled = oracle::sampled_overlap(p.a, p.da.length, p.da.width, p.b, p.db.length, p.db.width);
    const bool exact = oracle::exact_overlap(p.a, p.da.length, p.da.width, p.b, p.db.length, p.db.width);
    if (sat != sampled || sat != exact) ++disagreements;
  }
  MESSAGE(banded << " pairs inside the 1e-3 m band");
  CHECK(asym == 0);
  CHECK(rigid == 0);
  CHECK(disagreements == 0);
}

TEST_CASE("normalize_map") {
  Polyline seg(2, 2);
  seg << 0.0, 0.0, 100.0, 0.0;
  const MapPolylines m = normalize_map({seg}, SceneFrame{}, 20);
  REQUIRE(m.polylines.size() == 1);
  CHECK(m.points_per_polyline == 20);
  for (int i = 1; i < 20; ++i)
    CHECK((m.polylines[0].row(i) - m.polylines[0].row(i - 1)).norm() == doctest::Approx(100.0 / 19.0));
  CHECK(100.0 / 19.0 == doctest::Approx(5.263).epsilon(1e-4));

  const MapPolylines again = normalize_map(m.polylines, SceneFrame{}, 20);
  for (int i = 0; i < 20; ++i)
    CHECK((again.polylines[0].row(i) - m.polylines[0].row(i)).norm() < 1e-9);

  Polyline dup(2, 2);
  dup << 3.0, 4.0, 3.0, 4.0;
  CHECK(normalize_map({dup, seg}, SceneFrame{}, 20).polylines.size() == 1);

  SceneFrame f;
  f.origin = {50.0, 0.0};
  f.scale = 50.0;
  const MapPolylines scaled = normalize_map({seg}, f, 3);
  CHECK(scaled.polylines[0](0, 0) == doctest::Approx(-1.0));
  CHECK(scaled.polylines[0](2, 0) == doctest::Approx(1.0));
}

TEST_CASE("scene units round trip") {
  const Scenario sc = synth_generate(SynthConfig{}, 11);
  const SceneFrame f = scene_frame(sc, 10);
  const Scenario scene = to_scene_units(sc, f);
  CHECK(scene.map.frame == f);
  const States back = states_to_world(scene.states, f);
  CHECK((back.data - sc.states.data).cwiseAbs().maxCoeff() < 1e-9);
  // observed centroid sits at the origin
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (Index a = 0; a < scene.num_agents(); ++a)
    for (int t = 0; t < 10; ++t) c += scene.states.at(a, t).head<2>().transpose();
  CHECK(c.norm() / (10.0 * scene.num_agents()) < 1e-12);
}

TEST_CASE("cap_agents keeps the agents nearest the centroid") {
  Scenario sc = synth_generate(SynthConfig{}, 21);
  const Index before = sc.num_agents();
  cap_agents(sc, 1);
  CHECK(sc.num_agents() == std::min<Index>(1, before));
  CHECK_NOTHROW(sc.check_shapes());
}
