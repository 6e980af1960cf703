#pragma once

#include "roadsim/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace roadsim {

using Polyline = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using State = Eigen::RowVector3d;  // x, y, heading
using FrameMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using AgentMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct AgentDims {
  double length = 4.5;  // meters
  double width = 1.8;   // meters
  bool operator==(const AgentDims&) const = default;
};

// Similarity transform from world meters into scene units: (p - origin) / scale.
// Headings are left untouched.
struct SceneFrame {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double scale = 1.0;

  Eigen::Vector2d to_scene(const Eigen::Vector2d& p) const { return (p - origin) / scale; }
  Eigen::Vector2d to_world(const Eigen::Vector2d& p) const { return p * scale + origin; }
  bool operator==(const SceneFrame& other) const {
    return origin == other.origin && scale == other.scale;
  }
};

// Lane-center polylines, each resampled to the same number of points, expressed
// in `frame` coordinates.
struct MapPolylines {
  std::vector<Polyline> polylines;
  int points_per_polyline = 0;
  SceneFrame frame;

  Index total_points() const { return static_cast<Index>(polylines.size()) * points_per_polyline; }
  bool operator==(const MapPolylines& other) const;
};

// A traffic scenario sampled at 10 Hz: states are meters / radians.
struct Scenario {
  std::string id;
  std::string location;
  std::vector<int> track_ids;
  std::vector<std::string> agent_types;
  std::vector<AgentDims> dims;
  States states;  // agents x frames
  FrameMask valid;  // agents x frames
  MapPolylines map;

  Index num_agents() const { return states.agents; }
  Index num_frames() const { return states.slots; }

  // Throws InputError on inconsistent sizes.
  void check_shapes() const;
  bool operator==(const Scenario& other) const;
};

inline constexpr double kFrameDt = 0.1;            // seconds
inline constexpr double kMaxStepDisplacement = 5.0;  // meters per frame
inline constexpr double kSceneScale = 50.0;          // meters per scene unit
inline constexpr int kMaxAgents = 32;

// ---------------------------------------------------------------------------
// Scene normalization

// Centroid of valid positions over the first `obs_frames` frames, scaled by kSceneScale.
SceneFrame scene_frame(const Scenario& scenario, int obs_frames, double scale = kSceneScale);

// Copy of the scenario with positions and map expressed in `frame` units.
Scenario to_scene_units(const Scenario& scenario, const SceneFrame& frame);

// Inverse of to_scene_units on a bare state tensor.
States states_to_world(const States& scene_states, const SceneFrame& frame);
States states_to_scene(const States& world_states, const SceneFrame& frame);

// Removes 2*pi jumps from each agent's heading sequence (valid frames only).
void unwrap_headings(Scenario& scenario);

// Keeps the `max_agents` agents closest to the centroid of valid positions.
void cap_agents(Scenario& scenario, int max_agents = kMaxAgents);

// ---------------------------------------------------------------------------
// Map handling

// Resamples each polyline by arc length to `points` points and transforms it
// into `frame` units. Zero-length polylines are dropped with a warning.
MapPolylines normalize_map(const std::vector<Polyline>& raw, const SceneFrame& frame, int points);

Polyline resample_polyline(const Polyline& line, int points);

// ---------------------------------------------------------------------------
// Synthetic scenarios

enum class LaneLayout { straight, arc, intersection };
const char* to_string(LaneLayout layout);

struct SynthConfig {
  int frames = 50;
  int min_agents = 2;
  int max_agents = 8;
  std::vector<LaneLayout> layouts = {LaneLayout::straight, LaneLayout::arc,
                                     LaneLayout::intersection};
  double lateral_noise = 0.15;     // meters, amplitude of smooth lateral drift
  double brake_probability = 0.5;  // chance an agent gets a slow-down event
  bool random_rotation = true;
  int map_points = 20;
  int max_retries = 200;
};

Scenario synth_generate(const SynthConfig& cfg, std::uint64_t seed, const std::string& id = "synth");

// ---------------------------------------------------------------------------
// Persistence: CSV tracks + JSON map sidecar (<stem>.map.json)

inline constexpr int kScenarioFormatVersion = 1;

void save_scenario(const Scenario& scenario, const std::filesystem::path& csv_path);
Scenario load_scenario(const std::filesystem::path& csv_path);
std::filesystem::path map_path_for(const std::filesystem::path& csv_path);

// ---------------------------------------------------------------------------
// Controllers

// Drives one agent from outside the generative model.
class EgoController {
public:
  virtual ~EgoController() = default;
  // State at simulation step `step` (1-based; step 0 is the last observation),
  // given the realized world-frame history so far.
  virtual State next_state(const States& history, int step) const = 0;
};

// Replays a logged track at a fraction of its original speed. track row 0 is
// the state at step 0.
class ReplayController final : public EgoController {
public:
  ReplayController(Eigen::Matrix<double, Eigen::Dynamic, 3> track, double time_scale);

  State state_at(double log_time) const;
  State next_state(const States& history, int step) const override;
  double time_scale() const { return time_scale_; }

private:
  Eigen::Matrix<double, Eigen::Dynamic, 3> track_;
  double time_scale_;
};

std::shared_ptr<EgoController> replay_controller(Eigen::Matrix<double, Eigen::Dynamic, 3> track,
                                                 double time_scale);

// ---------------------------------------------------------------------------
// Geometry

// Oriented-rectangle overlap by separating axes; touching counts as overlap.
bool collision_check(const State& a, const AgentDims& dims_a, const State& b, const AgentDims& dims_b);

struct CollisionEvent {
  int step = 0;
  int agent_a = 0;
  int agent_b = 0;
  bool operator==(const CollisionEvent&) const = default;
};

// All colliding valid pairs (a < b) at frame `frame`.
std::vector<CollisionEvent> collisions_at(const Scenario& scenario, Index frame);

} // namespace roadsim
