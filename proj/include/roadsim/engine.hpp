#pragma once

#include "roadsim/diffusion.hpp"
#include "roadsim/sampler.hpp"
#include "roadsim/world.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace roadsim {

struct PlannerKind {
  enum class Variant { one_shot, autoregressive, mpc, rolling };

  Variant variant = Variant::rolling;
  int stride = 1;    // mpc: frames executed between replans
  int window = 15;   // rolling: W
  int obs = 10;      // rolling: n

  static PlannerKind one_shot() { return {Variant::one_shot, 1, 0, 0}; }
  static PlannerKind autoregressive() { return {Variant::autoregressive, 1, 0, 0}; }
  static PlannerKind mpc(int x) { return {Variant::mpc, x, 0, 0}; }
  static PlannerKind rolling(int w, int n) { return {Variant::rolling, 1, w, n}; }

  // "one-shot", "ar", "mpc(5)", "rolling(15)" or "rolling(15,10)".
  static PlannerKind parse(const std::string& text, int default_obs = 10);
  std::string name() const;
  void validate() const;
  bool reactive() const { return variant != Variant::one_shot; }
  bool operator==(const PlannerKind&) const = default;
};

struct EngineConfig {
  ScheduleConfig schedule;  // n (obs_count) applies to every planner; window to rolling
  SamplerConfig sampler;
  int lookahead = 10;  // future frames denoised by mpc / one-shot baselines
  int horizon = 40;

  void validate() const;
};

// Window size the planner's denoiser must have been trained on.
int planner_window(const PlannerKind& planner, const EngineConfig& cfg);
// Training task matching the planner (rolling vs. joint).
TrainTask planner_task(const PlannerKind& planner);

// Closed-form denoiser evaluations of a rollout over `horizon` frames.
std::int64_t analytic_nfe(const PlannerKind& planner, const EngineConfig& cfg, int horizon);

// Ego override for a rolling step: agent index and its realized state (scene units).
struct EgoOverride {
  Index agent = -1;
  State state;
};

// Builds the rolling-stage window from n observations (A x n, scene units):
// future slots start as white noise at sigma_max, the warm-up map is
// integrated until it meets the rolling pattern at tau = 1.
SceneWindow warmup(const States& obs, const AgentMask& agent_mask, const MapPolylines& map,
                   const std::vector<AgentDims>& cond, const Denoiser& denoiser, const EngineConfig& cfg,
                   Rng& rng, NfeCounter& nfe);

struct RollingStepResult {
  States emitted;  // A x 1, scene units, ego row already overridden
  SceneWindow next;
};

// One rolling advance: denoise slot n, emit it, shift, append fresh noise.
RollingStepResult rolling_step(const SceneWindow& window, const std::optional<EgoOverride>& ego,
                               const MapPolylines& map, const std::vector<AgentDims>& cond,
                               const Denoiser& denoiser, const EngineConfig& cfg, Rng& rng, NfeCounter& nfe);

struct RolloutReport {
  std::string scenario_id;
  std::string planner;
  std::uint64_t seed = 0;
  int obs_count = 0;
  Index ego = -1;      // externally controlled agent, -1 if none
  Scenario realized;   // world units: n observed frames followed by `horizon` simulated frames
  std::vector<std::int64_t> step_nfe;  // per simulated frame; warm-up is charged to the first
  std::int64_t total_nfe = 0;
  std::vector<CollisionEvent> collisions;
  double wall_time_s = 0.0;

  int horizon() const { return static_cast<int>(step_nfe.size()); }
};

// JSON document; see docs/formats.md.
void save_report(const RolloutReport& report, const std::filesystem::path& path);
RolloutReport load_report(const std::filesystem::path& path);

// Closed-loop rollout from the first n frames of `init` (world units). The
// ego controller, when given, drives agent `ego` at every simulated frame.
RolloutReport rollout(const Scenario& init, const PlannerKind& planner, const EgoController* ego_controller,
                      Index ego, const Denoiser& denoiser, const EngineConfig& cfg, std::uint64_t seed);

// Agent nearest the scene centroid among those with another agent following
// in its lane during the logged future; -1 when there is none.
Index select_adversary(const Scenario& scenario, int obs_count);

} // namespace roadsim
