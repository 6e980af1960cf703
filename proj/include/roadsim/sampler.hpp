#pragma once

#include "roadsim/denoiser.hpp"

#include <cstdint>

namespace roadsim {

struct SamplerConfig {
  int warmup_steps = 40;  // full denoise from white noise
  // Heun intervals per emitted frame in the rolling stage, quoted for a
  // future span W - n = reference_span. Other spans keep the same number of
  // intervals per unit of local time (W=20, n=10 gets 4). reference_span = 0
  // uses rolling_substeps as is for every window.
  int rolling_substeps = 8;
  int reference_span = 5;

  void validate() const;
  int substeps_for(int window, int obs_count) const;
};

// Function-evaluation counter shared by a sampling run.
struct NfeCounter {
  std::int64_t count = 0;
};

// Evaluations used by integrate_window over `steps` intervals.
constexpr std::int64_t integration_nfe(int steps) { return steps > 0 ? 2 * steps - 1 : 0; }

// Probability-flow Heun step with one shared noise level for every slot.
// Second-order correction is applied when sigma_to > 0.
States heun_step(const SceneWindow& window, double sigma_from, double sigma_to, const Denoiser& denoiser,
                 const MapPolylines& map, const std::vector<AgentDims>& cond, NfeCounter& nfe);

// Joint step with per-slot noise levels. Slots whose level is unchanged stay
// frozen; observation slots are never moved. When `second_order` is false
// (or no slot keeps positive noise) only the Euler predictor is used.
SceneWindow joint_heun_step(const SceneWindow& window, const Eigen::ArrayXd& sigma_from,
                            const Eigen::ArrayXd& sigma_to, bool second_order, const Denoiser& denoiser,
                            const MapPolylines& map, const std::vector<AgentDims>& cond, NfeCounter& nfe);

// Integrates the window from global time tau_from down to tau_to on a uniform
// grid of `steps` intervals, each slot following the stage's local-time map.
// The last interval is a plain Euler step, so the cost is 2*steps - 1.
SceneWindow integrate_window(const SceneWindow& window, double tau_from, double tau_to, Stage stage, int steps,
                             const Denoiser& denoiser, const MapPolylines& map,
                             const std::vector<AgentDims>& cond, const ScheduleConfig& cfg, NfeCounter& nfe);

} // namespace roadsim
