#pragma once

#include "roadsim/rng.hpp"
#include "roadsim/schedule.hpp"
#include "roadsim/world.hpp"

#include <Eigen/Core>

namespace roadsim {

// A rolling window of A agents x W slots in scene units.
struct SceneWindow {
  States states;
  LocalTimeVector local_times;
  AgentMask obs_mask;    // W entries, true for observation slots
  AgentMask agent_mask;  // A entries
  double obs_sigma = 0.0;  // noise carried by the observation slots (augmentation)

  Index agents() const { return states.agents; }
  Index slots() const { return states.slots; }
  Index obs_count() const { return obs_mask.count(); }

  // Per-slot noise levels seen by the denoiser: the schedule value for
  // non-observation slots, obs_sigma for observation slots.
  Eigen::ArrayXd noise_levels(const ScheduleConfig& cfg) const;
};

// Window with the first `obs_count` slots marked as observations, all agents valid.
SceneWindow make_window(States states, LocalTimeVector local_times, int obs_count);

// What the denoiser is trained on.
enum class TrainTask {
  rolling,  // warm-up with probability beta, otherwise rolling
  joint     // all future slots share one diffusion time (AR, one-shot, MPC)
};

const char* to_string(TrainTask task);

struct BatchConfig {
  ScheduleConfig schedule;
  TrainTask task = TrainTask::rolling;
  double p_ca = 0.5;  // probability of conditioning augmentation per example
  bool log_uniform_ca = false;
};

struct TrainingBatch {
  SceneWindow noisy;
  States clean_target;
  Eigen::ArrayXd slot_sigmas;
  Eigen::ArrayXd weights;
  MapPolylines map;
  std::vector<AgentDims> cond;
  Stage stage = Stage::rolling;
  double tau = 0.0;
  Index window_start = 0;
};

enum class AugmentMode { train, test };

// clean + sigma * eps with eps ~ N(0, I); sigma = 0 returns `clean` untouched.
States forward_sample(const States& clean, double sigma, Rng& rng);

// Noises every slot w at sigma_of_local_time(g_stage(tau, w)).
SceneWindow rolling_forward_sample(const States& clean_window, double tau, Stage stage,
                                   const ScheduleConfig& cfg, Rng& rng);

// Noise augmentation of the observation slots. Train mode: with probability
// p_ca draw one sigma_ca ~ U(sigma_min, sigma_max) (log-uniform when
// requested) for all observation slots. Test mode: always sigma_min.
SceneWindow augment_observations(const SceneWindow& window, AugmentMode mode, double p_ca,
                                 const ScheduleConfig& cfg, Rng& rng, bool log_uniform = false);

// Samples one training example from a scenario already in scene units.
TrainingBatch make_training_batch(const Scenario& scenario, const BatchConfig& cfg, Rng& rng);

// sum_w weight_w * mean over (valid agent, channel) of squared error at slot w.
double road_loss(const States& prediction, const TrainingBatch& batch);

// Gradient of road_loss with respect to the prediction.
States road_loss_grad(const States& prediction, const TrainingBatch& batch);

} // namespace roadsim
