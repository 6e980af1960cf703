#pragma once

// Plumbing shared by the CLI and the acceptance experiments: corpus
// synthesis, per-planner training and batched rollouts with metrics.

#include "roadsim/config.hpp"
#include "roadsim/engine.hpp"
#include "roadsim/metrics.hpp"
#include "roadsim/nn/toy_network.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace roadsim {

// Scenario i is drawn from sub-stream ("synth", first_index + i) of `seed`;
// scenes with fewer than `min_valid_agents` agents valid at the last
// observed frame are redrawn from the next index.
std::vector<Scenario> synth_corpus(const SynthConfig& cfg, int count, std::uint64_t seed, int min_valid_agents,
                                   int obs_count, int first_index = 0);

// Scene-unit copies for training (normalization frame from the first n frames).
std::vector<Scenario> training_set(const std::vector<Scenario>& world, int obs_count);

// Window and task a planner's model is trained on.
BatchConfig batch_config_for(const PlannerKind& planner, const RunConfig& cfg);

struct TrainedModel {
  std::shared_ptr<nn::ToyNetwork<float>> net;
  nn::CheckpointMeta meta;
  nn::FitResult fit;
};

TrainedModel train_for_planner(const std::vector<Scenario>& scene_units, const PlannerKind& planner,
                               const RunConfig& cfg, std::function<void(int, double)> progress = {});

// Throws ConfigError when the checkpoint cannot drive the planner.
void check_model_matches(const nn::CheckpointMeta& meta, const PlannerKind& planner, const RunConfig& cfg);

struct SimulationPlan {
  PlannerKind planner;
  bool adversary = false;  // slowed replay of the selected agent
  double time_scale = 0.5;
  int samples = 3;
  std::uint64_t seed = 0;
};

struct ScenarioRollouts {
  const Scenario* gt = nullptr;
  Index adversary = -1;
  std::vector<RolloutReport> samples;
};

// Rollouts for every scenario; seeds are ("rollout", scenario index, sample)
// of the root seed, so planners see paired seeds. In adversary mode scenarios
// without a followed agent are skipped.
std::vector<ScenarioRollouts> simulate(const std::vector<Scenario>& scenarios, const SimulationPlan& plan,
                                       const Denoiser& denoiser, const EngineConfig& cfg,
                                       std::function<void(std::size_t)> progress = {});

// Aggregate over scenes: displacement metrics on the simulated frames,
// miss rate only when every scene has exactly 6 samples, collision rate
// over all samples against the adversary (or any pair without one).
MetricReport summarize(const std::vector<ScenarioRollouts>& runs);

} // namespace roadsim
