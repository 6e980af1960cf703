#include "roadsim/pipeline.hpp"

#include "roadsim/error.hpp"
#include "roadsim/rng.hpp"

#include <cmath>

namespace roadsim {

namespace {

int valid_at(const Scenario& sc, Index frame) {
  int count = 0;
  for (Index a = 0; a < sc.num_agents(); ++a) count += sc.valid(a, frame) ? 1 : 0;
  return count;
}

} // namespace

std::vector<Scenario> synth_corpus(const SynthConfig& cfg, int count, std::uint64_t seed, int min_valid_agents,
                                   int obs_count, int first_index) {
  if (count < 0) throw ConfigError("synth_corpus: count must be non-negative");
  if (obs_count < 1 || obs_count > cfg.frames) throw ConfigError("synth_corpus: obs_count outside the scenario");
  if (min_valid_agents > cfg.max_agents)
    throw ConfigError("synth_corpus: min_valid_agents exceeds world.synth.max_agents");
  std::vector<Scenario> out;
  out.reserve(count);
  int index = first_index;
  int rejected = 0;
  while (static_cast<int>(out.size()) < count) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%06d", index);
    Scenario sc = synth_generate(cfg, derive_seed(seed, "synth", static_cast<std::uint64_t>(index)), id);
    ++index;
    if (valid_at(sc, obs_count - 1) < min_valid_agents) {
      if (++rejected > 100 * (count + 1)) throw ConfigError("synth_corpus: scene filter rejects almost everything");
      continue;
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::vector<Scenario> training_set(const std::vector<Scenario>& world, int obs_count) {
  std::vector<Scenario> out;
  out.reserve(world.size());
  for (const Scenario& sc : world) out.push_back(to_scene_units(sc, scene_frame(sc, obs_count)));
  return out;
}

BatchConfig batch_config_for(const PlannerKind& planner, const RunConfig& cfg) {
  const EngineConfig eng = cfg.engine();
  BatchConfig b;
  b.schedule = cfg.schedule;
  b.schedule.window = planner_window(planner, eng);
  b.task = planner_task(planner);
  b.p_ca = cfg.training.p_ca;
  b.log_uniform_ca = cfg.training.log_uniform_ca;
  return b;
}

TrainedModel train_for_planner(const std::vector<Scenario>& scene_units, const PlannerKind& planner,
                               const RunConfig& cfg, std::function<void(int, double)> progress) {
  TrainedModel m;
  m.meta.batch = batch_config_for(planner, cfg);
  m.meta.window = m.meta.batch.schedule.window;
  nn::ToyDenoiserConfig model = cfg.training.model;
  model.seed = cfg.seed;
  m.meta.seed = cfg.seed;
  m.net = nn::toy_denoiser(model, m.meta.batch.schedule);
  m.fit = nn::fit(*m.net, scene_units, m.meta.batch, std::move(progress));
  return m;
}

void check_model_matches(const nn::CheckpointMeta& meta, const PlannerKind& planner, const RunConfig& cfg) {
  const BatchConfig want = batch_config_for(planner, cfg);
  if (meta.window != want.schedule.window)
    throw ConfigError("checkpoint was trained for window " + std::to_string(meta.window) + ", planner " +
                      planner.name() + " needs " + std::to_string(want.schedule.window));
  if (meta.batch.task != want.task)
    throw ConfigError(std::string("checkpoint task '") + to_string(meta.batch.task) + "' does not fit planner " +
                      planner.name());
  if (meta.batch.schedule.obs_count != cfg.schedule.obs_count)
    throw ConfigError("checkpoint obs_count differs from the config");
}

std::vector<ScenarioRollouts> simulate(const std::vector<Scenario>& scenarios, const SimulationPlan& plan,
                                       const Denoiser& denoiser, const EngineConfig& cfg,
                                       std::function<void(std::size_t)> progress) {
  if (plan.samples < 1) throw ConfigError("simulate: samples must be >= 1");
  const int n = cfg.schedule.obs_count;
  std::vector<ScenarioRollouts> out;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const Scenario& sc = scenarios[i];
    ScenarioRollouts runs;
    runs.gt = &sc;
    std::shared_ptr<EgoController> ctrl;
    if (plan.adversary) {
      runs.adversary = select_adversary(sc, n);
      if (runs.adversary < 0) continue;
      Eigen::Matrix<double, Eigen::Dynamic, 3> track(sc.num_frames() - n + 1, 3);
      for (Index t = n - 1; t < sc.num_frames(); ++t) track.row(t - n + 1) = sc.states.at(runs.adversary, t);
      ctrl = replay_controller(std::move(track), plan.time_scale);
    }
    for (int s = 0; s < plan.samples; ++s) {
      const std::uint64_t seed = derive_seed(derive_seed(plan.seed, "rollout", i), "sample", s);
      runs.samples.push_back(rollout(sc, plan.planner, ctrl.get(), runs.adversary, denoiser, cfg, seed));
    }
    out.push_back(std::move(runs));
    if (progress) progress(i + 1);
  }
  return out;
}

MetricReport summarize(const std::vector<ScenarioRollouts>& runs) {
  if (runs.empty()) throw InputError("summarize: no scenarios");
  MetricReport r;
  MissTally misses;
  bool six = true;
  std::vector<RolloutReport> all;
  std::vector<Index> adversaries;
  double ade = 0.0, fde = 0.0;
  for (const ScenarioRollouts& s : runs) {
    if (s.samples.empty()) throw InputError("summarize: scenario without samples");
    const int n = s.samples.front().obs_count;
    const int frames = n + s.samples.front().horizon();
    if (s.gt->num_frames() < frames) throw InputError("summarize: ground truth shorter than the rollout");
    Scenario gt = *s.gt;
    gt.states = s.gt->states.slice(0, frames);
    gt.valid = s.gt->valid.leftCols(frames);
    std::vector<States> samples;
    for (const RolloutReport& rep : s.samples) {
      if (rep.realized.num_agents() != gt.num_agents()) throw InputError("summarize: report/ground-truth mismatch");
      samples.push_back(rep.realized.states);
      all.push_back(rep);
      adversaries.push_back(s.adversary);
    }
    // the adversary follows its own (slowed) script, so it is left out of
    // the displacement metrics
    if (s.adversary >= 0) gt.valid.row(s.adversary).setConstant(false);
    ade += min_scene_ade(samples, gt, n);
    fde += min_scene_fde(samples, gt, n);
    if (samples.size() == 6) misses += miss_tally(samples, gt, n);
    else six = false;
    r.sample_count = static_cast<int>(samples.size());
  }
  r.scenes = static_cast<int>(runs.size());
  r.min_scene_ade = ade / r.scenes;
  r.min_scene_fde = fde / r.scenes;
  r.miss_rate = six ? misses.rate() : std::nan("");
  r.collision_rate = collision_rate(all, adversaries);
  return r;
}

} // namespace roadsim
