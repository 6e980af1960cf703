#include "roadsim/diffusion.hpp"

#include "roadsim/error.hpp"

#include <cmath>

namespace roadsim {

Eigen::ArrayXd SceneWindow::noise_levels(const ScheduleConfig& cfg) const {
  Eigen::ArrayXd out = slot_sigmas(local_times, cfg);
  for (Index w = 0; w < out.size(); ++w)
    if (obs_mask[w]) out[w] = obs_sigma;
  return out;
}

SceneWindow make_window(States states, LocalTimeVector local_times, int obs_count) {
  SceneWindow win;
  win.obs_mask = AgentMask::Constant(states.slots, false);
  win.obs_mask.head(obs_count).setConstant(true);
  win.agent_mask = AgentMask::Constant(states.agents, true);
  win.states = std::move(states);
  win.local_times = std::move(local_times);
  return win;
}

const char* to_string(TrainTask task) {
  return task == TrainTask::rolling ? "rolling" : "joint";
}

States forward_sample(const States& clean, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("forward_sample: sigma must be non-negative");
  if (sigma == 0.0) return clean;
  States out = clean;
  std::normal_distribution<double> normal;
  for (Index i = 0; i < out.data.size(); ++i) out.data.data()[i] += sigma * normal(rng);
  return out;
}

SceneWindow rolling_forward_sample(const States& clean_window, double tau, Stage stage,
                                   const ScheduleConfig& cfg, Rng& rng) {
  if (clean_window.slots != cfg.window) throw InputError("rolling_forward_sample: window size mismatch");
  LocalTimeVector times = stage_local_times(stage, tau, cfg);
  const Eigen::ArrayXd sig = slot_sigmas(times, cfg);
  SceneWindow win = make_window(clean_window, std::move(times), cfg.obs_count);
  std::normal_distribution<double> normal;
  for (Index w = 0; w < win.slots(); ++w) {
    if (sig[w] == 0.0) continue;
    for (Index a = 0; a < win.agents(); ++a)
      for (int c = 0; c < 3; ++c) win.states.at(a, w)(c) += sig[w] * normal(rng);
  }
  return win;
}

SceneWindow augment_observations(const SceneWindow& window, AugmentMode mode, double p_ca,
                                 const ScheduleConfig& cfg, Rng& rng, bool log_uniform) {
  if (!(p_ca >= 0.0 && p_ca <= 1.0)) throw ConfigError("augment_observations: p_ca must lie in [0, 1]");
  if (window.obs_count() < 1) throw InputError("augment_observations: window has no observation slots");

  double sigma = 0.0;
  if (mode == AugmentMode::test) {
    sigma = cfg.sigma_min;
  } else {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (p_ca > 0.0 && unit(rng) < p_ca) {
      const double u = unit(rng);
      sigma = log_uniform ? std::exp(std::log(cfg.sigma_min) + u * (std::log(cfg.sigma_max) - std::log(cfg.sigma_min)))
                          : cfg.sigma_min + u * (cfg.sigma_max - cfg.sigma_min);
    }
  }

  SceneWindow out = window;
  out.obs_sigma = sigma;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> normal;
  for (Index w = 0; w < out.slots(); ++w) {
    if (!out.obs_mask[w]) continue;
    for (Index a = 0; a < out.agents(); ++a)
      for (int c = 0; c < 3; ++c) out.states.at(a, w)(c) += sigma * normal(rng);
  }
  return out;
}

TrainingBatch make_training_batch(const Scenario& scenario, const BatchConfig& cfg, Rng& rng) {
  const ScheduleConfig& sc = cfg.schedule;
  const Index W = sc.window;
  if (scenario.num_frames() < W)
    throw InputError("make_training_batch: scenario '" + scenario.id + "' shorter than the window");
  if (scenario.num_agents() == 0) throw InputError("make_training_batch: scenario has no agents");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrainingBatch batch;
  batch.window_start = std::uniform_int_distribution<Index>(0, scenario.num_frames() - W)(rng);
  if (cfg.task == TrainTask::joint) batch.stage = Stage::joint;
  else batch.stage = unit(rng) < sc.task_ratio ? Stage::warmup : Stage::rolling;
  batch.tau = unit(rng);

  batch.clean_target = scenario.states.slice(batch.window_start, W);
  SceneWindow noisy = rolling_forward_sample(batch.clean_target, batch.tau, batch.stage, sc, rng);
  for (Index a = 0; a < scenario.num_agents(); ++a)
    noisy.agent_mask[a] = scenario.valid.row(a).segment(batch.window_start, W).all();
  if (sc.obs_count > 0)
    noisy = augment_observations(noisy, AugmentMode::train, cfg.p_ca, sc, rng, cfg.log_uniform_ca);

  batch.slot_sigmas = noisy.noise_levels(sc);
  batch.weights.resize(W);
  for (Index w = 0; w < W; ++w) batch.weights[w] = loss_weight(batch.slot_sigmas[w], sc);
  batch.noisy = std::move(noisy);
  batch.map = scenario.map;
  batch.cond = scenario.dims;
  return batch;
}

namespace {

void check_prediction(const States& prediction, const TrainingBatch& batch) {
  if (!prediction.same_shape(batch.clean_target))
    throw InputError("road_loss: prediction shape does not match the target");
  if (batch.weights.size() != prediction.slots || batch.noisy.agent_mask.size() != prediction.agents)
    throw InputError("road_loss: batch weights or agent mask have the wrong length");
}

} // namespace

double road_loss(const States& prediction, const TrainingBatch& batch) {
  check_prediction(prediction, batch);
  const Index valid = batch.noisy.agent_mask.count();
  if (valid == 0) return 0.0;
  double loss = 0.0;
  for (Index w = 0; w < prediction.slots; ++w) {
    if (batch.weights[w] == 0.0) continue;
    double sq = 0.0;
    for (Index a = 0; a < prediction.agents; ++a)
      if (batch.noisy.agent_mask[a])
        sq += (prediction.at(a, w) - batch.clean_target.at(a, w)).squaredNorm();
    loss += batch.weights[w] * sq / (3.0 * valid);
  }
  return loss;
}

States road_loss_grad(const States& prediction, const TrainingBatch& batch) {
  check_prediction(prediction, batch);
  States grad(prediction.agents, prediction.slots);
  const Index valid = batch.noisy.agent_mask.count();
  if (valid == 0) return grad;
  for (Index w = 0; w < prediction.slots; ++w) {
    if (batch.weights[w] == 0.0) continue;
    const double scale = 2.0 * batch.weights[w] / (3.0 * valid);
    for (Index a = 0; a < prediction.agents; ++a)
      if (batch.noisy.agent_mask[a])
        grad.at(a, w) = scale * (prediction.at(a, w) - batch.clean_target.at(a, w));
  }
  return grad;
}

} // namespace roadsim
