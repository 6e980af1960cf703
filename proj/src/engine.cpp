#include "roadsim/engine.hpp"

#include "roadsim/error.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <regex>

namespace roadsim {

PlannerKind PlannerKind::parse(const std::string& text, int default_obs) {
  static const std::regex rolling_re(R"(rolling[(-]?(\d+)(?:,\s*(\d+))?\)?)");
  static const std::regex mpc_re(R"(mpc[(-]?(\d+)\)?)");
  std::smatch m;
  PlannerKind out;
  if (text == "one-shot" || text == "one_shot" || text == "oneshot") {
    out = one_shot();
  } else if (text == "ar" || text == "autoregressive") {
    out = autoregressive();
  } else if (std::regex_match(text, m, mpc_re)) {
    out = mpc(std::stoi(m[1]));
  } else if (std::regex_match(text, m, rolling_re)) {
    out = rolling(std::stoi(m[1]), m[2].matched ? std::stoi(m[2]) : default_obs);
  } else {
    throw ConfigError("unknown planner '" + text + "' (expected one-shot, ar, mpc(X) or rolling(W[,n]))");
  }
  out.validate();
  return out;
}

std::string PlannerKind::name() const {
  switch (variant) {
    case Variant::one_shot: return "one-shot";
    case Variant::autoregressive: return "ar";
    case Variant::mpc: return "mpc(" + std::to_string(stride) + ")";
    case Variant::rolling: return "rolling(" + std::to_string(window) + ")";
  }
  return "?";
}

void PlannerKind::validate() const {
  if (variant == Variant::mpc && stride < 1) throw ConfigError("planner: mpc stride X must be >= 1");
  if (variant == Variant::rolling) {
    if (obs < 1) throw ConfigError("planner: rolling needs n >= 1 observations");
    if (window <= obs) throw ConfigError("planner: rolling needs W > n");
  }
}

void EngineConfig::validate() const {
  schedule.validate();
  sampler.validate();
  if (lookahead < 1) throw ConfigError("engine: lookahead must be >= 1");
  if (horizon < 1) throw ConfigError("engine: horizon must be >= 1");
}

int planner_window(const PlannerKind& planner, const EngineConfig& cfg) {
  const int n = cfg.schedule.obs_count;
  switch (planner.variant) {
    case PlannerKind::Variant::rolling: return planner.window;
    case PlannerKind::Variant::autoregressive: return n + 1;
    case PlannerKind::Variant::mpc: return n + std::max(cfg.lookahead, planner.stride);
    case PlannerKind::Variant::one_shot: return n + cfg.horizon;
  }
  return 0;
}

TrainTask planner_task(const PlannerKind& planner) {
  return planner.variant == PlannerKind::Variant::rolling ? TrainTask::rolling : TrainTask::joint;
}

std::int64_t analytic_nfe(const PlannerKind& planner, const EngineConfig& cfg, int horizon) {
  const std::int64_t full = integration_nfe(cfg.sampler.warmup_steps);
  switch (planner.variant) {
    case PlannerKind::Variant::rolling:
      return full + horizon * integration_nfe(cfg.sampler.substeps_for(planner.window, planner.obs));
    case PlannerKind::Variant::autoregressive: return horizon * full;
    case PlannerKind::Variant::mpc: return ((horizon + planner.stride - 1) / planner.stride) * full;
    case PlannerKind::Variant::one_shot: return full;
  }
  return 0;
}

namespace {

void check_window_pattern(const SceneWindow& window, const ScheduleConfig& sc) {
  if (window.slots() != sc.window || window.obs_count() != sc.obs_count)
    throw StateError("rolling_step: window shape does not match the schedule");
  const LocalTimeVector expected = local_times_rolling(1.0, sc);
  if (window.local_times.values.size() != sc.window ||
      (window.local_times.values - expected.values).abs().maxCoeff() > 1e-12)
    throw StateError("rolling_step: window is not in the rolling noise pattern");
}

// Denoises `window` from tau = 1 to `tau_to` with test-time augmentation of the
// observation slots, then puts the clean observations back.
SceneWindow integrate_observed(const SceneWindow& window, double tau_to, Stage stage, int steps,
                               const MapPolylines& map, const std::vector<AgentDims>& cond,
                               const Denoiser& denoiser, const ScheduleConfig& sc, Rng& rng, NfeCounter& nfe) {
  const Index n = window.obs_count();
  SceneWindow noisy = n > 0 ? augment_observations(window, AugmentMode::test, 0.0, sc, rng) : window;
  SceneWindow out = integrate_window(noisy, 1.0, tau_to, stage, steps, denoiser, map, cond, sc, nfe);
  if (n > 0) out.states.assign_slots(0, window.states.slice(0, n));
  out.obs_sigma = 0.0;
  return out;
}

SceneWindow noise_window(const States& obs, Index future, const AgentMask& agent_mask, double sigma_max,
                         Rng& rng) {
  const Index A = obs.agents, n = obs.slots;
  States states(A, n + future);
  states.assign_slots(0, obs);
  std::normal_distribution<double> normal;
  for (Index a = 0; a < A; ++a)
    for (Index w = n; w < n + future; ++w)
      for (int c = 0; c < 3; ++c) states.at(a, w)(c) = sigma_max * normal(rng);
  SceneWindow win = make_window(std::move(states), LocalTimeVector{}, static_cast<int>(n));
  win.agent_mask = agent_mask;
  return win;
}

// Full joint denoise of `future` frames after the observations.
States plan_joint(const States& obs, Index future, const AgentMask& agent_mask, const MapPolylines& map,
                  const std::vector<AgentDims>& cond, const Denoiser& denoiser, const EngineConfig& cfg, Rng& rng,
                  NfeCounter& nfe) {
  ScheduleConfig sc = cfg.schedule;
  sc.window = static_cast<int>(obs.slots + future);
  SceneWindow win = noise_window(obs, future, agent_mask, sc.sigma_max, rng);
  win.local_times = stage_local_times(Stage::joint, 1.0, sc);
  const SceneWindow out =
      integrate_observed(win, 0.0, Stage::joint, cfg.sampler.warmup_steps, map, cond, denoiser, sc, rng, nfe);
  return out.states.slice(obs.slots, future);
}

} // namespace

SceneWindow warmup(const States& obs, const AgentMask& agent_mask, const MapPolylines& map,
                   const std::vector<AgentDims>& cond, const Denoiser& denoiser, const EngineConfig& cfg, Rng& rng,
                   NfeCounter& nfe) {
  const ScheduleConfig& sc = cfg.schedule;
  if (obs.slots != sc.obs_count) throw InputError("warmup: expected exactly n observation frames");
  if (agent_mask.size() != obs.agents) throw InputError("warmup: agent mask size mismatch");
  SceneWindow win = noise_window(obs, sc.window - sc.obs_count, agent_mask, sc.sigma_max, rng);
  win.local_times = stage_local_times(Stage::warmup, 1.0, sc);
  SceneWindow out = integrate_observed(win, warmup_handoff_time(sc), Stage::warmup, cfg.sampler.warmup_steps, map,
                                       cond, denoiser, sc, rng, nfe);
  // the warm-up map at the hand-off time equals the rolling map at tau = 1
  out.local_times = local_times_rolling(1.0, sc);
  return out;
}

RollingStepResult rolling_step(const SceneWindow& window, const std::optional<EgoOverride>& ego,
                               const MapPolylines& map, const std::vector<AgentDims>& cond,
                               const Denoiser& denoiser, const EngineConfig& cfg, Rng& rng, NfeCounter& nfe) {
  const ScheduleConfig& sc = cfg.schedule;
  check_window_pattern(window, sc);
  const Index n = sc.obs_count, W = sc.window, A = window.agents();
  if (ego && (ego->agent < 0 || ego->agent >= A)) throw InputError("rolling_step: ego index out of range");

  const SceneWindow done = integrate_observed(window, 0.0, Stage::rolling, cfg.sampler.substeps_for(W, n), map,
                                              cond, denoiser, sc, rng, nfe);
  RollingStepResult result;
  result.emitted = done.states.slice(n, 1);
  if (ego) result.emitted.at(ego->agent, 0) = ego->state;

  SceneWindow next = done;
  next.states.assign_slots(0, done.states.slice(1, n - 1));
  next.states.assign_slots(n - 1, result.emitted);
  if (W - n > 1) next.states.assign_slots(n, done.states.slice(n + 1, W - n - 1));
  std::normal_distribution<double> normal;
  for (Index a = 0; a < A; ++a)
    for (int c = 0; c < 3; ++c) next.states.at(a, W - 1)(c) = sc.sigma_max * normal(rng);
  next.local_times = local_times_rolling(1.0, sc);
  next.obs_sigma = 0.0;
  result.next = std::move(next);
  return result;
}

namespace {

State state_to_scene(const State& s, const SceneFrame& frame) {
  const Eigen::Vector2d p = frame.to_scene(Eigen::Vector2d(s(0), s(1)));
  return State(p.x(), p.y(), s(2));
}

} // namespace

RolloutReport rollout(const Scenario& init, const PlannerKind& planner, const EgoController* ego_controller,
                      Index ego, const Denoiser& denoiser, const EngineConfig& cfg_in, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  cfg_in.validate();
  planner.validate();
  init.check_shapes();
  const int n = cfg_in.schedule.obs_count;
  const int T = cfg_in.horizon;
  const Index A = init.num_agents();
  if (init.num_frames() < n) throw InputError("rollout: scenario has fewer than n observed frames");
  if (ego_controller && (ego < 0 || ego >= A)) throw InputError("rollout: ego index out of range");

  EngineConfig cfg = cfg_in;
  if (planner.variant == PlannerKind::Variant::rolling) {
    if (planner.obs != n)
      throw ConfigError("rollout: planner " + planner.name() + " has n=" + std::to_string(planner.obs) +
                        " but the schedule uses n=" + std::to_string(n));
    cfg.schedule.window = planner.window;
  }
  cfg.schedule.validate();

  // model-side view in scene units
  const SceneFrame frame = scene_frame(init, n);
  Scenario prefix = init;
  prefix.states = init.states.slice(0, n);
  prefix.valid = init.valid.leftCols(n);
  const Scenario scene = to_scene_units(prefix, frame);
  AgentMask agent_mask = init.valid.col(n - 1);

  RolloutReport report;
  report.scenario_id = init.id;
  report.planner = planner.name();
  report.seed = seed;
  report.obs_count = n;
  report.ego = ego_controller ? ego : -1;
  report.step_nfe.assign(T, 0);

  Scenario& real = report.realized;
  real = prefix;
  real.states = States(A, n + T);
  real.states.assign_slots(0, prefix.states);
  real.valid.resize(A, n + T);
  real.valid.leftCols(n) = prefix.valid;
  for (Index f = n; f < n + T; ++f) real.valid.col(f) = agent_mask;

  Rng rng(derive_seed(seed, "rollout"));
  NfeCounter nfe;
  std::int64_t charged = 0;

  // scene-unit history, kept in step with `real`
  States history = scene.states;
  auto observed = [&]() { return history.slice(history.slots - n, n); };
  auto ego_state = [&](int k) -> std::optional<State> {
    if (!ego_controller) return std::nullopt;
    return ego_controller->next_state(real.states.slice(0, n + k - 1), k);
  };
  auto commit = [&](int k, States frame_scene, const std::optional<State>& ego_world) {
    States frame_world = states_to_world(frame_scene, frame);
    if (ego_world) {
      frame_scene.at(ego, 0) = state_to_scene(*ego_world, frame);
      frame_world.at(ego, 0) = *ego_world;  // exact, no round trip through scene units
    }
    States grown(A, history.slots + 1);
    grown.assign_slots(0, history);
    grown.assign_slots(history.slots, frame_scene);
    history = std::move(grown);
    real.states.assign_slots(n + k - 1, frame_world);
    for (const CollisionEvent& e : collisions_at(real, n + k - 1)) {
      CollisionEvent ev = e;
      ev.step = k;
      report.collisions.push_back(ev);
    }
    report.step_nfe[k - 1] = nfe.count - charged;
    charged = nfe.count;
  };

  switch (planner.variant) {
    case PlannerKind::Variant::rolling: {
      SceneWindow win = warmup(observed(), agent_mask, scene.map, scene.dims, denoiser, cfg, rng, nfe);
      for (int k = 1; k <= T; ++k) {
        const std::optional<State> ego_world = ego_state(k);
        std::optional<EgoOverride> over;
        if (ego_world) over = EgoOverride{ego, state_to_scene(*ego_world, frame)};
        RollingStepResult r = rolling_step(win, over, scene.map, scene.dims, denoiser, cfg, rng, nfe);
        win = std::move(r.next);
        commit(k, std::move(r.emitted), ego_world);
      }
      break;
    }
    case PlannerKind::Variant::autoregressive:
    case PlannerKind::Variant::mpc:
    case PlannerKind::Variant::one_shot: {
      const Index future = planner_window(planner, cfg) - n;
      const int stride = planner.variant == PlannerKind::Variant::mpc ? planner.stride
                         : planner.variant == PlannerKind::Variant::autoregressive ? 1
                                                                                    : T;
      States plan;
      for (int k = 1; k <= T; ++k) {
        const int offset = (k - 1) % stride;
        if (offset == 0)
          plan = plan_joint(observed(), future, agent_mask, scene.map, scene.dims, denoiser, cfg, rng, nfe);
        commit(k, plan.slice(offset, 1), ego_state(k));
      }
      break;
    }
  }

  report.total_nfe = nfe.count;
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

Index select_adversary(const Scenario& scenario, int obs_count) {
  const Index A = scenario.num_agents(), T = scenario.num_frames();
  if (obs_count < 1 || obs_count > T) throw InputError("select_adversary: bad observation count");
  const Index last = obs_count - 1;

  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  int count = 0;
  for (Index a = 0; a < A; ++a)
    if (scenario.valid(a, last)) {
      centroid += scenario.states.at(a, last).head<2>().transpose();
      ++count;
    }
  if (count == 0) return -1;
  centroid /= count;

  Index best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index a = 0; a < A; ++a) {
    if (!scenario.valid(a, last)) continue;
    bool followed = false;
    for (Index f = last; f < T && !followed; ++f) {
      if (!scenario.valid(a, f)) continue;
      const State sa = scenario.states.at(a, f);
      const Eigen::Vector2d heading(std::cos(sa(2)), std::sin(sa(2)));
      for (Index b = 0; b < A && !followed; ++b) {
        if (b == a || !scenario.valid(b, f)) continue;
        const State sb = scenario.states.at(b, f);
        const Eigen::Vector2d d(sb(0) - sa(0), sb(1) - sa(1));
        const double along = d.dot(heading);
        const double across = std::abs(heading.x() * d.y() - heading.y() * d.x());
        followed = along < 0.0 && along > -25.0 && across < 2.0 && std::cos(sb(2) - sa(2)) > 0.8;
      }
    }
    if (!followed) continue;
    const double dist = (scenario.states.at(a, last).head<2>().transpose() - centroid).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = a;
    }
  }
  return best;
}

} // namespace roadsim
