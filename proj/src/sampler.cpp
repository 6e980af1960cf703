#include "roadsim/sampler.hpp"

#include "roadsim/error.hpp"

#include <algorithm>

namespace roadsim {

void SamplerConfig::validate() const {
  if (warmup_steps < 2) throw ConfigError("sampler: warmup_steps must be at least 2");
  if (rolling_substeps < 1) throw ConfigError("sampler: rolling_substeps must be at least 1");
  if (reference_span < 0) throw ConfigError("sampler: reference_span must be non-negative");
}

int SamplerConfig::substeps_for(int window, int obs_count) const {
  if (window <= obs_count) throw ConfigError("sampler: window must exceed the observation count");
  if (reference_span == 0) return rolling_substeps;
  const int span = window - obs_count;
  const int density = rolling_substeps * reference_span;
  return std::max(1, (density + span / 2) / span);
}

namespace {

States evaluate(const SceneWindow& window, const States& x, const Eigen::ArrayXd& sigmas,
                const Denoiser& denoiser, const MapPolylines& map, const std::vector<AgentDims>& cond,
                NfeCounter& nfe) {
  SceneWindow probe = window;
  probe.states = x;
  ++nfe.count;
  return denoiser.denoise(DenoiserInput{probe, sigmas, map, cond});
}

} // namespace

SceneWindow joint_heun_step(const SceneWindow& window, const Eigen::ArrayXd& sigma_from,
                            const Eigen::ArrayXd& sigma_to, bool second_order, const Denoiser& denoiser,
                            const MapPolylines& map, const std::vector<AgentDims>& cond, NfeCounter& nfe) {
  const Index W = window.slots();
  if (sigma_from.size() != W || sigma_to.size() != W) throw InputError("joint_heun_step: sigma length mismatch");

  std::vector<bool> moving(W, false);
  bool any_moving = false, any_positive_target = false;
  for (Index w = 0; w < W; ++w) {
    if (window.obs_mask[w]) continue;
    if (sigma_to[w] > sigma_from[w]) throw DomainError("joint_heun_step: noise must not increase");
    if (sigma_to[w] == sigma_from[w]) continue;
    moving[w] = true;
    any_moving = true;
    any_positive_target = any_positive_target || sigma_to[w] > 0.0;
  }
  SceneWindow out = window;
  if (!any_moving) return out;

  Eigen::ArrayXd from = sigma_from, to = sigma_to;
  for (Index w = 0; w < W; ++w)
    if (window.obs_mask[w]) from[w] = to[w] = window.obs_sigma;

  const States& x = window.states;
  const States d1 = evaluate(window, x, from, denoiser, map, cond, nfe);
  States x_next = x;
  States slope1(x.agents, W);
  for (Index w = 0; w < W; ++w) {
    if (!moving[w]) continue;
    for (Index a = 0; a < x.agents; ++a) {
      slope1.at(a, w) = (x.at(a, w) - d1.at(a, w)) / from[w];
      x_next.at(a, w) = x.at(a, w) + (to[w] - from[w]) * slope1.at(a, w);
    }
  }

  if (second_order && any_positive_target) {
    const States d2 = evaluate(window, x_next, to, denoiser, map, cond, nfe);
    for (Index w = 0; w < W; ++w) {
      if (!moving[w] || to[w] == 0.0) continue;
      for (Index a = 0; a < x.agents; ++a) {
        const auto slope2 = (x_next.at(a, w) - d2.at(a, w)) / to[w];
        x_next.at(a, w) = x.at(a, w) + (to[w] - from[w]) * 0.5 * (slope1.at(a, w) + slope2);
      }
    }
  }

  out.states = std::move(x_next);
  return out;
}

States heun_step(const SceneWindow& window, double sigma_from, double sigma_to, const Denoiser& denoiser,
                 const MapPolylines& map, const std::vector<AgentDims>& cond, NfeCounter& nfe) {
  if (!(sigma_from > sigma_to && sigma_to >= 0.0))
    throw DomainError("heun_step: require sigma_from > sigma_to >= 0");
  SceneWindow plain = window;
  plain.obs_mask.setConstant(false);
  const Eigen::ArrayXd from = Eigen::ArrayXd::Constant(window.slots(), sigma_from);
  const Eigen::ArrayXd to = Eigen::ArrayXd::Constant(window.slots(), sigma_to);
  return joint_heun_step(plain, from, to, sigma_to > 0.0, denoiser, map, cond, nfe).states;
}

SceneWindow integrate_window(const SceneWindow& window, double tau_from, double tau_to, Stage stage, int steps,
                             const Denoiser& denoiser, const MapPolylines& map,
                             const std::vector<AgentDims>& cond, const ScheduleConfig& cfg, NfeCounter& nfe) {
  if (!(tau_from <= 1.0 && tau_to >= 0.0 && tau_from >= tau_to))
    throw DomainError("integrate_window: require 1 >= tau_from >= tau_to >= 0");
  if (window.slots() != cfg.window) throw InputError("integrate_window: window size mismatch");
  if (window.obs_count() != cfg.obs_count) throw InputError("integrate_window: observation count mismatch");
  if (tau_from == tau_to || steps <= 0) return window;

  SceneWindow cur = window;
  LocalTimeVector times_from = stage_local_times(stage, tau_from, cfg);
  for (int i = 0; i < steps; ++i) {
    const double tau_next = i + 1 == steps ? tau_to : tau_from + (tau_to - tau_from) * (i + 1) / steps;
    LocalTimeVector times_to = stage_local_times(stage, tau_next, cfg);
    const bool last = i + 1 == steps;
    cur = joint_heun_step(cur, slot_sigmas(times_from, cfg), slot_sigmas(times_to, cfg), !last, denoiser, map,
                          cond, nfe);
    cur.local_times = times_to;
    times_from = std::move(times_to);
  }
  return cur;
}

} // namespace roadsim
