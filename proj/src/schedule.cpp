#include "roadsim/schedule.hpp"

#include "roadsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace roadsim {

namespace {

void require_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0))
    throw DomainError(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

void ScheduleConfig::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max))
    throw ConfigError("schedule: require 0 < sigma_min < sigma_max");
  if (!(rho > 0.0)) throw ConfigError("schedule: rho must be positive");
  if (!(sigma_data > 0.0)) throw ConfigError("schedule: sigma_data must be positive");
  if (window < 1) throw ConfigError("schedule: window must be at least 1");
  if (obs_count < 0) throw ConfigError("schedule: obs_count must be non-negative");
  if (obs_count >= window) throw ConfigError("schedule: obs_count must be smaller than window");
  if (!(task_ratio >= 0.0 && task_ratio <= 1.0))
    throw ConfigError("schedule: task_ratio must lie in [0, 1]");
}

const char* to_string(Stage stage) {
  switch (stage) {
  case Stage::warmup: return "warmup";
  case Stage::rolling: return "rolling";
  case Stage::joint: return "joint";
  }
  return "?";
}

double edm_sigma(double u, const ScheduleConfig& cfg) {
  require_unit_interval(u, "edm_sigma progress");
  const double inv_rho = 1.0 / cfg.rho;
  const double hi = std::pow(cfg.sigma_max, inv_rho);
  const double lo = std::pow(cfg.sigma_min, inv_rho);
  return std::pow(hi + u * (lo - hi), cfg.rho);
}

double sigma_of_local_time(double local_time, const ScheduleConfig& cfg) {
  require_unit_interval(local_time, "local diffusion time");
  if (local_time == 0.0) return 0.0;
  return edm_sigma(1.0 - local_time, cfg);
}

double snr(double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("snr: sigma must be non-negative");
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (sigma * sigma);
}

LocalTimeVector local_times_warmup(double tau, const ScheduleConfig& cfg) {
  require_unit_interval(tau, "global diffusion time");
  LocalTimeVector out{Eigen::ArrayXd(cfg.window)};
  for (int w = 0; w < cfg.window; ++w)
    out.values[w] = clip01(static_cast<double>(w) / cfg.window + tau);
  return out;
}

LocalTimeVector local_times_rolling(double tau, const ScheduleConfig& cfg) {
  require_unit_interval(tau, "global diffusion time");
  if (cfg.window <= cfg.obs_count)
    throw ConfigError("rolling schedule needs window > obs_count");
  const double span = cfg.window - cfg.obs_count;
  LocalTimeVector out{Eigen::ArrayXd(cfg.window)};
  for (int w = 0; w < cfg.window; ++w)
    out.values[w] = clip01((w + tau - cfg.obs_count) / span);
  return out;
}

LocalTimeVector stage_local_times(Stage stage, double tau, const ScheduleConfig& cfg) {
  switch (stage) {
  case Stage::rolling: return local_times_rolling(tau, cfg);
  case Stage::warmup: {
    require_unit_interval(tau, "global diffusion time");
    if (cfg.window <= cfg.obs_count)
      throw ConfigError("warm-up schedule needs window > obs_count");
    const double span = cfg.window - cfg.obs_count;
    LocalTimeVector out{Eigen::ArrayXd::Zero(cfg.window)};
    for (int w = cfg.obs_count; w < cfg.window; ++w)
      out.values[w] = clip01((w - cfg.obs_count) / span + tau);
    return out;
  }
  case Stage::joint: {
    require_unit_interval(tau, "global diffusion time");
    LocalTimeVector out{Eigen::ArrayXd::Zero(cfg.window)};
    out.values.tail(cfg.window - cfg.obs_count).setConstant(tau);
    return out;
  }
  }
  throw ConfigError("unknown stage");
}

double warmup_handoff_time(const ScheduleConfig& cfg) {
  return 1.0 / (cfg.window - cfg.obs_count);
}

double loss_weight(double sigma, const ScheduleConfig& cfg) {
  if (sigma <= 0.0) return 0.0;
  const double sd = cfg.sigma_data;
  return (sigma * sigma + sd * sd) / ((sigma * sd) * (sigma * sd));
}

Eigen::ArrayXd slot_sigmas(const LocalTimeVector& local_times, const ScheduleConfig& cfg) {
  Eigen::ArrayXd out(local_times.size());
  for (Eigen::Index w = 0; w < local_times.size(); ++w)
    out[w] = sigma_of_local_time(local_times[w], cfg);
  return out;
}

} // namespace roadsim
