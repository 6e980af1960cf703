#pragma once

#include <Eigen/Core>

namespace roadsim {

// Noise-schedule and window hyper-parameters shared by training and sampling.
struct ScheduleConfig {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  double sigma_data = 0.5;
  int window = 15;     // W, slots per rolling window
  int obs_count = 10;  // n, observation slots at the head of the window
  double task_ratio = 0.1;  // beta, probability of a warm-up training task

  // Throws ConfigError when an invariant is violated.
  void validate() const;
};

// Per-slot local diffusion times tau_w in [0, 1], non-decreasing in w.
struct LocalTimeVector {
  Eigen::ArrayXd values;

  Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index w) const { return values[w]; }
};

// How the global diffusion time maps onto window slots.
//   warmup  - initial boundary: observations clean, future slots staggered from white noise
//   rolling - steady state: one slot is finished per unit of global time
//   joint   - every future slot shares the global time (one-shot / AR / MPC planners)
enum class Stage { warmup, rolling, joint };

const char* to_string(Stage stage);

// Continuous EDM curve: (smax^(1/rho) + u (smin^(1/rho) - smax^(1/rho)))^rho, u in [0, 1].
double edm_sigma(double u, const ScheduleConfig& cfg);

// Slot noise for a local time: 0 at tau_w = 0, edm_sigma(1 - tau_w) otherwise.
double sigma_of_local_time(double local_time, const ScheduleConfig& cfg);

// alpha^2 / sigma^2 with alpha = 1; +infinity at sigma = 0.
double snr(double sigma);

// clip(w / W + tau, 0, 1) for w = 0..W-1.
LocalTimeVector local_times_warmup(double tau, const ScheduleConfig& cfg);

// clip((w + tau - n) / (W - n), 0, 1) for w = 0..W-1.
LocalTimeVector local_times_rolling(double tau, const ScheduleConfig& cfg);

// Map used when a window with `cfg.obs_count` pinned observations is noised or
// integrated. Observation slots are always 0. For the warm-up stage the
// future slots follow local_times_warmup over the (W - n)-slot future
// sub-window, so with n = 0 it is identical to local_times_warmup.
LocalTimeVector stage_local_times(Stage stage, double tau, const ScheduleConfig& cfg);

// Global warm-up time at which the warm-up map coincides with the rolling map
// at tau = 1, i.e. 1 / (W - n).
double warmup_handoff_time(const ScheduleConfig& cfg);

// EDM loss weight (sigma^2 + sd^2) / (sigma sd)^2; 0 for a clean slot.
double loss_weight(double sigma, const ScheduleConfig& cfg);

Eigen::ArrayXd slot_sigmas(const LocalTimeVector& local_times, const ScheduleConfig& cfg);

} // namespace roadsim
