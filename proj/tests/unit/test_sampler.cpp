#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "roadsim/error.hpp"
#include "roadsim/sampler.hpp"

#include <cmath>

using namespace roadsim;

namespace {

const MapPolylines kNoMap;

ScheduleConfig joint_cfg(int window) {
  ScheduleConfig c;
  c.window = window;
  c.obs_count = 0;
  return c;
}

// Endpoint error of the joint integration of N(0,1) data from sigma_max to 0.
double gaussian_endpoint_error(int steps) {
  const ScheduleConfig cfg = joint_cfg(4);
  States x(8, 4);
  Rng rng(42);
  fill_standard_normal(x.data, rng);
  x.data *= cfg.sigma_max;
  const SceneWindow start = make_window(x, stage_local_times(Stage::joint, 1.0, cfg), 0);
  const GaussianOracle oracle(0.0, 1.0);
  const std::vector<AgentDims> cond(8);
  NfeCounter nfe;
  const SceneWindow end = integrate_window(start, 1.0, 0.0, Stage::joint, steps, oracle, kNoMap, cond, cfg, nfe);
  const double scale = 1.0 / std::sqrt(1.0 + cfg.sigma_max * cfg.sigma_max);
  double worst = 0.0;
  for (Index i = 0; i < x.data.size(); ++i) {
    const double exact = x.data.data()[i] * scale;
    worst = std::max(worst, std::abs(end.states.data.data()[i] - exact) / std::abs(exact));
  }
  return worst;
}

} // namespace

TEST_CASE("heun_step with zero score leaves x unchanged") {
  States x(2, 3);
  Rng rng(1);
  fill_standard_normal(x.data, rng);
  const GaussianOracle stationary(x, 1.0);
  const SceneWindow win = make_window(x, LocalTimeVector{Eigen::ArrayXd::Ones(3)}, 0);
  const std::vector<AgentDims> cond(2);
  NfeCounter nfe;
  CHECK(heun_step(win, 5.0, 1.0, stationary, kNoMap, cond, nfe) == x);
}

TEST_CASE("heun_step evaluation count and domain") {
  States x(1, 1);
  x.at(0, 0) << 1.0, 2.0, 3.0;
  const SceneWindow win = make_window(x, LocalTimeVector{Eigen::ArrayXd::Ones(1)}, 0);
  const GaussianOracle oracle(0.0, 1.0);
  const std::vector<AgentDims> cond(1);
  NfeCounter nfe;
  heun_step(win, 2.0, 1.0, oracle, kNoMap, cond, nfe);
  CHECK(nfe.count == 2);
  heun_step(win, 1.0, 0.0, oracle, kNoMap, cond, nfe);
  CHECK(nfe.count == 3);
  CHECK_THROWS_AS(heun_step(win, 1.0, 1.0, oracle, kNoMap, cond, nfe), DomainError);
  CHECK_THROWS_AS(heun_step(win, 1.0, 2.0, oracle, kNoMap, cond, nfe), DomainError);
  CHECK_THROWS_AS(heun_step(win, 1.0, -0.1, oracle, kNoMap, cond, nfe), DomainError);
}

TEST_CASE("Euler step local error is second order against the closed form") {
  // for N(0, s^2) data the flow is x(sigma) = x0 sqrt((s^2 + sigma^2) / (s^2 + sigma0^2))
  const double s = 1.3, sigma0 = 2.0, x0 = 1.7;
  const GaussianOracle oracle(0.0, s);
  States x(1, 1);
  x.at(0, 0) << x0, x0, x0;
  SceneWindow win = make_window(x, LocalTimeVector{Eigen::ArrayXd::Ones(1)}, 0);
  const std::vector<AgentDims> cond(1);
  auto euler_error = [&](double dsigma) {
    NfeCounter nfe;
    SceneWindow w = win;
    w.obs_mask.setConstant(false);
    const SceneWindow out = joint_heun_step(w, Eigen::ArrayXd::Constant(1, sigma0),
                                            Eigen::ArrayXd::Constant(1, sigma0 - dsigma), false, oracle, kNoMap,
                                            cond, nfe);
    CHECK(nfe.count == 1);
    const double exact = x0 * std::sqrt((s * s + std::pow(sigma0 - dsigma, 2)) / (s * s + sigma0 * sigma0));
    return std::abs(out.states.at(0, 0)(0) - exact);
  };
  const double e1 = euler_error(0.1), e2 = euler_error(0.05);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("integrate_window counting and endpoints") {
  ScheduleConfig cfg;  // W=15, n=10
  States x(3, 15);
  Rng rng(2);
  fill_standard_normal(x.data, rng);
  const GaussianOracle oracle(0.0, 0.5);
  const std::vector<AgentDims> cond(3);

  SceneWindow win = make_window(x, stage_local_times(Stage::warmup, 1.0, cfg), cfg.obs_count);
  NfeCounter nfe;
  CHECK(integrate_window(win, 0.4, 0.4, Stage::warmup, 40, oracle, kNoMap, cond, cfg, nfe).states == x);
  CHECK(nfe.count == 0);

  const SceneWindow warm = integrate_window(win, 1.0, 0.0, Stage::warmup, 40, oracle, kNoMap, cond, cfg, nfe);
  CHECK(nfe.count == 79);
  CHECK(nfe.count == integration_nfe(40));
  for (int w = 0; w < cfg.obs_count; ++w)
    for (int a = 0; a < 3; ++a) CHECK(warm.states.at(a, w) == x.at(a, w));

  SceneWindow roll = make_window(x, local_times_rolling(1.0, cfg), cfg.obs_count);
  nfe.count = 0;
  const SceneWindow out = integrate_window(roll, 1.0, 0.0, Stage::rolling, 8, oracle, kNoMap, cond, cfg, nfe);
  CHECK(nfe.count == 15);
  CHECK(out.local_times[cfg.obs_count] == 0.0);
  CHECK(sigma_of_local_time(out.local_times[cfg.obs_count], cfg) == 0.0);
  CHECK(out.local_times[cfg.window - 1] == doctest::Approx(0.8));

  CHECK_THROWS_AS(integrate_window(roll, 0.2, 0.5, Stage::rolling, 8, oracle, kNoMap, cond, cfg, nfe), DomainError);
}

TEST_CASE("clipped slots stay frozen") {
  const ScheduleConfig cfg = joint_cfg(10);
  States x(2, 10);
  Rng rng(3);
  fill_standard_normal(x.data, rng);
  const GaussianOracle oracle(0.0, 1.0);
  const std::vector<AgentDims> cond(2);
  NfeCounter nfe;
  const SceneWindow win = make_window(x, stage_local_times(Stage::warmup, 1.0, cfg), 0);
  const SceneWindow out = integrate_window(win, 1.0, 0.9, Stage::warmup, 3, oracle, kNoMap, cond, cfg, nfe);
  CHECK(out.states.at(0, 0) != x.at(0, 0));
  for (int w = 1; w < 10; ++w) CHECK(out.states.at(1, w) == x.at(1, w));
}

TEST_CASE("Gaussian oracle convergence and order") {
  const double e64 = gaussian_endpoint_error(64);
  const double e128 = gaussian_endpoint_error(128);
  MESSAGE("relative endpoint error: 64 steps " << e64 << ", 128 steps " << e128);
  CHECK(e128 < 1e-3);
  CHECK(e64 / e128 == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("sampled variance matches the data variance within 3%") {
  const ScheduleConfig cfg = joint_cfg(10);
  States x(1000, 10);
  Rng rng(4);
  fill_standard_normal(x.data, rng);
  x.data *= cfg.sigma_max;
  const SceneWindow start = make_window(x, stage_local_times(Stage::joint, 1.0, cfg), 0);
  const double s = 0.7;
  const GaussianOracle oracle(0.0, s);
  const std::vector<AgentDims> cond(1000);
  NfeCounter nfe;
  const SceneWindow end = integrate_window(start, 1.0, 0.0, Stage::joint, 40, oracle, kNoMap, cond, cfg, nfe);
  const double var = end.states.data.array().square().mean();
  CHECK(std::abs(var / (s * s) - 1.0) < 0.03);
}

TEST_CASE("sampler config") {
  SamplerConfig c;
  CHECK(c.substeps_for(15, 10) == 8);
  CHECK(c.substeps_for(20, 10) == 4);
  c.reference_span = 0;
  CHECK(c.substeps_for(20, 10) == 8);
  c.warmup_steps = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.rolling_substeps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
