#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "roadsim/diffusion.hpp"
#include "roadsim/error.hpp"

#include <cmath>

using namespace roadsim;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

// Welford accumulation, independent of the library's own arithmetic.
Moments moments(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Moments m;
  double m2 = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double d = v[i] - m.mean;
    m.mean += d / static_cast<double>(i + 1);
    m2 += d * (v[i] - m.mean);
  }
  m.var = m2 / static_cast<double>(v.size() - 1);
  return m;
}

Scenario line_scenario(int agents, int frames) {
  Scenario sc;
  sc.id = "line";
  sc.location = "test";
  sc.states = States(agents, frames);
  sc.valid = FrameMask::Constant(agents, frames, true);
  for (int a = 0; a < agents; ++a) {
    sc.track_ids.push_back(a);
    sc.agent_types.push_back("car");
    sc.dims.push_back({});
    for (int t = 0; t < frames; ++t) sc.states.at(a, t) << 0.02 * t, 0.1 * a, 0.01 * a;
  }
  return sc;
}

} // namespace

TEST_CASE("forward_sample identity at sigma = 0") {
  States clean(3, 7);
  Rng fill(1);
  fill_standard_normal(clean.data, fill);
  Rng rng(2);
  CHECK(forward_sample(clean, 0.0, rng) == clean);
}

TEST_CASE("forward_sample statistics within 2% (10^5 draws)") {
  for (double sigma : {0.1, 1.0, 2.0, 10.0}) {
    CAPTURE(sigma);
    States zeros(1, 100000 / 3 + 1);
    Rng rng(derive_seed(7, "forward", static_cast<std::uint64_t>(sigma * 10)));
    const States x = forward_sample(zeros, sigma, rng);
    const Eigen::Map<const Eigen::VectorXd> flat(x.data.data(), x.data.size());
    const Moments m = moments(flat);
    CHECK(std::abs(m.mean) < 0.01 * sigma);
    CHECK(std::abs(m.var / (sigma * sigma) - 1.0) < 0.02);
  }
}

TEST_CASE("rolling_forward_sample examples") {
  ScheduleConfig cfg;
  States clean(4, 15);
  Rng fill(3);
  fill_standard_normal(clean.data, fill);

  Rng rng(4);
  const SceneWindow at0 = rolling_forward_sample(clean, 0.0, Stage::rolling, cfg, rng);
  for (int w = 0; w <= cfg.obs_count; ++w)
    for (int a = 0; a < 4; ++a) CHECK(at0.states.at(a, w) == clean.at(a, w));
  CHECK(at0.local_times.values.size() == 15);

  ScheduleConfig open = cfg;
  open.obs_count = 0;
  const SceneWindow warm = rolling_forward_sample(clean, 1.0, Stage::warmup, open, rng);
  const Eigen::ArrayXd sig = warm.noise_levels(open);
  for (int w = 0; w < 15; ++w) CHECK(sig[w] == doctest::Approx(80.0));

  const SceneWindow half = rolling_forward_sample(clean, 0.5, Stage::rolling, cfg, rng);
  CHECK(half.local_times[12] == doctest::Approx(0.5));
  CHECK(std::abs(half.noise_levels(cfg)[12] - 2.5152189761471586) < 1e-12);
}

TEST_CASE("augment_observations modes") {
  ScheduleConfig cfg;
  States clean(2, 15);
  const SceneWindow win = make_window(clean, local_times_rolling(1.0, cfg), cfg.obs_count);
  Rng rng(5);

  const SceneWindow same = augment_observations(win, AugmentMode::train, 0.0, cfg, rng);
  CHECK(same.states == win.states);
  CHECK(same.obs_sigma == 0.0);

  const SceneWindow test = augment_observations(win, AugmentMode::test, 0.0, cfg, rng);
  CHECK(test.obs_sigma == cfg.sigma_min);
  double max_obs = 0.0;
  for (int w = 0; w < 15; ++w)
    for (int a = 0; a < 2; ++a) {
      const double d = (test.states.at(a, w) - win.states.at(a, w)).cwiseAbs().maxCoeff();
      if (w < cfg.obs_count) max_obs = std::max(max_obs, d);
      else CHECK(d == 0.0);
    }
  CHECK(max_obs > 0.0);
  CHECK(max_obs < 6 * cfg.sigma_min);

  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += augment_observations(win, AugmentMode::train, 1.0, cfg, rng).obs_sigma;
  CHECK(std::abs(sum / 10000 / 40.001 - 1.0) < 0.02);

  CHECK_THROWS_AS(augment_observations(win, AugmentMode::train, 1.5, cfg, rng), ConfigError);
  const SceneWindow no_obs = make_window(clean, local_times_rolling(1.0, cfg), 0);
  CHECK_THROWS_AS(augment_observations(no_obs, AugmentMode::test, 0.0, cfg, rng), InputError);
}

TEST_CASE("make_training_batch task ratio and targets") {
  const Scenario sc = line_scenario(3, 30);
  BatchConfig bc;
  Rng rng(6);

  bc.schedule.task_ratio = 0.0;
  for (int i = 0; i < 200; ++i) CHECK(make_training_batch(sc, bc, rng).stage == Stage::rolling);

  bc.schedule.task_ratio = 0.1;
  int warm = 0;
  for (int i = 0; i < 10000; ++i) {
    const TrainingBatch b = make_training_batch(sc, bc, rng);
    warm += b.stage == Stage::warmup;
    if (i < 50) {
      CHECK(b.clean_target == sc.states.slice(b.window_start, bc.schedule.window));
      for (int w = 0; w < bc.schedule.window; ++w) {
        if (w < bc.schedule.obs_count) CHECK(b.slot_sigmas[w] == b.noisy.obs_sigma);
        else CHECK(b.slot_sigmas[w] == sigma_of_local_time(b.noisy.local_times[w], bc.schedule));
      }
    }
  }
  CHECK(std::abs(warm / 10000.0 - 0.1) <= 0.01);

  Rng r1(9), r2(9);
  const TrainingBatch a = make_training_batch(sc, bc, r1), b = make_training_batch(sc, bc, r2);
  CHECK(a.noisy.states == b.noisy.states);
  CHECK((a.weights == b.weights).all());

  const Scenario short_sc = line_scenario(2, 10);
  CHECK_THROWS_AS(make_training_batch(short_sc, bc, rng), InputError);
}

TEST_CASE("road_loss examples") {
  ScheduleConfig cfg;
  cfg.window = 1;
  cfg.obs_count = 0;
  TrainingBatch b;
  b.clean_target = States(1, 1);
  b.noisy = make_window(States(1, 1), local_times_rolling(1.0, cfg), 0);
  b.weights = Eigen::ArrayXd::Ones(1);
  b.slot_sigmas = Eigen::ArrayXd::Ones(1);

  CHECK(road_loss(b.clean_target, b) == 0.0);
  States pred(1, 1);
  pred.at(0, 0) << 1.0, 0.0, 0.0;
  CHECK(road_loss(pred, b) == doctest::Approx(1.0 / 3.0));
  b.weights *= 2.0;
  CHECK(road_loss(pred, b) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(road_loss(States(2, 1), b), InputError);
}

TEST_CASE("road_loss ignores masked agents and their order") {
  const Scenario sc = line_scenario(4, 20);
  BatchConfig bc;
  Rng rng(11);
  TrainingBatch b = make_training_batch(sc, bc, rng);
  b.noisy.agent_mask << true, false, true, false;
  States pred = b.noisy.states;
  const double base = road_loss(pred, b);

  // swap the two masked agents' rows in both prediction and target
  TrainingBatch swapped = b;
  States pred2 = pred;
  for (int w = 0; w < bc.schedule.window; ++w) {
    pred2.at(1, w) = pred.at(3, w);
    pred2.at(3, w) = pred.at(1, w);
    swapped.clean_target.at(1, w) = b.clean_target.at(3, w);
    swapped.clean_target.at(3, w) = b.clean_target.at(1, w);
  }
  CHECK(road_loss(pred2, swapped) == base);
  pred2.at(1, 3) << 100.0, 100.0, 100.0;
  CHECK(road_loss(pred2, swapped) == base);
}

TEST_CASE("road_loss_grad matches finite differences") {
  const Scenario sc = line_scenario(3, 20);
  BatchConfig bc;
  bc.p_ca = 1.0;
  Rng rng(12);
  const TrainingBatch b = make_training_batch(sc, bc, rng);
  States pred = b.noisy.states;
  const States g = road_loss_grad(pred, b);
  for (Index i = 0; i < pred.data.size(); i += 7) {
    States p = pred, m = pred;
    const double h = 1e-6 * std::max(1.0, std::abs(pred.data.data()[i]));
    p.data.data()[i] += h;
    m.data.data()[i] -= h;
    const double fd = (road_loss(p, b) - road_loss(m, b)) / (2 * h);
    CHECK(g.data.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}
