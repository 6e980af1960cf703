#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "roadsim/engine.hpp"
#include "roadsim/error.hpp"
#include "roadsim/nn/toy_network.hpp"

#include <cmath>
#include <filesystem>

using namespace roadsim;

namespace {

const MapPolylines kNoMap;

// Constant pull toward a fixed offset, so deviations propagate nowhere.
class Offset final : public EgoController {
public:
  explicit Offset(double dy) : dy_(dy) {}
  State next_state(const States& history, int) const override {
    State s = history.at(0, history.slots - 1);
    s(0) += 1.0;
    s(1) += dy_;
    return s;
  }

private:
  double dy_;
};

Scenario scene() {
  SynthConfig cfg;
  cfg.min_agents = 4;
  cfg.max_agents = 4;
  return synth_generate(cfg, 2024, "engine");
}

double variance(const States& s) { return s.data.array().square().mean(); }

} // namespace

TEST_CASE("planner parsing and names") {
  CHECK(PlannerKind::parse("rolling(15)") == PlannerKind::rolling(15, 10));
  CHECK(PlannerKind::parse("rolling(20,5)") == PlannerKind::rolling(20, 5));
  CHECK(PlannerKind::parse("mpc(5)") == PlannerKind::mpc(5));
  CHECK(PlannerKind::parse("ar") == PlannerKind::autoregressive());
  CHECK(PlannerKind::parse("one-shot") == PlannerKind::one_shot());
  CHECK(PlannerKind::rolling(20, 10).name() == "rolling(20)");
  CHECK_THROWS_AS(PlannerKind::parse("mpc(0)"), ConfigError);
  CHECK_THROWS_AS(PlannerKind::parse("rolling(10)"), ConfigError);
  CHECK_THROWS_AS(PlannerKind::parse("beam"), ConfigError);
}

TEST_CASE("analytic NFE at defaults") {
  const EngineConfig cfg;
  const auto roll15 = analytic_nfe(PlannerKind::rolling(15, 10), cfg, 40);
  const auto roll20 = analytic_nfe(PlannerKind::rolling(20, 10), cfg, 40);
  const auto ar = analytic_nfe(PlannerKind::autoregressive(), cfg, 40);
  const auto one = analytic_nfe(PlannerKind::one_shot(), cfg, 40);
  const auto mpc1 = analytic_nfe(PlannerKind::mpc(1), cfg, 40);
  CHECK(roll15 == 679);
  CHECK(ar == 3160);
  CHECK(one == 79);
  CHECK(mpc1 == 3160);
  CHECK(analytic_nfe(PlannerKind::mpc(5), cfg, 40) == 8 * 79);
  CHECK(roll15 * 4 <= ar);
  CHECK(static_cast<double>(ar) / roll15 == doctest::Approx(4.654).epsilon(1e-3));
  CHECK(one < roll20);
  CHECK(roll20 < roll15);
  CHECK(roll15 < ar);
}

TEST_CASE("warm-up: 79 evaluations, pinned observations, rolling pattern") {
  EngineConfig cfg;
  const GaussianOracle oracle(0.0, 0.5);
  States obs(5, 10);
  Rng fill(1);
  fill_standard_normal(obs.data, fill);
  const std::vector<AgentDims> cond(5);
  Rng rng(2);
  NfeCounter nfe;
  const SceneWindow win = warmup(obs, AgentMask::Constant(5, true), kNoMap, cond, oracle, cfg, rng, nfe);
  CHECK(nfe.count == 79);
  CHECK(win.states.slice(0, 10) == obs);
  CHECK((win.local_times.values == local_times_rolling(1.0, cfg.schedule).values).all());

  const RollingStepResult r = rolling_step(win, std::nullopt, kNoMap, cond, oracle, cfg, rng, nfe);
  CHECK(nfe.count == 79 + 15);
  CHECK(r.emitted.slots == 1);
  CHECK((r.next.local_times.values == local_times_rolling(1.0, cfg.schedule).values).all());
  CHECK(r.next.states.slice(0, 9) == obs.slice(1, 9));
  CHECK(r.next.states.slice(9, 1) == r.emitted);

  SceneWindow broken = win;
  broken.local_times = local_times_rolling(0.5, cfg.schedule);
  CHECK_THROWS_AS(rolling_step(broken, std::nullopt, kNoMap, cond, oracle, cfg, rng, nfe), StateError);
}

TEST_CASE("oracle distribution: warm-up slot n and emitted frame") {
  EngineConfig cfg;
  const double s = 0.5;
  const GaussianOracle oracle(0.0, s);
  const int A = 3334;  // 10^4 scalar samples per slot
  const States obs(A, 10);
  const std::vector<AgentDims> cond(A);
  Rng rng(3);
  NfeCounter nfe;
  const SceneWindow win = warmup(obs, AgentMask::Constant(A, true), kNoMap, cond, oracle, cfg, rng, nfe);
  const double sigma_n = sigma_of_local_time(win.local_times[10], cfg.schedule);
  CHECK(std::abs(variance(win.states.slice(10, 1)) / (s * s + sigma_n * sigma_n) - 1.0) < 0.03);

  const RollingStepResult r = rolling_step(win, std::nullopt, kNoMap, cond, oracle, cfg, rng, nfe);
  CHECK(std::abs(variance(r.emitted) / (s * s) - 1.0) < 0.03);
}

TEST_CASE("rollout NFE equals the closed form for every planner") {
  const Scenario sc = scene();
  const GaussianOracle oracle(0.0, 0.5);
  EngineConfig cfg;
  cfg.horizon = 12;
  for (const PlannerKind& p : {PlannerKind::rolling(15, 10), PlannerKind::rolling(20, 10),
                               PlannerKind::autoregressive(), PlannerKind::one_shot(), PlannerKind::mpc(1),
                               PlannerKind::mpc(5)}) {
    CAPTURE(p.name());
    const RolloutReport r = rollout(sc, p, nullptr, -1, oracle, cfg, 5);
    CHECK(r.total_nfe == analytic_nfe(p, cfg, 12));
    std::int64_t sum = 0;
    for (auto v : r.step_nfe) sum += v;
    CHECK(sum == r.total_nfe);
    CHECK(r.horizon() == 12);
    CHECK(r.realized.num_frames() == 10 + 12);
    CHECK(r.realized.states.slice(0, 10) == sc.states.slice(0, 10));
  }
}

TEST_CASE("ego injection is exact for reactive planners") {
  const Scenario sc = scene();
  const GaussianOracle oracle(0.0, 0.5);
  EngineConfig cfg;
  cfg.horizon = 6;
  const Offset ctrl(0.3);
  for (const PlannerKind& p : {PlannerKind::rolling(15, 10), PlannerKind::autoregressive(), PlannerKind::mpc(2)}) {
    const RolloutReport r = rollout(sc, p, &ctrl, 0, oracle, cfg, 9);
    for (int k = 1; k <= 6; ++k) {
      const State expect = ctrl.next_state(r.realized.states.slice(0, 10 + k - 1), k);
      CHECK(r.realized.states.at(0, 10 + k - 1) == expect);
    }
  }
}

TEST_CASE("one-shot is blind to ego deviations; mpc(T) equals one-shot") {
  const Scenario sc = scene();
  const GaussianOracle oracle(0.0, 0.5);
  EngineConfig cfg;
  cfg.horizon = 8;
  const Offset left(0.5), right(-0.5);
  const RolloutReport a = rollout(sc, PlannerKind::one_shot(), &left, 0, oracle, cfg, 4);
  const RolloutReport b = rollout(sc, PlannerKind::one_shot(), &right, 0, oracle, cfg, 4);
  CHECK(a.realized.states.at(0, 12) != b.realized.states.at(0, 12));
  for (Index ag = 1; ag < sc.num_agents(); ++ag)
    for (int t = 0; t < 18; ++t) CHECK(a.realized.states.at(ag, t) == b.realized.states.at(ag, t));

  // the reactive rolling planner does see the ego (an interacting network is needed for that)
  nn::ToyDenoiserConfig tiny;
  tiny.feature_dim = 8;
  tiny.num_blocks = 1;
  const nn::ToyDenoiser<float> net(nn::toy_denoiser(tiny, cfg.schedule));
  const RolloutReport c = rollout(sc, PlannerKind::rolling(15, 10), &left, 0, net, cfg, 4);
  const RolloutReport d = rollout(sc, PlannerKind::rolling(15, 10), &right, 0, net, cfg, 4);
  bool differs = false;
  for (Index ag = 1; ag < sc.num_agents(); ++ag) differs = differs || c.realized.states.at(ag, 17) != d.realized.states.at(ag, 17);
  CHECK(differs);

  cfg.horizon = 12;  // mpc(T) shares the one-shot window once T >= lookahead
  const RolloutReport m = rollout(sc, PlannerKind::mpc(12), nullptr, -1, oracle, cfg, 4);
  const RolloutReport o = rollout(sc, PlannerKind::one_shot(), nullptr, -1, oracle, cfg, 4);
  CHECK(m.realized.states == o.realized.states);
}

TEST_CASE("seeded determinism and report round trip") {
  const Scenario sc = scene();
  const GaussianOracle oracle(0.0, 0.5);
  EngineConfig cfg;
  cfg.horizon = 5;
  const RolloutReport a = rollout(sc, PlannerKind::rolling(15, 10), nullptr, -1, oracle, cfg, 31);
  const RolloutReport b = rollout(sc, PlannerKind::rolling(15, 10), nullptr, -1, oracle, cfg, 31);
  CHECK(a.realized == b.realized);
  CHECK(a.step_nfe == b.step_nfe);
  CHECK(a.collisions == b.collisions);
  const RolloutReport c = rollout(sc, PlannerKind::rolling(15, 10), nullptr, -1, oracle, cfg, 32);
  CHECK(!(a.realized == c.realized));

  const auto path = std::filesystem::temp_directory_path() / "roadsim_report_test.json";
  save_report(a, path);
  const RolloutReport back = load_report(path);
  CHECK(back.realized == a.realized);
  CHECK(back.step_nfe == a.step_nfe);
  CHECK(back.total_nfe == a.total_nfe);
  CHECK(back.planner == "rolling(15)");
  CHECK(back.seed == 31);
  std::filesystem::remove(path);
}

TEST_CASE("rollout configuration errors") {
  const Scenario sc = scene();
  const GaussianOracle oracle(0.0, 0.5);
  EngineConfig cfg;
  CHECK_THROWS_AS(rollout(sc, PlannerKind::rolling(15, 5), nullptr, -1, oracle, cfg, 1), ConfigError);
  cfg.horizon = 0;
  CHECK_THROWS_AS(rollout(sc, PlannerKind::one_shot(), nullptr, -1, oracle, cfg, 1), ConfigError);
}

TEST_CASE("adversary selection picks a followed agent") {
  // two agents in one lane 12 m apart, one far away
  Scenario sc;
  sc.id = "adv";
  sc.location = "test";
  sc.states = States(3, 20);
  sc.valid = FrameMask::Constant(3, 20, true);
  for (int a = 0; a < 3; ++a) {
    sc.track_ids.push_back(a);
    sc.agent_types.push_back("car");
    sc.dims.push_back({});
  }
  for (int t = 0; t < 20; ++t) {
    sc.states.at(0, t) << 12.0 + t, 0.0, 0.0;  // leader
    sc.states.at(1, t) << 0.0 + t, 0.0, 0.0;   // follower
    sc.states.at(2, t) << 5.0, 40.0, M_PI / 2;
  }
  CHECK(select_adversary(sc, 10) == 0);
}
