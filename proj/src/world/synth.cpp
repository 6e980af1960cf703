#include "roadsim/error.hpp"
#include "roadsim/rng.hpp"
#include "roadsim/world.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace roadsim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLaneWidth = 3.5;
constexpr int kPrerollFrames = 20;

// Arc-length parameterized lane center.
struct Lane {
  Polyline points;
  std::vector<double> cum;

  explicit Lane(Polyline pts) : points(std::move(pts)), cum(points.rows(), 0.0) {
    for (Index i = 1; i < points.rows(); ++i)
      cum[i] = cum[i - 1] + (points.row(i) - points.row(i - 1)).norm();
  }

  double length() const { return cum.back(); }

  std::pair<Index, double> locate(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    Index i = std::clamp<Index>(std::distance(cum.begin(), it) - 1, 0, points.rows() - 2);
    const double len = cum[i + 1] - cum[i];
    return {i, len > 0.0 ? (s - cum[i]) / len : 0.0};
  }

  Eigen::Vector2d position(double s) const {
    auto [i, f] = locate(s);
    return ((1.0 - f) * points.row(i) + f * points.row(i + 1)).transpose();
  }

  Eigen::Vector2d tangent(double s) const {
    auto [i, f] = locate(s);
    return (points.row(i + 1) - points.row(i)).transpose().normalized();
  }
};

Polyline segment(Eigen::Vector2d from, Eigen::Vector2d to, int points) {
  Polyline out(points, 2);
  for (int k = 0; k < points; ++k) {
    const double f = static_cast<double>(k) / (points - 1);
    out.row(k) = ((1.0 - f) * from + f * to).transpose();
  }
  return out;
}

// Clockwise arc around `center` starting at angle `start`.
Polyline arc(Eigen::Vector2d center, double radius, double start, double sweep, int points) {
  Polyline out(points, 2);
  for (int k = 0; k < points; ++k) {
    const double a = start - sweep * k / (points - 1);
    out.row(k) << center.x() + radius * std::cos(a), center.y() + radius * std::sin(a);
  }
  return out;
}

std::vector<Lane> build_layout(LaneLayout layout, Rng& rng) {
  std::vector<Lane> lanes;
  constexpr double half = 100.0;
  constexpr int dense = 201;
  switch (layout) {
  case LaneLayout::straight:
    lanes.emplace_back(segment({-half, 0.0}, {half, 0.0}, dense));
    lanes.emplace_back(segment({-half, kLaneWidth}, {half, kLaneWidth}, dense));
    lanes.emplace_back(segment({half, -kLaneWidth}, {-half, -kLaneWidth}, dense));
    break;
  case LaneLayout::arc: {
    const double radius = std::uniform_real_distribution<double>(50.0, 90.0)(rng);
    const Eigen::Vector2d center(0.0, -radius);
    for (double r : {radius, radius + kLaneWidth}) {
      const double sweep = 2.0 * half / r;
      lanes.emplace_back(arc(center, r, kPi / 2 + sweep / 2, sweep, dense));
    }
    break;
  }
  case LaneLayout::intersection: {
    const double o = kLaneWidth / 2;
    lanes.emplace_back(segment({-half, -o}, {half, -o}, dense));
    lanes.emplace_back(segment({half, o}, {-half, o}, dense));
    lanes.emplace_back(segment({o, -half}, {o, half}, dense));
    lanes.emplace_back(segment({-o, half}, {-o, -half}, dense));
    break;
  }
  }
  return lanes;
}

struct SpawnedAgent {
  int lane = 0;
  double s = 0.0;
  double v = 0.0;
  double desired = 0.0;
  std::optional<std::pair<int, double>> brake;  // (frame, reduced desired speed)
  AgentDims dims;
  double drift_amp = 0.0, drift_period = 5.0, drift_phase = 0.0;
};

// Intelligent-driver car following along each lane.
double idm_accel(const SpawnedAgent& self, const SpawnedAgent* leader, double desired) {
  constexpr double a_max = 1.5, b_comf = 2.0, s0 = 2.0, headway = 1.2;
  double acc = a_max * (1.0 - std::pow(self.v / std::max(desired, 0.1), 4));
  if (leader) {
    const double gap = std::max(leader->s - self.s - 0.5 * (leader->dims.length + self.dims.length), 0.1);
    const double dv = self.v - leader->v;
    const double s_star = s0 + std::max(0.0, self.v * headway + self.v * dv / (2.0 * std::sqrt(a_max * b_comf)));
    acc -= a_max * (s_star / gap) * (s_star / gap);
  }
  return std::clamp(acc, -9.0, a_max);
}

std::optional<Scenario> attempt(const SynthConfig& cfg, Rng& rng, const std::string& id) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const LaneLayout layout =
      cfg.layouts[std::uniform_int_distribution<std::size_t>(0, cfg.layouts.size() - 1)(rng)];
  std::vector<Lane> lanes = build_layout(layout, rng);
  const int count = std::uniform_int_distribution<int>(cfg.min_agents, cfg.max_agents)(rng);

  std::vector<SpawnedAgent> agents;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int tries = 0; tries < 50 && !placed; ++tries) {
      SpawnedAgent ag;
      ag.lane = std::uniform_int_distribution<int>(0, static_cast<int>(lanes.size()) - 1)(rng);
      ag.s = uniform(25.0, 105.0);
      ag.desired = uniform(8.0, 14.0);
      ag.v = ag.desired * uniform(0.6, 1.0);
      ag.dims = {uniform(4.0, 5.0), uniform(1.7, 2.0)};
      const double min_gap = ag.dims.length + 4.0 + 0.6 * ag.v;
      placed = std::none_of(agents.begin(), agents.end(), [&](const SpawnedAgent& o) {
        return o.lane == ag.lane && std::abs(o.s - ag.s) < min_gap;
      });
      if (!placed) continue;
      if (unit(rng) < cfg.brake_probability) {
        const int frame = kPrerollFrames + std::uniform_int_distribution<int>(0, std::max(cfg.frames - 10, 0))(rng);
        ag.brake = std::make_pair(frame, ag.desired * uniform(0.05, 0.5));
      }
      ag.drift_amp = cfg.lateral_noise * unit(rng);
      ag.drift_period = uniform(3.0, 8.0);
      ag.drift_phase = uniform(0.0, 2.0 * kPi);
      agents.push_back(ag);
    }
    if (!placed) return std::nullopt;
  }

  const double rotation = cfg.random_rotation ? uniform(-kPi, kPi) : 0.0;
  const Eigen::Rotation2Dd rot(rotation);
  const Eigen::Vector2d offset = cfg.random_rotation ? Eigen::Vector2d(uniform(-20, 20), uniform(-20, 20))
                                                     : Eigen::Vector2d::Zero();

  Scenario sc;
  sc.id = id;
  sc.location = to_string(layout);
  sc.states = States(count, cfg.frames);
  sc.valid = FrameMask::Constant(count, cfg.frames, true);
  for (int k = 0; k < count; ++k) {
    sc.track_ids.push_back(k + 1);
    sc.agent_types.push_back("car");
    sc.dims.push_back(agents[k].dims);
  }

  const int total = kPrerollFrames + cfg.frames;
  std::vector<double> acc(count);
  for (int frame = 0; frame < total; ++frame) {
    if (frame >= kPrerollFrames) {
      const int t = frame - kPrerollFrames;
      const double time = frame * kFrameDt;
      for (int k = 0; k < count; ++k) {
        const SpawnedAgent& ag = agents[k];
        const Lane& lane = lanes[ag.lane];
        const Eigen::Vector2d tan = lane.tangent(ag.s);
        const Eigen::Vector2d normal(-tan.y(), tan.x());
        const double w = 2.0 * kPi / ag.drift_period;
        const double d = ag.drift_amp * std::sin(w * time + ag.drift_phase);
        const double d_dot = ag.drift_amp * w * std::cos(w * time + ag.drift_phase);
        const Eigen::Vector2d p = rot * (lane.position(ag.s) + d * normal) + offset;
        const double heading = std::atan2(tan.y(), tan.x()) + std::atan2(d_dot, std::max(ag.v, 1.0)) + rotation;
        sc.states.at(k, t) << p.x(), p.y(), std::remainder(heading, 2.0 * kPi);
      }
    }
    for (int k = 0; k < count; ++k) {
      const SpawnedAgent* leader = nullptr;
      for (int j = 0; j < count; ++j)
        if (j != k && agents[j].lane == agents[k].lane && agents[j].s > agents[k].s &&
            (!leader || agents[j].s < leader->s))
          leader = &agents[j];
      double desired = agents[k].desired;
      if (agents[k].brake && frame >= agents[k].brake->first) desired = agents[k].brake->second;
      acc[k] = idm_accel(agents[k], leader, desired);
    }
    for (int k = 0; k < count; ++k) {
      agents[k].v = std::max(0.0, agents[k].v + acc[k] * kFrameDt);
      agents[k].s += agents[k].v * kFrameDt;
    }
  }

  for (Index t = 0; t < sc.num_frames(); ++t)
    if (!collisions_at(sc, t).empty()) return std::nullopt;
  for (int k = 0; k < count; ++k)
    for (Index t = 1; t < sc.num_frames(); ++t)
      if ((sc.states.at(k, t).head<2>() - sc.states.at(k, t - 1).head<2>()).norm() >= kMaxStepDisplacement)
        return std::nullopt;

  unwrap_headings(sc);

  std::vector<Polyline> raw;
  for (const Lane& lane : lanes) {
    Polyline p = lane.points;
    for (Index i = 0; i < p.rows(); ++i) p.row(i) = (rot * p.row(i).transpose() + offset).transpose();
    raw.push_back(std::move(p));
  }
  sc.map = normalize_map(raw, SceneFrame{}, cfg.map_points);
  return sc;
}

} // namespace

const char* to_string(LaneLayout layout) {
  switch (layout) {
  case LaneLayout::straight: return "straight";
  case LaneLayout::arc: return "arc";
  case LaneLayout::intersection: return "intersection";
  }
  return "?";
}

Scenario synth_generate(const SynthConfig& cfg, std::uint64_t seed, const std::string& id) {
  if (cfg.frames < 2) throw ConfigError("synth: frames must be at least 2");
  if (cfg.min_agents < 1 || cfg.max_agents < cfg.min_agents || cfg.max_agents > kMaxAgents)
    throw ConfigError("synth: agent count range invalid");
  if (cfg.layouts.empty()) throw ConfigError("synth: no lane layouts enabled");
  if (cfg.map_points < 2) throw ConfigError("synth: map_points must be at least 2");

  Rng rng(seed);
  for (int retry = 0; retry < cfg.max_retries; ++retry)
    if (auto sc = attempt(cfg, rng, id)) return std::move(*sc);
  throw InputError("synth: could not place agents without collisions after " +
                   std::to_string(cfg.max_retries) + " attempts");
}

} // namespace roadsim
