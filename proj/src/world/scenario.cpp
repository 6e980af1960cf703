#include "roadsim/error.hpp"
#include "roadsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

namespace roadsim {

bool MapPolylines::operator==(const MapPolylines& other) const {
  if (points_per_polyline != other.points_per_polyline || !(frame == other.frame) ||
      polylines.size() != other.polylines.size())
    return false;
  for (std::size_t i = 0; i < polylines.size(); ++i)
    if (polylines[i] != other.polylines[i]) return false;
  return true;
}

void Scenario::check_shapes() const {
  const auto a = static_cast<std::size_t>(num_agents());
  if (track_ids.size() != a || agent_types.size() != a || dims.size() != a)
    throw InputError("scenario '" + id + "': per-agent metadata does not match agent count");
  if (valid.rows() != num_agents() || valid.cols() != num_frames())
    throw InputError("scenario '" + id + "': validity mask shape mismatch");
  for (const auto& d : dims)
    if (!(d.length > 0.0 && d.width > 0.0))
      throw InputError("scenario '" + id + "': agent dimensions must be positive");
}

bool Scenario::operator==(const Scenario& other) const {
  return id == other.id && location == other.location && track_ids == other.track_ids &&
         agent_types == other.agent_types && dims == other.dims && states == other.states &&
         (valid == other.valid).all() && map == other.map;
}

SceneFrame scene_frame(const Scenario& scenario, int obs_frames, double scale) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;
  const Index frames = std::min<Index>(obs_frames, scenario.num_frames());
  for (Index a = 0; a < scenario.num_agents(); ++a)
    for (Index t = 0; t < frames; ++t)
      if (scenario.valid(a, t)) {
        sum += scenario.states.at(a, t).head<2>().transpose();
        ++count;
      }
  SceneFrame frame;
  frame.scale = scale;
  if (count > 0) frame.origin = sum / count;
  return frame;
}

States states_to_scene(const States& world_states, const SceneFrame& frame) {
  States out = world_states;
  out.data.col(0).array() = (out.data.col(0).array() - frame.origin.x()) / frame.scale;
  out.data.col(1).array() = (out.data.col(1).array() - frame.origin.y()) / frame.scale;
  return out;
}

States states_to_world(const States& scene_states, const SceneFrame& frame) {
  States out = scene_states;
  out.data.col(0).array() = out.data.col(0).array() * frame.scale + frame.origin.x();
  out.data.col(1).array() = out.data.col(1).array() * frame.scale + frame.origin.y();
  return out;
}

Scenario to_scene_units(const Scenario& scenario, const SceneFrame& frame) {
  Scenario out = scenario;
  out.states = states_to_scene(scenario.states, frame);
  // the stored map is in meters; compose its transform with the scene frame
  const SceneFrame& from = scenario.map.frame;
  for (auto& line : out.map.polylines)
    for (Index i = 0; i < line.rows(); ++i)
      line.row(i) = frame.to_scene(from.to_world(line.row(i).transpose())).transpose();
  out.map.frame = frame;
  return out;
}

void unwrap_headings(Scenario& scenario) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (Index a = 0; a < scenario.num_agents(); ++a) {
    bool have_prev = false;
    double prev = 0.0;
    for (Index t = 0; t < scenario.num_frames(); ++t) {
      if (!scenario.valid(a, t)) continue;
      double& h = scenario.states.at(a, t)(2);
      if (have_prev) h -= two_pi * std::round((h - prev) / two_pi);
      prev = h;
      have_prev = true;
    }
  }
}

void cap_agents(Scenario& scenario, int max_agents) {
  const Index agents = scenario.num_agents();
  if (agents <= max_agents) return;

  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  int count = 0;
  for (Index a = 0; a < agents; ++a)
    for (Index t = 0; t < scenario.num_frames(); ++t)
      if (scenario.valid(a, t)) {
        centroid += scenario.states.at(a, t).head<2>().transpose();
        ++count;
      }
  if (count > 0) centroid /= count;

  std::vector<double> dist(agents, std::numeric_limits<double>::infinity());
  for (Index a = 0; a < agents; ++a) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    int n = 0;
    for (Index t = 0; t < scenario.num_frames(); ++t)
      if (scenario.valid(a, t)) {
        mean += scenario.states.at(a, t).head<2>().transpose();
        ++n;
      }
    if (n > 0) dist[a] = (mean / n - centroid).norm();
  }
  std::vector<Index> order(agents);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) { return dist[l] < dist[r]; });
  order.resize(max_agents);
  std::sort(order.begin(), order.end());

  Scenario out = scenario;
  out.states = States(max_agents, scenario.num_frames());
  out.valid.resize(max_agents, scenario.num_frames());
  out.track_ids.clear();
  out.agent_types.clear();
  out.dims.clear();
  for (Index i = 0; i < max_agents; ++i) {
    const Index a = order[i];
    out.states.data.middleRows(i * out.states.slots, out.states.slots) =
        scenario.states.data.middleRows(a * scenario.states.slots, scenario.states.slots);
    out.valid.row(i) = scenario.valid.row(a);
    out.track_ids.push_back(scenario.track_ids[a]);
    out.agent_types.push_back(scenario.agent_types[a]);
    out.dims.push_back(scenario.dims[a]);
  }
  scenario = std::move(out);
}

Polyline resample_polyline(const Polyline& line, int points) {
  const Index n = line.rows();
  std::vector<double> cum(n, 0.0);
  for (Index i = 1; i < n; ++i) cum[i] = cum[i - 1] + (line.row(i) - line.row(i - 1)).norm();
  const double total = n > 0 ? cum.back() : 0.0;

  Polyline out(points, 2);
  Index seg = 0;
  for (int k = 0; k < points; ++k) {
    const double s = points > 1 ? total * k / (points - 1) : 0.0;
    if (k == points - 1) {
      out.row(k) = line.row(n - 1);
      break;
    }
    while (seg + 1 < n - 1 && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double f = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
    out.row(k) = (1.0 - f) * line.row(seg) + f * line.row(seg + 1);
  }
  return out;
}

MapPolylines normalize_map(const std::vector<Polyline>& raw, const SceneFrame& frame, int points) {
  if (points < 2) throw ConfigError("normalize_map: need at least 2 points per polyline");
  MapPolylines out;
  out.points_per_polyline = points;
  out.frame = frame;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Polyline& line = raw[i];
    double length = 0.0;
    for (Index j = 1; j < line.rows(); ++j) length += (line.row(j) - line.row(j - 1)).norm();
    if (line.rows() < 2 || length <= 0.0) {
      std::cerr << "warning: dropping zero-length polyline " << i << "\n";
      continue;
    }
    Polyline r = resample_polyline(line, points);
    for (Index j = 0; j < r.rows(); ++j) r.row(j) = frame.to_scene(r.row(j).transpose()).transpose();
    out.polylines.push_back(std::move(r));
  }
  return out;
}

} // namespace roadsim
