#include "roadsim/world.hpp"

#include <cmath>

namespace roadsim {

namespace {

struct Box {
  Eigen::Vector2d center;
  Eigen::Vector2d axis_long;
  Eigen::Vector2d axis_lat;
  double half_length;
  double half_width;

  Box(const State& s, const AgentDims& d)
      : center(s(0), s(1)), axis_long(std::cos(s(2)), std::sin(s(2))),
        axis_lat(-std::sin(s(2)), std::cos(s(2))), half_length(0.5 * d.length),
        half_width(0.5 * d.width) {}

  double radius_along(const Eigen::Vector2d& axis) const {
    return half_length * std::abs(axis_long.dot(axis)) + half_width * std::abs(axis_lat.dot(axis));
  }
};

} // namespace

bool collision_check(const State& a, const AgentDims& dims_a, const State& b, const AgentDims& dims_b) {
  const Box ba(a, dims_a), bb(b, dims_b);
  const Eigen::Vector2d delta = bb.center - ba.center;
  for (const Eigen::Vector2d& axis : {ba.axis_long, ba.axis_lat, bb.axis_long, bb.axis_lat})
    if (std::abs(delta.dot(axis)) > ba.radius_along(axis) + bb.radius_along(axis)) return false;
  return true;
}

std::vector<CollisionEvent> collisions_at(const Scenario& scenario, Index frame) {
  std::vector<CollisionEvent> events;
  for (Index a = 0; a < scenario.num_agents(); ++a) {
    if (!scenario.valid(a, frame)) continue;
    for (Index b = a + 1; b < scenario.num_agents(); ++b) {
      if (!scenario.valid(b, frame)) continue;
      if (collision_check(scenario.states.at(a, frame), scenario.dims[a], scenario.states.at(b, frame),
                          scenario.dims[b]))
        events.push_back({static_cast<int>(frame), static_cast<int>(a), static_cast<int>(b)});
    }
  }
  return events;
}

} // namespace roadsim
