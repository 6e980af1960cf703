#include "roadsim/error.hpp"
#include "roadsim/world.hpp"

#include <algorithm>
#include <cmath>

namespace roadsim {

ReplayController::ReplayController(Eigen::Matrix<double, Eigen::Dynamic, 3> track, double time_scale)
    : track_(std::move(track)), time_scale_(time_scale) {
  if (!(time_scale > 0.0 && time_scale <= 1.0))
    throw ConfigError("replay controller: time_scale must lie in (0, 1]");
  if (track_.rows() == 0) throw InputError("replay controller: empty track");
}

State ReplayController::state_at(double log_time) const {
  const double last = static_cast<double>(track_.rows() - 1);
  const double t = std::clamp(log_time, 0.0, last);
  const Index i = std::min(static_cast<Index>(std::floor(t)), track_.rows() - 1);
  if (i == track_.rows() - 1) return track_.row(i);
  const double f = t - static_cast<double>(i);
  if (f == 0.0) return track_.row(i);
  return (1.0 - f) * track_.row(i) + f * track_.row(i + 1);
}

State ReplayController::next_state(const States& /*history*/, int step) const {
  return state_at(time_scale_ * step);
}

std::shared_ptr<EgoController> replay_controller(Eigen::Matrix<double, Eigen::Dynamic, 3> track,
                                                 double time_scale) {
  return std::make_shared<ReplayController>(std::move(track), time_scale);
}

} // namespace roadsim
