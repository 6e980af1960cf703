#pragma once

#include "roadsim/diffusion.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace roadsim {

struct DenoiserInput {
  const SceneWindow& window;
  Eigen::ArrayXd slot_sigmas;  // one noise level per slot, shared by all agents
  const MapPolylines& map;
  const std::vector<AgentDims>& cond;
};

// Clean-data estimator D(x; sigma, map, cond).
class Denoiser {
public:
  virtual ~Denoiser() = default;
  virtual States denoise(const DenoiserInput& input) const = 0;
};

// Throws InputError on non-finite states or sigmas, or mismatched sizes.
void validate_input(const DenoiserInput& input);

// EDM preconditioning coefficients for one noise level.
template <typename Scalar>
struct Preconditioning {
  Scalar c_skip, c_out, c_in, c_noise;

  static Preconditioning at(Scalar sigma, Scalar sigma_data, Scalar sigma_floor) {
    const Scalar s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    Preconditioning p;
    p.c_skip = d2 / (s2 + d2);
    p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
    p.c_in = Scalar(1) / std::sqrt(s2 + d2);
    p.c_noise = std::log(std::max(sigma, sigma_floor)) / Scalar(4);
    return p;
  }
};

// Exact posterior mean for data x0 ~ N(mean, scale^2) per element:
// (s^2 x + sigma^2 mu) / (s^2 + sigma^2).
class GaussianOracle final : public Denoiser {
public:
  GaussianOracle(double mean, double scale);
  GaussianOracle(States mean, double scale);

  States denoise(const DenoiserInput& input) const override;

private:
  double mean_scalar_ = 0.0;
  std::optional<States> mean_;
  double scale_;
};

std::shared_ptr<Denoiser> oracle_gaussian(double mean, double scale);

} // namespace roadsim
