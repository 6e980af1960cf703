#include "roadsim/denoiser.hpp"

#include "roadsim/error.hpp"

namespace roadsim {

void validate_input(const DenoiserInput& input) {
  const SceneWindow& win = input.window;
  if (input.slot_sigmas.size() != win.slots())
    throw InputError("denoiser: slot_sigmas length does not match the window");
  if (!input.slot_sigmas.allFinite() || (input.slot_sigmas < 0.0).any())
    throw InputError("denoiser: slot sigmas must be finite and non-negative");
  if (!win.states.data.allFinite()) throw InputError("denoiser: non-finite window states");
  if (static_cast<Index>(input.cond.size()) != win.agents())
    throw InputError("denoiser: conditioning does not match the agent count");
}

GaussianOracle::GaussianOracle(double mean, double scale) : mean_scalar_(mean), scale_(scale) {
  if (!(scale > 0.0)) throw ConfigError("oracle_gaussian: scale must be positive");
}

GaussianOracle::GaussianOracle(States mean, double scale) : mean_(std::move(mean)), scale_(scale) {
  if (!(scale > 0.0)) throw ConfigError("oracle_gaussian: scale must be positive");
}

States GaussianOracle::denoise(const DenoiserInput& input) const {
  validate_input(input);
  const States& x = input.window.states;
  if (mean_ && !mean_->same_shape(x)) throw InputError("oracle_gaussian: mean shape mismatch");
  States out = x;
  const double s2 = scale_ * scale_;
  for (Index a = 0; a < x.agents; ++a)
    for (Index w = 0; w < x.slots; ++w) {
      const double sig2 = input.slot_sigmas[w] * input.slot_sigmas[w];
      if (sig2 == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        const double mu = mean_ ? mean_->at(a, w)(c) : mean_scalar_;
        out.at(a, w)(c) = mu + s2 / (s2 + sig2) * (x.at(a, w)(c) - mu);
      }
    }
  return out;
}

std::shared_ptr<Denoiser> oracle_gaussian(double mean, double scale) {
  return std::make_shared<GaussianOracle>(mean, scale);
}

} // namespace roadsim
