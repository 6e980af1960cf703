#pragma once

#include "roadsim/denoiser.hpp"
#include "roadsim/nn/autodiff.hpp"


#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

namespace roadsim::nn {

struct ToyDenoiserConfig {
  int feature_dim = 32;
  int num_blocks = 2;
  int num_heads = 2;
  int map_points_per_polyline = 8;
  double learning_rate = 2e-3;
  int train_steps = 20000;
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Feature counts of the token and map-point inputs.
inline constexpr int kTokenFeatures = 28;
inline constexpr int kMapFeatures = 4;

// Per-agent constant-velocity line fitted (least squares) through the last
// few observation slots and evaluated at every slot, shrunk toward zero by
// how well it predicts the clean state given the observation noise.
// `scale` is the remaining spread of the clean state around it per slot and
// channel (sigma_data without observations); `velocity` is the shrunk slope.
struct MotionAnchor {
  States at;
  Eigen::Matrix<double, Eigen::Dynamic, 3> velocity;
  Eigen::Array<double, Eigen::Dynamic, 3> scale;
};
MotionAnchor motion_anchor(const DenoiserInput& input, double sigma_data);

// Spread of clean states around a line fitted to clean observations,
// `ahead` slots outside its fit span (channel 2 is heading). Measured on the
// synthetic corpus: ~3 cm next to the span, ~10 m forty slots out.
double residual_scale(int ahead, int channel);

// Reduced-scale scene transformer: per-token embedding of the preconditioned
// state, slot index, noise level, agent size and observation flag; blocks of
// attention over the window axis, the agent axis and the map points; linear
// head. Wrapped in EDM preconditioning around the motion anchor mu, so that
// D = mu + c_skip (x - mu) + c_out F. The coefficients use the anchor's
// scale as data scale, since x - mu is far smaller than the data whenever
// the observations are informative.
template <typename Scalar>
class ToyNetwork {
public:
  using Mat = Matrix<Scalar>;

  ToyNetwork(const ToyDenoiserConfig& cfg, const ScheduleConfig& schedule);

  const ToyDenoiserConfig& config() const { return cfg_; }
  const ScheduleConfig& schedule() const { return schedule_; }

  States denoise(const DenoiserInput& input) const;

  // Loss of the batch and accumulation of its gradient into the parameters.
  double accumulate_gradient(const TrainingBatch& batch, double loss_scale = 1.0);

  std::vector<Parameter<Scalar>>& parameters() { return params_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  template <typename Other>
  void copy_parameters_from(const ToyNetwork<Other>& other);

private:
  struct Block {
    int ln_time_g, ln_time_b, q_time, k_time, v_time, o_time, o_time_b;
    int ln_agent_g, ln_agent_b, q_agent, k_agent, v_agent, o_agent, o_agent_b;
    int ln_map_g, ln_map_b, q_map, k_map, v_map, o_map, o_map_b;
    int ln_mlp_g, ln_mlp_b, mlp_in, mlp_in_b, mlp_out, mlp_out_b;
  };

  struct Output {
    typename Tape<Scalar>::Var raw;
    Eigen::Array<Scalar, Eigen::Dynamic, 3> c_skip, c_out;  // per slot and channel
    MotionAnchor anchor;
  };
  static States combine(const Output& out, const Mat& raw, const States& x);

  int add_param(const std::string& name, int rows, int cols, double init_scale, std::uint64_t& stream);
  typename Tape<Scalar>::Var p(Tape<Scalar>& tape, int index) const;
  Output forward(Tape<Scalar>& tape, const DenoiserInput& input) const;

  ToyDenoiserConfig cfg_;
  ScheduleConfig schedule_;
  std::vector<Parameter<Scalar>> params_;
  int embed_w_ = -1, embed_b_ = -1;
  int map_w1_ = -1, map_b1_ = -1, map_w2_ = -1, map_b2_ = -1;
  std::vector<Block> blocks_;
  int head_ln_g_ = -1, head_ln_b_ = -1, head_w_ = -1, head_b_ = -1;
};

template <typename Scalar>
template <typename Other>
void ToyNetwork<Scalar>::copy_parameters_from(const ToyNetwork<Other>& other) {
  const auto& src = other.parameters();
  if (src.size() != params_.size()) throw std::invalid_argument("copy_parameters_from: architecture mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (src[i].value.rows() != params_[i].value.rows() || src[i].value.cols() != params_[i].value.cols())
      throw std::invalid_argument("copy_parameters_from: shape mismatch at " + params_[i].name);
    params_[i].value = src[i].value.template cast<Scalar>();
  }
}

extern template class ToyNetwork<float>;
extern template class ToyNetwork<double>;

// Denoiser adaptor around a shared, read-only network.
template <typename Scalar>
class ToyDenoiser final : public Denoiser {
public:
  explicit ToyDenoiser(std::shared_ptr<const ToyNetwork<Scalar>> net) : net_(std::move(net)) {}
  States denoise(const DenoiserInput& input) const override { return net_->denoise(input); }
  const ToyNetwork<Scalar>& network() const { return *net_; }

private:
  std::shared_ptr<const ToyNetwork<Scalar>> net_;
};

std::shared_ptr<ToyNetwork<float>> toy_denoiser(const ToyDenoiserConfig& cfg, const ScheduleConfig& schedule);

// ---------------------------------------------------------------------------
// Training

// Adaptive-moment optimizer with decoupled first/second moment estimates.
template <typename Scalar>
class Adam {
  using Mat = Matrix<Scalar>;

public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Parameter<Scalar>>& params, double lr_scale = 1.0);
  int steps_taken() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

struct FitResult {
  std::vector<double> losses;  // per optimizer step
  std::vector<double> smoothed;  // exponential moving average of losses
};

// Trains on batches drawn from `dataset` (scenarios in scene units).
// `progress` (optional) is called every 500 steps with (step, smoothed loss).
FitResult fit(ToyNetwork<float>& net, const std::vector<Scenario>& dataset, const BatchConfig& batch_cfg,
              std::function<void(int, double)> progress = {});

// ---------------------------------------------------------------------------
// Checkpoints (JSON)

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  BatchConfig batch;
  std::uint64_t seed = 0;
  int window = 0;  // slots the model was trained on
};

void save_checkpoint(const ToyNetwork<float>& net, const CheckpointMeta& meta, const std::filesystem::path& path);
std::pair<std::shared_ptr<ToyNetwork<float>>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

} // namespace roadsim::nn
