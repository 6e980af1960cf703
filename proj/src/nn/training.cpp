#include "roadsim/config.hpp"
#include "roadsim/error.hpp"
#include "roadsim/nn/toy_network.hpp"
#include "roadsim/rng.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace roadsim::nn {

using nlohmann::json;

template <typename Scalar>
void Adam<Scalar>::step(std::vector<Parameter<Scalar>>& params, double lr_scale) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (m_.size() != params.size()) throw StateError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  const Scalar lr = static_cast<Scalar>(lr_ * lr_scale * std::sqrt(c2) / c1);
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& g = params[i].grad;
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
    params[i].value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

namespace {

// linear warm-up over the first 2% of steps, cosine decay to 10%
double lr_scale_at(int step, int total) {
  const int warm = std::max(1, total / 50);
  if (step < warm) return static_cast<double>(step + 1) / warm;
  const double progress = static_cast<double>(step - warm) / std::max(1, total - warm);
  return 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

} // namespace

FitResult fit(ToyNetwork<float>& net, const std::vector<Scenario>& dataset, const BatchConfig& batch_cfg,
              std::function<void(int, double)> progress) {
  const ToyDenoiserConfig& cfg = net.config();
  if (dataset.empty()) throw InputError("fit: empty training corpus");
  for (const Scenario& sc : dataset)
    if (sc.num_frames() < batch_cfg.schedule.window)
      throw InputError("fit: scenario '" + sc.id + "' is shorter than the window");

  Rng rng(derive_seed(cfg.seed, "train"));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  Adam<float> adam(cfg.learning_rate);
  FitResult result;
  double ema = 0.0;
  for (int step = 0; step < cfg.train_steps; ++step) {
    net.zero_grad();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TrainingBatch batch = make_training_batch(dataset[pick(rng)], batch_cfg, rng);
      loss += net.accumulate_gradient(batch, 1.0 / cfg.batch_size);
    }
    loss /= cfg.batch_size;
    if (!std::isfinite(loss))
      throw StateError("fit: non-finite loss at step " + std::to_string(step) +
                       " (lower training.model.learning_rate or check the corpus for outliers)");
    adam.step(net.parameters(), lr_scale_at(step, cfg.train_steps));
    ema = 0.99 * ema + 0.01 * loss;
    result.losses.push_back(loss);
    result.smoothed.push_back(ema / (1.0 - std::pow(0.99, step + 1)));
    if (progress && (step + 1) % 500 == 0) progress(step + 1, result.smoothed.back());
  }
  return result;
}

void save_checkpoint(const ToyNetwork<float>& net, const CheckpointMeta& meta, const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& p : net.parameters()) {
    std::vector<float> flat(p.value.data(), p.value.data() + p.value.size());
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"values", flat}});
  }
  const json j = {{"format_version", kCheckpointFormatVersion},
                  {"seed", meta.seed},
                  {"window", meta.window},
                  {"task", to_string(meta.batch.task)},
                  {"p_ca", meta.batch.p_ca},
                  {"log_uniform_ca", meta.batch.log_uniform_ca},
                  {"schedule", net.schedule()},
                  {"model", net.config()},
                  {"parameters", std::move(params)}};
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::pair<std::shared_ptr<ToyNetwork<float>>, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw InputError(path.string() + ": unsupported checkpoint format_version");
    CheckpointMeta meta;
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.window = j.at("window").get<int>();
    const std::string task = j.at("task").get<std::string>();
    if (task == to_string(TrainTask::rolling)) meta.batch.task = TrainTask::rolling;
    else if (task == to_string(TrainTask::joint)) meta.batch.task = TrainTask::joint;
    else throw InputError(path.string() + ": unknown task '" + task + "'");
    meta.batch.p_ca = j.at("p_ca").get<double>();
    meta.batch.log_uniform_ca = j.at("log_uniform_ca").get<bool>();
    meta.batch.schedule = j.at("schedule").get<ScheduleConfig>();
    const auto model = j.at("model").get<ToyDenoiserConfig>();

    auto net = std::make_shared<ToyNetwork<float>>(model, meta.batch.schedule);
    auto& params = net->parameters();
    const json& stored = j.at("parameters");
    if (stored.size() != params.size()) throw InputError(path.string() + ": parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& s = stored[i];
      if (s.at("name").get<std::string>() != params[i].name || s.at("rows").get<Index>() != params[i].value.rows() ||
          s.at("cols").get<Index>() != params[i].value.cols())
        throw InputError(path.string() + ": parameter '" + params[i].name + "' does not match the architecture");
      const auto flat = s.at("values").get<std::vector<float>>();
      if (static_cast<Index>(flat.size()) != params[i].value.size())
        throw InputError(path.string() + ": parameter '" + params[i].name + "' has the wrong size");
      std::copy(flat.begin(), flat.end(), params[i].value.data());
    }
    return {net, meta};
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

} // namespace roadsim::nn
