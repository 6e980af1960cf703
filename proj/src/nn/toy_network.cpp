#include "roadsim/nn/toy_network.hpp"

#include "roadsim/error.hpp"
#include "roadsim/rng.hpp"

#include <cmath>
#include <optional>
#include <random>

namespace roadsim::nn {

void ToyDenoiserConfig::validate() const {
  if (feature_dim < 1 || num_heads < 1 || feature_dim % num_heads != 0)
    throw ConfigError("toy denoiser: feature_dim must be a positive multiple of num_heads");
  if (num_blocks < 0) throw ConfigError("toy denoiser: num_blocks must be non-negative");
  if (map_points_per_polyline < 2) throw ConfigError("toy denoiser: map_points_per_polyline must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("toy denoiser: learning_rate must be positive");
  if (train_steps < 0) throw ConfigError("toy denoiser: train_steps must be non-negative");
  if (batch_size < 1) throw ConfigError("toy denoiser: batch_size must be positive");
}

constexpr int kAnchorSpan = 6;

double residual_scale(int ahead, int channel) {
  const double k = std::abs(ahead);
  const double floor = channel == 2 ? 0.002 : 0.0005;
  const double grow = channel == 2 ? 0.0028 * k + 0.00002 * k * k : 0.0012 * k + 0.0001 * k * k;
  return std::sqrt(floor * floor + grow * grow);
}

MotionAnchor motion_anchor(const DenoiserInput& in, double sigma_data) {
  const SceneWindow& win = in.window;
  const Index A = win.agents(), W = win.slots();
  const double s2 = sigma_data * sigma_data;
  MotionAnchor m{States(A, W), Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(A, 3),
                 Eigen::Array<double, Eigen::Dynamic, 3>::Constant(W, 3, sigma_data)};
  std::vector<Index> obs;
  double sigma_obs = 0.0;
  for (Index w = 0; w < W; ++w)
    if (win.obs_mask[w]) {
      obs.push_back(w);
      sigma_obs = std::max(sigma_obs, in.slot_sigmas[w]);
    }
  if (obs.empty()) return m;
  // only the most recent observations: a longer fit lags turns and braking
  if (obs.size() > static_cast<std::size_t>(kAnchorSpan)) obs.erase(obs.begin(), obs.end() - kAnchorSpan);
  const Index first = obs.front(), last = obs.back();
  double tbar = 0.0;
  for (Index w : obs) tbar += static_cast<double>(w);
  tbar /= static_cast<double>(obs.size());
  double stt = 0.0;
  for (Index w : obs) stt += (w - tbar) * (w - tbar);

  // Treat the line as a noisy measurement of the clean state: its error is
  // the fit's prediction variance under the observation noise plus the
  // residual spread; shrink it toward the N(0, sigma_data^2) prior.
  Eigen::Array<double, Eigen::Dynamic, 3> fade(W, 3);
  for (Index w = 0; w < W; ++w) {
    const double t = static_cast<double>(w) - tbar;
    const double g = 1.0 / static_cast<double>(obs.size()) + (stt > 0.0 ? t * t / stt : 0.0);
    const Index ahead = w < first ? first - w : std::max<Index>(w - last, 0);
    for (int ch = 0; ch < 3; ++ch) {
      const double r = residual_scale(static_cast<int>(ahead), ch);
      const double v = r * r + sigma_obs * sigma_obs * g;
      fade(w, ch) = s2 / (s2 + v);
      m.scale(w, ch) = std::sqrt(fade(w, ch) * v);
    }
  }
  for (Index a = 0; a < A; ++a) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero(), slope = Eigen::RowVector3d::Zero();
    for (Index w : obs) mean += win.states.at(a, w);
    mean /= static_cast<double>(obs.size());
    if (stt > 0.0) {
      for (Index w : obs) slope += (w - tbar) * (win.states.at(a, w) - mean);
      slope /= stt;
    }
    m.velocity.row(a) = fade.row(last).matrix().cwiseProduct(slope);
    for (Index w = 0; w < W; ++w)
      m.at.at(a, w) = fade.row(w).matrix().cwiseProduct(mean + slope * (static_cast<double>(w) - tbar));
  }
  return m;
}

namespace {

constexpr double kSlotFreqs[] = {1.0, 0.45, 0.2, 0.08};
constexpr double kNoiseFreqs[] = {1.0, 2.5, 6.0};

template <typename Scalar>
Matrix<Scalar> token_features(const DenoiserInput& in, const ScheduleConfig& schedule, const MotionAnchor& anchor,
                              Eigen::Array<Scalar, Eigen::Dynamic, 3>& c_skip,
                              Eigen::Array<Scalar, Eigen::Dynamic, 3>& c_out) {
  const SceneWindow& win = in.window;
  const Index A = win.agents(), W = win.slots();
  const double floor = schedule.sigma_min / 10.0;
  const Index n_obs = win.obs_count();

  Matrix<Scalar> X(A * W, kTokenFeatures);
  c_skip.resize(W, 3);
  c_out.resize(W, 3);
  for (Index w = 0; w < W; ++w) {
    const auto pc = Preconditioning<double>::at(in.slot_sigmas[w], schedule.sigma_data, floor);
    double c_dev[3];
    for (int ch = 0; ch < 3; ++ch) {
      const auto rc = Preconditioning<double>::at(in.slot_sigmas[w], anchor.scale(w, ch), floor);
      c_skip(w, ch) = static_cast<Scalar>(rc.c_skip);
      c_out(w, ch) = static_cast<Scalar>(rc.c_out);
      c_dev[ch] = rc.c_in;
    }
    const double rel = static_cast<double>(w - n_obs);
    double shared[19];
    int k = 0;
    for (double f : kSlotFreqs) {
      shared[k++] = std::sin(rel * f);
      shared[k++] = std::cos(rel * f);
    }
    const double c = pc.c_noise;
    shared[k++] = c;
    shared[k++] = 0.25 * c * c;
    for (double f : kNoiseFreqs) {
      shared[k++] = std::sin(c * f);
      shared[k++] = std::cos(c * f);
    }
    shared[k++] = win.obs_mask[w] ? 1.0 : 0.0;
    for (Index a = 0; a < A; ++a) {
      const Index r = a * W + w;
      const Eigen::RowVector3d x = win.states.at(a, w), dev = x - anchor.at.at(a, w);
      for (int ch = 0; ch < 3; ++ch) {
        X(r, ch) = static_cast<Scalar>(pc.c_in * x(ch));
        X(r, 3 + ch) = static_cast<Scalar>(c_dev[ch] * dev(ch));
        X(r, 6 + ch) = static_cast<Scalar>(25.0 * anchor.velocity(a, ch));
      }
      for (int j = 0; j < k; ++j) X(r, 9 + j) = static_cast<Scalar>(shared[j]);
      X(r, 9 + k) = static_cast<Scalar>(in.cond[a].length - 4.5);
      X(r, 10 + k) = static_cast<Scalar>((in.cond[a].width - 1.8) / 0.5);
    }
  }
  return X;
}

template <typename Scalar>
Matrix<Scalar> map_features(const MapPolylines& map, int points) {
  Matrix<Scalar> M(static_cast<Index>(map.polylines.size()) * points, kMapFeatures);
  Index r = 0;
  for (const Polyline& raw : map.polylines) {
    const Polyline line = raw.rows() == points ? raw : resample_polyline(raw, points);
    for (int i = 0; i < points; ++i, ++r) {
      const int i0 = std::max(i - 1, 0), i1 = std::min(i + 1, points - 1);
      Eigen::RowVector2d t = line.row(i1) - line.row(i0);
      const double norm = t.norm();
      if (norm > 0) t /= norm;
      M(r, 0) = static_cast<Scalar>(line(i, 0));
      M(r, 1) = static_cast<Scalar>(line(i, 1));
      M(r, 2) = static_cast<Scalar>(t(0));
      M(r, 3) = static_cast<Scalar>(t(1));
    }
  }
  return M;
}

struct Groups {
  AttentionGroups time, agent, map;
};

Groups make_groups(const SceneWindow& win, Index map_points) {
  const int A = static_cast<int>(win.agents()), W = static_cast<int>(win.slots());
  Groups g;
  for (int a = 0; a < A; ++a) {
    std::vector<int> rows(W);
    for (int w = 0; w < W; ++w) rows[w] = a * W + w;
    g.time.queries.push_back(rows);
    g.time.keys.push_back(std::move(rows));
  }
  for (int w = 0; w < W; ++w) {
    std::vector<int> q, k;
    for (int a = 0; a < A; ++a) {
      q.push_back(a * W + w);
      if (win.agent_mask[a]) k.push_back(a * W + w);
    }
    g.agent.queries.push_back(std::move(q));
    g.agent.keys.push_back(std::move(k));
  }
  std::vector<int> all(A * W), pts(map_points);
  for (int i = 0; i < A * W; ++i) all[i] = i;
  for (int i = 0; i < map_points; ++i) pts[i] = i;
  g.map.queries.push_back(std::move(all));
  g.map.keys.push_back(std::move(pts));
  return g;
}

} // namespace

template <typename Scalar>
ToyNetwork<Scalar>::ToyNetwork(const ToyDenoiserConfig& cfg, const ScheduleConfig& schedule)
    : cfg_(cfg), schedule_(schedule) {
  cfg_.validate();
  schedule_.validate();
  const int F = cfg_.feature_dim;
  // every parameter is created up front so Parameter addresses stay stable
  std::uint64_t stream = derive_seed(cfg_.seed, "init");
  embed_w_ = add_param("embed.w", kTokenFeatures, F, 1.0, stream);
  embed_b_ = add_param("embed.b", 1, F, 0.0, stream);
  map_w1_ = add_param("map.w1", kMapFeatures, F, 1.0, stream);
  map_b1_ = add_param("map.b1", 1, F, 0.0, stream);
  map_w2_ = add_param("map.w2", F, F, 1.0, stream);
  map_b2_ = add_param("map.b2", 1, F, 0.0, stream);
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    Block blk;
    auto attn = [&](const std::string& tag, int& lg, int& lb, int& q, int& k, int& v, int& o, int& ob) {
      lg = add_param(pre + tag + ".ln.g", 1, F, -1.0, stream);
      lb = add_param(pre + tag + ".ln.b", 1, F, 0.0, stream);
      q = add_param(pre + tag + ".q", F, F, 1.0, stream);
      k = add_param(pre + tag + ".k", F, F, 1.0, stream);
      v = add_param(pre + tag + ".v", F, F, 1.0, stream);
      o = add_param(pre + tag + ".o", F, F, 0.5, stream);
      ob = add_param(pre + tag + ".o.b", 1, F, 0.0, stream);
    };
    attn("time", blk.ln_time_g, blk.ln_time_b, blk.q_time, blk.k_time, blk.v_time, blk.o_time, blk.o_time_b);
    attn("agent", blk.ln_agent_g, blk.ln_agent_b, blk.q_agent, blk.k_agent, blk.v_agent, blk.o_agent,
         blk.o_agent_b);
    attn("map", blk.ln_map_g, blk.ln_map_b, blk.q_map, blk.k_map, blk.v_map, blk.o_map, blk.o_map_b);
    blk.ln_mlp_g = add_param(pre + "mlp.ln.g", 1, F, -1.0, stream);
    blk.ln_mlp_b = add_param(pre + "mlp.ln.b", 1, F, 0.0, stream);
    blk.mlp_in = add_param(pre + "mlp.in", F, 2 * F, 1.0, stream);
    blk.mlp_in_b = add_param(pre + "mlp.in.b", 1, 2 * F, 0.0, stream);
    blk.mlp_out = add_param(pre + "mlp.out", 2 * F, F, 0.5, stream);
    blk.mlp_out_b = add_param(pre + "mlp.out.b", 1, F, 0.0, stream);
    blocks_.push_back(blk);
  }
  head_ln_g_ = add_param("head.ln.g", 1, F, -1.0, stream);
  head_ln_b_ = add_param("head.ln.b", 1, F, 0.0, stream);
  head_w_ = add_param("head.w", F, 3, 0.25, stream);
  head_b_ = add_param("head.b", 1, 3, 0.0, stream);
}

// init_scale > 0: N(0, init_scale^2 / fan_in); 0: zeros; < 0: ones (norm gains).
template <typename Scalar>
int ToyNetwork<Scalar>::add_param(const std::string& name, int rows, int cols, double init_scale,
                                  std::uint64_t& stream) {
  Parameter<Scalar> prm;
  prm.name = name;
  if (init_scale > 0.0) {
    Rng rng(stream);
    stream = derive_seed(stream, name);
    std::normal_distribution<double> normal(0.0, init_scale / std::sqrt(static_cast<double>(rows)));
    prm.value.resize(rows, cols);
    for (Index i = 0; i < prm.value.size(); ++i) prm.value.data()[i] = static_cast<Scalar>(normal(rng));
  } else if (init_scale == 0.0) {
    prm.value = Mat::Zero(rows, cols);
  } else {
    prm.value = Mat::Ones(rows, cols);
  }
  prm.zero_grad();
  params_.push_back(std::move(prm));
  return static_cast<int>(params_.size()) - 1;
}

template <typename Scalar>
typename Tape<Scalar>::Var ToyNetwork<Scalar>::p(Tape<Scalar>& tape, int index) const {
  if (tape.recording())
    return tape.param(const_cast<Parameter<Scalar>&>(params_[index]));
  return tape.constant(params_[index]);
}

template <typename Scalar>
typename ToyNetwork<Scalar>::Output ToyNetwork<Scalar>::forward(Tape<Scalar>& tape, const DenoiserInput& in) const {
  validate_input(in);
  using Var = typename Tape<Scalar>::Var;
  const int heads = cfg_.num_heads;

  Output out;
  out.anchor = motion_anchor(in, schedule_.sigma_data);
  Var h = tape.input(token_features<Scalar>(in, schedule_, out.anchor, out.c_skip, out.c_out));
  h = tape.add_bias(tape.matmul(h, p(tape, embed_w_)), p(tape, embed_b_));

  const Index map_points = static_cast<Index>(in.map.polylines.size()) * cfg_.map_points_per_polyline;
  Var m{};
  if (map_points > 0) {
    m = tape.input(map_features<Scalar>(in.map, cfg_.map_points_per_polyline));
    m = tape.silu(tape.add_bias(tape.matmul(m, p(tape, map_w1_)), p(tape, map_b1_)));
    m = tape.add_bias(tape.matmul(m, p(tape, map_w2_)), p(tape, map_b2_));
  }
  const Groups groups = make_groups(in.window, map_points);

  auto residual_attention = [&](Var x, int lg, int lb, int q, int k, int v, int o, int ob,
                                const AttentionGroups& g, std::optional<Var> memory) {
    Var u = tape.layer_norm(x, p(tape, lg), p(tape, lb));
    Var src = memory ? *memory : u;
    Var a = tape.attention(tape.matmul(u, p(tape, q)), tape.matmul(src, p(tape, k)), tape.matmul(src, p(tape, v)),
                           g, heads);
    return tape.add(x, tape.add_bias(tape.matmul(a, p(tape, o)), p(tape, ob)));
  };

  for (const Block& b : blocks_) {
    h = residual_attention(h, b.ln_time_g, b.ln_time_b, b.q_time, b.k_time, b.v_time, b.o_time, b.o_time_b,
                           groups.time, std::nullopt);
    h = residual_attention(h, b.ln_agent_g, b.ln_agent_b, b.q_agent, b.k_agent, b.v_agent, b.o_agent, b.o_agent_b,
                           groups.agent, std::nullopt);
    if (map_points > 0)
      h = residual_attention(h, b.ln_map_g, b.ln_map_b, b.q_map, b.k_map, b.v_map, b.o_map, b.o_map_b, groups.map,
                             m);
    Var u = tape.layer_norm(h, p(tape, b.ln_mlp_g), p(tape, b.ln_mlp_b));
    u = tape.silu(tape.add_bias(tape.matmul(u, p(tape, b.mlp_in)), p(tape, b.mlp_in_b)));
    h = tape.add(h, tape.add_bias(tape.matmul(u, p(tape, b.mlp_out)), p(tape, b.mlp_out_b)));
  }
  Var u = tape.layer_norm(h, p(tape, head_ln_g_), p(tape, head_ln_b_));
  out.raw = tape.add_bias(tape.matmul(u, p(tape, head_w_)), p(tape, head_b_));
  return out;
}

// D = mu + c_skip (x - mu) + c_out F, mu the motion anchor
template <typename Scalar>
States ToyNetwork<Scalar>::combine(const Output& out, const Mat& raw, const States& x) {
  States d(x.agents, x.slots);
  for (Index r = 0; r < x.data.rows(); ++r) {
    const Index w = r % x.slots;
    for (int c = 0; c < 3; ++c) {
      const double mu = out.anchor.at.data(r, c);
      d.data(r, c) = mu + static_cast<double>(out.c_skip(w, c)) * (x.data(r, c) - mu) +
                     static_cast<double>(out.c_out(w, c)) * static_cast<double>(raw(r, c));
    }
  }
  return d;
}

template <typename Scalar>
States ToyNetwork<Scalar>::denoise(const DenoiserInput& in) const {
  Tape<Scalar> tape(false);
  const Output out = forward(tape, in);
  const Mat& raw = tape.value(out.raw);
  const States& x = in.window.states;
  return combine(out, raw, x);
}

template <typename Scalar>
double ToyNetwork<Scalar>::accumulate_gradient(const TrainingBatch& batch, double loss_scale) {
  Tape<Scalar> tape(true);
  const DenoiserInput in{batch.noisy, batch.slot_sigmas, batch.map, batch.cond};
  const Output out = forward(tape, in);
  const Mat& raw = tape.value(out.raw);
  const States& x = batch.noisy.states;
  const States d = combine(out, raw, x);
  const double loss = road_loss(d, batch);
  const States grad = road_loss_grad(d, batch);
  Mat seed(raw.rows(), 3);
  for (Index r = 0; r < seed.rows(); ++r) {
    const Index w = r % x.slots;
    for (int c = 0; c < 3; ++c)
      seed(r, c) = static_cast<Scalar>(loss_scale * static_cast<double>(out.c_out(w, c)) * grad.data(r, c));
  }
  tape.backward(out.raw, seed);
  return loss;
}

template <typename Scalar>
std::size_t ToyNetwork<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& prm : params_) n += static_cast<std::size_t>(prm.value.size());
  return n;
}

template <typename Scalar>
void ToyNetwork<Scalar>::zero_grad() {
  for (auto& prm : params_) prm.zero_grad();
}

template class ToyNetwork<float>;
template class ToyNetwork<double>;

std::shared_ptr<ToyNetwork<float>> toy_denoiser(const ToyDenoiserConfig& cfg, const ScheduleConfig& schedule) {
  return std::make_shared<ToyNetwork<float>>(cfg, schedule);
}

} // namespace roadsim::nn
