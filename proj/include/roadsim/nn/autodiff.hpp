#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices, covering
// the layer set of the toy denoiser: affine maps, SiLU, layer normalization
// and grouped multi-head attention.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace roadsim::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Query group g attends over key group g. Row indices refer to the query and
// key/value matrices respectively.
struct AttentionGroups {
  std::vector<std::vector<int>> queries;
  std::vector<std::vector<int>> keys;
};

template <typename Scalar>
class Tape {
public:
  using Mat = Matrix<Scalar>;

  struct Var {
    int id = -1;
  };

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(128); }

  bool recording() const { return record_; }

  Var input(Mat value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  // Read-only view of a parameter; gradients are not collected.
  Var constant(const Parameter<Scalar>& p) {
    Node n;
    n.ref = &p.value;
    return push(std::move(n));
  }

  // Parameter leaf; backward() accumulates into p.grad.
  Var param(Parameter<Scalar>& p) {
    Node n;
    n.ref = &p.value;
    n.param = record_ ? &p : nullptr;
    return push(std::move(n));
  }

  const Mat& value(Var v) const { return nodes_[v.id].value(); }

  Var matmul(Var a, Var b) {
    Var out = input(value(a) * value(b));
    if (record_)
      nodes_[out.id].back = [this, a, b, out] {
        const Mat& g = nodes_[out.id].grad;
        if (wants_grad(a)) grad(a).noalias() += g * value(b).transpose();
        if (wants_grad(b)) grad(b).noalias() += value(a).transpose() * g;
      };
    return out;
  }

  Var add(Var a, Var b) {
    Var out = input(value(a) + value(b));
    if (record_)
      nodes_[out.id].back = [this, a, b, out] {
        const Mat& g = nodes_[out.id].grad;
        if (wants_grad(a)) grad(a) += g;
        if (wants_grad(b)) grad(b) += g;
      };
    return out;
  }

  // a + broadcast of the 1 x cols row `bias`
  Var add_bias(Var a, Var bias) {
    Mat v = value(a);
    v.rowwise() += value(bias).row(0);
    Var out = input(std::move(v));
    if (record_)
      nodes_[out.id].back = [this, a, bias, out] {
        const Mat& g = nodes_[out.id].grad;
        if (wants_grad(a)) grad(a) += g;
        if (wants_grad(bias)) grad(bias).row(0) += g.colwise().sum();
      };
    return out;
  }

  Var silu(Var a) {
    const Mat& x = value(a);
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar xi = x.data()[i];
      y.data()[i] = xi / (Scalar(1) + std::exp(-xi));
    }
    Var out = input(std::move(y));
    if (record_)
      nodes_[out.id].back = [this, a, out] {
        if (!wants_grad(a)) return;
        const Mat& x = value(a);
        const Mat& g = nodes_[out.id].grad;
        Mat& ga = grad(a);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const Scalar xi = x.data()[i];
          const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-xi));
          ga.data()[i] += g.data()[i] * s * (Scalar(1) + xi * (Scalar(1) - s));
        }
      };
    return out;
  }

  // Row-wise normalization with learned 1 x cols gain and bias.
  Var layer_norm(Var x, Var gamma, Var beta) {
    constexpr Scalar eps = Scalar(1e-5);
    const Mat& xv = value(x);
    const Eigen::Index cols = xv.cols();
    Mat xhat(xv.rows(), cols);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const Scalar mean = xv.row(r).mean();
      const Scalar var = (xv.row(r).array() - mean).square().mean();
      inv_std[r] = Scalar(1) / std::sqrt(var + eps);
      xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
    }
    Mat y = xhat;
    y.array().rowwise() *= value(gamma).row(0).array();
    y.rowwise() += value(beta).row(0);
    Var out = input(std::move(y));
    if (record_)
      nodes_[out.id].back = [this, x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Mat& g = nodes_[out.id].grad;
        if (wants_grad(gamma)) grad(gamma).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
        if (wants_grad(beta)) grad(beta).row(0) += g.colwise().sum();
        if (!wants_grad(x)) return;
        Mat dxhat = g;
        dxhat.array().rowwise() *= value(gamma).row(0).array();
        Mat& gx = grad(x);
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const Scalar m1 = dxhat.row(r).mean();
          const Scalar m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
          gx.row(r).array() += inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
      };
    return out;
  }

  // Scaled dot-product attention with `heads` heads over column blocks.
  // Queries whose key group is empty receive zeros.
  Var attention(Var q, Var k, Var v, const AttentionGroups& groups, int heads) {
    const Mat& Q = value(q);
    const Mat& K = value(k);
    const Mat& V = value(v);
    const Eigen::Index F = Q.cols();
    if (F % heads != 0 || K.cols() != F || V.cols() != F || K.rows() != V.rows())
      throw std::invalid_argument("attention: inconsistent shapes");
    const Eigen::Index d = F / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

    Mat O = Mat::Zero(Q.rows(), F);
    std::vector<Mat> probs;  // per (group, head)
    if (record_) probs.reserve(groups.queries.size() * heads);
    for (std::size_t g = 0; g < groups.queries.size(); ++g) {
      const auto& qi = groups.queries[g];
      const auto& ki = groups.keys[g];
      if (qi.empty() || ki.empty()) {
        if (record_)
          for (int h = 0; h < heads; ++h) probs.emplace_back();
        continue;
      }
      const Mat Qg = Q(qi, Eigen::all);
      const Mat Kg = K(ki, Eigen::all);
      const Mat Vg = V(ki, Eigen::all);
      Mat Og(qi.size(), F);
      for (int h = 0; h < heads; ++h) {
        Mat S = (Qg.middleCols(h * d, d) * Kg.middleCols(h * d, d).transpose()) * scale;
        softmax_rows(S);
        Og.middleCols(h * d, d).noalias() = S * Vg.middleCols(h * d, d);
        if (record_) probs.push_back(std::move(S));
      }
      O(qi, Eigen::all) = Og;
    }
    Var out = input(std::move(O));
    if (record_)
      nodes_[out.id].back = [this, q, k, v, out, groups, heads, d, scale, probs = std::move(probs)] {
        const Mat& G = nodes_[out.id].grad;
        const Mat& Q = value(q);
        const Mat& K = value(k);
        const Mat& V = value(v);
        const Eigen::Index F = Q.cols();
        for (std::size_t g = 0; g < groups.queries.size(); ++g) {
          const auto& qi = groups.queries[g];
          const auto& ki = groups.keys[g];
          if (qi.empty() || ki.empty()) continue;
          const Mat Qg = Q(qi, Eigen::all);
          const Mat Kg = K(ki, Eigen::all);
          const Mat Vg = V(ki, Eigen::all);
          const Mat Gg = G(qi, Eigen::all);
          Mat dQ = Mat::Zero(qi.size(), F), dK = Mat::Zero(ki.size(), F), dV = Mat::Zero(ki.size(), F);
          for (int h = 0; h < heads; ++h) {
            const Mat& P = probs[g * heads + h];
            const auto Gh = Gg.middleCols(h * d, d);
            Mat dP = Gh * Vg.middleCols(h * d, d).transpose();
            dV.middleCols(h * d, d).noalias() += P.transpose() * Gh;
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = (dP.array() * P.array()).rowwise().sum();
            Mat dS = P.array() * (dP.array().colwise() - rowdot.array());
            dQ.middleCols(h * d, d).noalias() += scale * dS * Kg.middleCols(h * d, d);
            dK.middleCols(h * d, d).noalias() += scale * dS.transpose() * Qg.middleCols(h * d, d);
          }
          if (wants_grad(q)) scatter_add(grad(q), qi, dQ);
          if (wants_grad(k)) scatter_add(grad(k), ki, dK);
          if (wants_grad(v)) scatter_add(grad(v), ki, dV);
        }
      };
    return out;
  }

  // Seeds d(out) and propagates to every recorded node; parameter gradients
  // are accumulated into their Parameter::grad.
  void backward(Var out, const Mat& seed) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    grad(out) += seed;
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back();
      if (n.param) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

private:
  struct Node {
    Mat owned;
    const Mat* ref = nullptr;
    Parameter<Scalar>* param = nullptr;
    Mat grad;
    std::function<void()> back;
    const Mat& value() const { return ref ? *ref : owned; }
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Constants (no param, no backward closure) never need a gradient buffer.
  bool wants_grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param != nullptr || static_cast<bool>(n.back);
  }

  Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value().rows(), n.value().cols());
    return n.grad;
  }

  static void softmax_rows(Mat& S) {
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
      const Scalar m = S.row(r).maxCoeff();
      S.row(r) = (S.row(r).array() - m).exp();
      S.row(r) /= S.row(r).sum();
    }
  }

  static void scatter_add(Mat& dst, const std::vector<int>& rows, const Mat& src) {
    for (std::size_t i = 0; i < rows.size(); ++i) dst.row(rows[i]) += src.row(static_cast<Eigen::Index>(i));
  }

  std::vector<Node> nodes_;
  bool record_;
};

} // namespace roadsim::nn
