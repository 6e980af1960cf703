#pragma once

#include <Eigen/Core>

#include <random>

namespace roadsim {

using Eigen::Index;

// Per-agent, per-slot (x, y, heading) states stored as an (agents*slots) x 3
// row-major matrix; row a*slots + w holds agent a at slot w.
template <typename Scalar>
struct StateTensor {
  using Rows = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

  Index agents = 0;
  Index slots = 0;
  Rows data;

  StateTensor() = default;
  StateTensor(Index num_agents, Index num_slots)
      : agents(num_agents), slots(num_slots), data(Rows::Zero(num_agents * num_slots, 3)) {}

  Index index(Index a, Index w) const { return a * slots + w; }
  auto at(Index a, Index w) { return data.row(index(a, w)); }
  auto at(Index a, Index w) const { return data.row(index(a, w)); }

  bool same_shape(const StateTensor& other) const {
    return agents == other.agents && slots == other.slots;
  }

  // Copies slots [first, first + count) of every agent.
  StateTensor slice(Index first, Index count) const {
    StateTensor out(agents, count);
    for (Index a = 0; a < agents; ++a)
      out.data.middleRows(a * count, count) = data.middleRows(index(a, first), count);
    return out;
  }

  // Writes `src` (same agent count) into slots starting at `first`.
  void assign_slots(Index first, const StateTensor& src) {
    for (Index a = 0; a < agents; ++a)
      data.middleRows(index(a, first), src.slots) = src.data.middleRows(a * src.slots, src.slots);
  }

  template <typename Other>
  StateTensor<Other> cast() const {
    StateTensor<Other> out;
    out.agents = agents;
    out.slots = slots;
    out.data = data.template cast<Other>();
    return out;
  }

  bool operator==(const StateTensor& other) const {
    return same_shape(other) && data == other.data;
  }
};

using States = StateTensor<double>;

template <typename Derived, typename Gen>
void fill_standard_normal(Eigen::MatrixBase<Derived>& m, Gen& rng) {
  std::normal_distribution<typename Derived::Scalar> normal;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
}

} // namespace roadsim
