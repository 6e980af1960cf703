#pragma once

// Reference geometry for the separating-axis collision test. Nothing here
// calls into roadsim's geometry code.

#include "roadsim/world.hpp"

#include <array>
#include <cmath>
#include <random>

namespace oracle {

using Vec = Eigen::Vector2d;

inline std::array<Vec, 4> corners(const roadsim::State& s, double length, double width) {
  const Vec c(s(0), s(1));
  const Vec u(std::cos(s(2)), std::sin(s(2))), v(-std::sin(s(2)), std::cos(s(2)));
  const double hl = 0.5 * length, hw = 0.5 * width;
  return {c + hl * u + hw * v, c - hl * u + hw * v, c - hl * u - hw * v, c + hl * u - hw * v};
}

inline bool inside(const Vec& p, const roadsim::State& s, double length, double width) {
  const Vec d(p.x() - s(0), p.y() - s(1));
  const double along = d.x() * std::cos(s(2)) + d.y() * std::sin(s(2));
  const double across = -d.x() * std::sin(s(2)) + d.y() * std::cos(s(2));
  return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
}

inline double cross(const Vec& a, const Vec& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool segments_touch(const Vec& p1, const Vec& p2, const Vec& q1, const Vec& q2) {
  const double d1 = cross(q2 - q1, p1 - q1), d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1), d4 = cross(p2 - p1, q2 - p1);
  return ((d1 <= 0 && d2 >= 0) || (d1 >= 0 && d2 <= 0)) && ((d3 <= 0 && d4 >= 0) || (d3 >= 0 && d4 <= 0));
}

// Closed rectangles overlap iff an edge pair intersects or one contains the other.
inline bool exact_overlap(const roadsim::State& a, double la, double wa, const roadsim::State& b, double lb,
                          double wb) {
  const auto ca = corners(a, la, wa), cb = corners(b, lb, wb);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (segments_touch(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) return true;
  return inside(ca[0], b, lb, wb) || inside(cb[0], a, la, wa);
}

// 10^4 points on the boundary of A plus both centers, tested for containment.
inline bool sampled_overlap(const roadsim::State& a, double la, double wa, const roadsim::State& b, double lb,
                            double wb, int points = 10000) {
  const auto ca = corners(a, la, wa);
  const double perimeter = 2.0 * (la + wa);
  for (int k = 0; k < points; ++k) {
    double s = perimeter * k / points;
    int edge = 0;
    const double lens[4] = {la, wa, la, wa};  // corner order walks the length first
    while (edge < 3 && s > lens[edge]) s -= lens[edge++];
    const Vec p = ca[edge] + (ca[(edge + 1) % 4] - ca[edge]) * (s / lens[edge]);
    if (inside(p, b, lb, wb)) return true;
  }
  return inside(Vec(b(0), b(1)), a, la, wa) || inside(Vec(a(0), a(1)), b, lb, wb);
}

struct Pair {
  roadsim::State a, b;
  roadsim::AgentDims da, db;
};

inline Pair random_pair(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-2.5, 2.5), ang(-M_PI, M_PI), len(1.0, 5.0), wid(0.5, 2.5);
  Pair p;
  p.a << pos(rng), pos(rng), ang(rng);
  p.b << pos(rng), pos(rng), ang(rng);
  p.da = {len(rng), wid(rng)};
  p.db = {len(rng), wid(rng)};
  return p;
}

// True when growing or shrinking both rectangles by `band` changes the answer.
inline bool in_band(const Pair& p, double band) {
  const bool grown = exact_overlap(p.a, p.da.length + 2 * band, p.da.width + 2 * band, p.b, p.db.length + 2 * band,
                                   p.db.width + 2 * band);
  const bool shrunk = exact_overlap(p.a, p.da.length - 2 * band, p.da.width - 2 * band, p.b,
                                    p.db.length - 2 * band, p.db.width - 2 * band);
  return grown != shrunk;
}

} // namespace oracle
