#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lgkde/graph.hpp"
#include "lgkde/matrix.hpp"
#include "lgkde/rng.hpp"

namespace lgkde::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& x : m.values()) x = u(rng);
  return m;
}

// Connected-ish random graph with degree-based features in column 0.
inline Graph random_graph(std::size_t n, double p, std::size_t d, Rng& rng) {
  std::bernoulli_distribution edge(p);
  Graph g;
  g.adjacency = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
  g.features = random_matrix(n, d, rng, 0.0, 1.0);
  const auto deg = degrees(g.adjacency);
  for (std::size_t i = 0; i < n; ++i)
    g.features(i, 0) = static_cast<double>(deg[i]) / static_cast<double>(std::max<std::size_t>(n, 2) - 1);
  return g;
}

inline std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Straight double loops over the V-statistic, no caching or cutoffs.
inline double brute_mmd_sq(const Matrix& a, const Matrix& b, double gamma) {
  const auto k = [&](const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - y(j, c)) * (x(i, c) - y(j, c));
    return std::exp(-gamma * s);
  };
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.rows(); ++j) aa += k(a, i, a, j);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) bb += k(b, i, b, j);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) ab += k(a, i, b, j);
  const double na = static_cast<double>(a.rows()), nb = static_cast<double>(b.rows());
  return std::max(0.0, aa / (na * na) + bb / (nb * nb) - 2.0 * ab / (na * nb));
}

inline double brute_mmd(const Matrix& a, const Matrix& b, const std::vector<double>& gammas) {
  double best = 0.0;
  for (double g : gammas) best = std::max(best, brute_mmd_sq(a, b, g));
  return std::sqrt(best);
}

inline double brute_density(const std::vector<double>& d, const std::vector<double>& h,
                            const std::vector<double>& pi) {
  const double c = std::sqrt(2.0 * 3.14159265358979323846);
  double f = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    double s = 0.0;
    for (double x : d) s += std::exp(-x * x / (2.0 * h[k] * h[k])) / (c * h[k]);
    f += pi[k] * s / static_cast<double>(d.size());
  }
  return f;
}

}  // namespace lgkde::test
