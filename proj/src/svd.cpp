#include "lgkde/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

constexpr double kTolerance = 1e-12;

// Rotates columns p and q of m by the Givens pair (c, s).
void rotate_columns(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double mp = m(i, p), mq = m(i, q);
    m(i, p) = c * mp - s * mq;
    m(i, q) = s * mp + c * mq;
  }
}

// Fills columns flagged in `missing` with unit vectors orthogonal to every
// other column (modified Gram-Schmidt against the standard basis).
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t n = u.rows();
  std::size_t candidate = 0;
  for (std::size_t col = 0; col < n; ++col) {
    if (!missing[col]) continue;
    for (; candidate < n; ++candidate) {
      std::vector<double> w(n, 0.0);
      w[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < n; ++k) {
          if (k == col || (missing[k] && k > col)) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += u(i, k) * w[i];
          for (std::size_t i = 0; i < n; ++i) w[i] -= dot * u(i, k);
        }
      }
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < n; ++i) u(i, col) = w[i] / norm;
        ++candidate;
        break;
      }
    }
  }
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError("svd expects a non-empty square matrix, got " + a.shape_string());
  }
  if (!a.all_finite()) throw NumericalError("svd input contains non-finite entries");
  const std::size_t n = a.rows();
  Matrix u = a;
  Matrix v = Matrix::identity(n);
  const std::size_t max_sweeps = 100 * n;

  // Columns below this squared norm count as exact zeros; their coupling
  // ratio would otherwise underflow.
  const double fro = frobenius_norm(a);
  const double negligible = fro * fro * 1e-30;
  bool converged = false;
  double worst = 0.0;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += u(i, p) * u(i, p);
          beta += u(i, q) * u(i, q);
          gamma += u(i, p) * u(i, q);
        }
        if (gamma == 0.0 || alpha <= negligible || beta <= negligible) continue;
        const double off = std::abs(gamma) / (std::sqrt(alpha) * std::sqrt(beta));
        worst = std::max(worst, off);
        if (off <= kTolerance) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_columns(u, p, q, c, s);
        rotate_columns(v, p, q, c, s);
      }
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd did not converge after " << max_sweeps << " sweeps on a " << a.shape_string()
        << " matrix (frobenius norm " << fro << ", worst column coupling "
        << worst << ")";
    throw NumericalError(msg.str());
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += u(i, j) * u(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{Matrix(n, n), std::vector<double>(n), Matrix(n, n)};
  const double cutoff =
      (sigma[order[0]] > 0.0 ? sigma[order[0]] : 1.0) * static_cast<double>(n) *
      std::numeric_limits<double>::epsilon();
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const bool nonzero = sigma[j] > cutoff;
    out.singular_values[k] = nonzero ? sigma[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out.v(i, k) = v(i, j);
      out.u(i, k) = nonzero ? u(i, j) / sigma[j] : 0.0;
    }
    missing[k] = !nonzero;
  }
  if (std::any_of(missing.begin(), missing.end(), [](bool m) { return m; })) {
    complete_basis(out.u, missing);
  }
  return out;
}

Matrix reconstruct(const Matrix& u, const std::vector<double>& s, const Matrix& v) {
  if (u.cols() != s.size() || v.cols() != s.size()) {
    throw DimensionError("reconstruct: factor shapes do not agree");
  }
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < s.size(); ++k) us(i, k) *= s[k];
  return matmul_bt(us, v);
}

}  // namespace lgkde
