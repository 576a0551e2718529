#pragma once

#include <vector>

#include "lgkde/matrix.hpp"

namespace lgkde {

struct SvdResult {
  Matrix u;                               // n x n, orthonormal columns
  std::vector<double> singular_values;    // descending, non-negative
  Matrix v;                               // n x n, orthonormal columns
};

/// Full SVD of a square matrix by one-sided (Hestenes) Jacobi rotations.
///
/// Sweeps until every column pair is orthogonal to a relative tolerance of
/// 1e-12, capped at 100·n sweeps; exceeding the cap throws NumericalError.
/// Columns of U belonging to zero singular values are completed to an
/// orthonormal basis. Not recorded on any autodiff tape.
SvdResult svd(const Matrix& a);

/// U · diag(s) · Vᵀ.
Matrix reconstruct(const Matrix& u, const std::vector<double>& s, const Matrix& v);

}  // namespace lgkde
