#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace lgkde {

/// One evaluation of the function under test: its value and the tape's
/// branch signature (relu masks, argmax choices) at that point.
struct Probe {
  double value = 0.0;
  std::uint64_t branch = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Parameters whose ±step stencil crossed a kink (branch signature changed).
  std::size_t excluded = 0;
  std::size_t worst_index = 0;
};

/// Compares `analytic` against central differences of `f` at `params`.
/// Relative error per parameter is |analytic − numeric| / (|numeric| + 1e-12).
/// A parameter is excluded when f(x − h), f(x) and f(x + h) do not all report
/// the same branch signature. Throws NumericalError on non-finite values.
GradCheckResult finite_diff_check(const std::function<Probe(std::span<const double>)>& f,
                                  std::span<const double> params,
                                  std::span<const double> analytic, double step);

}  // namespace lgkde
