#include "lgkde/grad_check.hpp"

#include <cmath>
#include <vector>

#include "lgkde/error.hpp"

namespace lgkde {

GradCheckResult finite_diff_check(const std::function<Probe(std::span<const double>)>& f,
                                  std::span<const double> params,
                                  std::span<const double> analytic, double step) {
  if (!(step > 0.0)) throw ValidationError("finite difference step must be positive");
  if (params.size() != analytic.size()) {
    throw DimensionError("analytic gradient length does not match parameter count");
  }
  std::vector<double> x(params.begin(), params.end());
  const Probe center = f(x);
  if (!std::isfinite(center.value)) throw NumericalError("non-finite function value");

  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    x[i] = original + step;
    const Probe up = f(x);
    x[i] = original - step;
    const Probe down = f(x);
    x[i] = original;
    if (!std::isfinite(up.value) || !std::isfinite(down.value)) {
      throw NumericalError("non-finite function value at parameter " + std::to_string(i));
    }
    if (up.branch != center.branch || down.branch != center.branch) {
      ++result.excluded;
      continue;
    }
    const double numeric = (up.value - down.value) / (2.0 * step);
    const double rel = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12);
    ++result.checked;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace lgkde
