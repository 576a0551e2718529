#include "lgkde/kde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

KdeParams KdeParams::defaults() { return with_bandwidths({0.01, 0.1, 1.0, 10.0, 100.0}); }

KdeParams KdeParams::with_bandwidths(std::vector<double> h) {
  KdeParams p;
  p.bandwidths = std::move(h);
  p.logits.assign(p.bandwidths.size(), 1.0 / static_cast<double>(p.bandwidths.size()));
  p.validate();
  return p;
}

std::vector<double> KdeParams::weights() const { return ad::softmax(logits); }

void KdeParams::validate() const {
  if (bandwidths.empty()) throw ValidationError("KDE needs at least one bandwidth");
  if (logits.size() != bandwidths.size()) {
    throw DimensionError("KDE logits and bandwidths differ in length");
  }
  for (std::size_t k = 0; k < bandwidths.size(); ++k) {
    if (!(bandwidths[k] > 0.0) || !std::isfinite(bandwidths[k])) {
      throw ValidationError("KDE bandwidths must be positive");
    }
    if (k > 0 && !(bandwidths[k] > bandwidths[k - 1])) {
      throw ValidationError("KDE bandwidths must be strictly ascending");
    }
    if (!std::isfinite(logits[k])) throw ValidationError("KDE logits must be finite");
  }
}

double kde_kernel(double d, double h) {
  return std::exp(-d * d / (2.0 * h * h)) / (kSqrt2Pi * h);
}

double component_density(std::span<const double> distances, double h) {
  if (distances.empty()) throw ValidationError("KDE reference set is empty");
  double s = 0.0;
  for (double d : distances) s += kde_kernel(d, h);
  return s / static_cast<double>(distances.size());
}

DensityResult density(std::span<const double> distances, const KdeParams& params) {
  DensityResult r;
  r.weights = params.weights();
  for (std::size_t k = 0; k < params.bandwidths.size(); ++k) {
    r.components.push_back(component_density(distances, params.bandwidths[k]));
    r.density += r.weights[k] * r.components.back();
  }
  return r;
}

std::vector<DensityResult> densities(const Matrix& distances, const KdeParams& params,
                                     const Matrix* mask) {
  if (mask != nullptr && !mask->same_shape(distances)) {
    throw DimensionError("KDE mask shape " + mask->shape_string() + " vs distances " +
                         distances.shape_string());
  }
  std::vector<DensityResult> out(distances.rows());
  std::vector<double> row;
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    row.clear();
    for (std::size_t j = 0; j < distances.cols(); ++j)
      if (mask == nullptr || (*mask)(i, j) != 0.0) row.push_back(distances(i, j));
    out[i] = density(row, params);
  }
  return out;
}

ad::Var density(ad::Var distances, ad::Var logits, std::span<const double> bandwidths,
                const Matrix* mask) {
  ad::Tape& t = *distances.tape();
  const std::size_t q = distances.rows(), r = distances.cols();
  if (r == 0) throw ValidationError("KDE reference set is empty");
  if (logits.value().size() != bandwidths.size()) {
    throw DimensionError("KDE logits and bandwidths differ in length");
  }
  Matrix inv_count(q, 1, 1.0 / static_cast<double>(r));
  if (mask != nullptr) {
    if (mask->rows() != q || mask->cols() != r) throw DimensionError("KDE mask shape mismatch");
    for (std::size_t i = 0; i < q; ++i) {
      double c = 0.0;
      for (std::size_t j = 0; j < r; ++j) c += (*mask)(i, j);
      if (c == 0.0) throw ValidationError("KDE mask leaves a query without references");
      inv_count(i, 0) = 1.0 / c;
    }
  }
  const ad::Var ones = t.constant(Matrix(r, 1, 1.0));
  const ad::Var inv = t.constant(std::move(inv_count));
  const ad::Var mask_var = mask != nullptr ? t.constant(*mask) : ad::Var();
  const ad::Var sq = ad::square(distances);
  std::vector<ad::Var> columns;
  for (double h : bandwidths) {
    ad::Var k = ad::exp(ad::scale(sq, -1.0 / (2.0 * h * h)));
    if (mask != nullptr) k = ad::mul(k, mask_var);
    ad::Var phi = ad::mul(ad::matmul(k, ones), inv);
    columns.push_back(ad::scale(phi, 1.0 / (kSqrt2Pi * h)));
  }
  const ad::Var comps = columns.size() == 1 ? columns[0] : ad::hstack(columns);
  ad::Var w = ad::softmax(logits);
  if (w.rows() == 1) w = ad::transpose(w);
  return ad::matmul(comps, w);
}

Matrix leave_one_out_mask(std::span<const std::size_t> queries,
                          std::span<const std::size_t> references) {
  Matrix m(queries.size(), references.size(), 1.0);
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < references.size(); ++j)
      if (queries[i] == references[j]) m(i, j) = 0.0;
  return m;
}

std::vector<std::size_t> stratified_sample(std::span<const double> densities, Rng& rng) {
  const std::size_t n = densities.size();
  if (n < 3) throw ValidationError("stratified sampling needs at least 3 references");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return densities[a] < densities[b]; });
  const std::size_t cuts[] = {0, n / 3, 2 * n / 3, n};
  const double keep[] = {0.9, 0.8, 0.7};
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> stratum(order.begin() + static_cast<std::ptrdiff_t>(cuts[s]),
                                     order.begin() + static_cast<std::ptrdiff_t>(cuts[s + 1]));
    const auto k =
        static_cast<std::size_t>(std::floor(keep[s] * static_cast<double>(stratum.size()) + 1e-9));
    std::shuffle(stratum.begin(), stratum.end(), rng);
    out.insert(out.end(), stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> importance_sample(std::span<const double> densities, double ratio,
                                           Rng& rng) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("sampling ratio must lie in (0,1]");
  const std::size_t n = densities.size();
  if (n == 0) throw ValidationError("importance sampling needs references");
  const auto q = std::min(
      n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9)));
  const double med = median(std::vector<double>(densities.begin(), densities.end()));
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (1.0 + std::exp(-(densities[i] - med)));
  std::vector<std::size_t> out;
  if (q == n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  // Sequential draws without replacement, renormalizing over what is left.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t draw = 0; draw < q; ++draw) {
    double total = 0.0;
    for (double x : w) total += x;
    double r = u(rng) * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      pick = i;
      if (r < w[i]) break;
      r -= w[i];
    }
    out.push_back(pick);
    w[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_density_csv(std::ostream& out, std::span<const std::string> ids,
                       std::span<const DensityResult> rows, std::span<const double> bandwidths) {
  out << "id,density";
  for (double h : bandwidths) out << ",component_h" << h;
  for (double h : bandwidths) out << ",weight_h" << h;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << (i < ids.size() ? ids[i] : std::to_string(i)) << ',' << rows[i].density;
    for (double c : rows[i].components) out << ',' << c;
    for (double w : rows[i].weights) out << ',' << w;
    out << '\n';
  }
}

void write_density_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                       std::span<const DensityResult> rows, std::span<const double> bandwidths) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_density_csv(out, ids, rows, bandwidths);
}

}  // namespace lgkde
