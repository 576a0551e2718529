#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lgkde/autodiff.hpp"
#include "lgkde/rng.hpp"

namespace lgkde {

/// Multi-scale KDE over scalar distances: f = Σ_k softmax(logits)_k · φ_k
/// with φ_k the mean Gaussian kernel at bandwidth h_k (intrinsic dimension 1).
struct KdeParams {
  std::vector<double> bandwidths;
  std::vector<double> logits;

  /// h in {0.01, 0.1, 1, 10, 100}, logits 1/M.
  static KdeParams defaults();
  static KdeParams with_bandwidths(std::vector<double> h);
  std::vector<double> weights() const;
  void validate() const;
};

struct DensityResult {
  double density = 0.0;
  std::vector<double> components;
  std::vector<double> weights;
};

/// exp(-d²/(2h²)) / (sqrt(2π)·h).
double kde_kernel(double d, double h);
/// Mean kernel value over the reference distances.
double component_density(std::span<const double> distances, double h);
DensityResult density(std::span<const double> distances, const KdeParams& params);

/// Row-wise densities of a Q x R distance matrix. A non-null mask (Q x R of
/// 0/1) restricts each row to its 1-entries, e.g. for leave-one-out.
std::vector<DensityResult> densities(const Matrix& distances, const KdeParams& params,
                                     const Matrix* mask = nullptr);

/// Tape form: distances Q x R, logits 1 x M (leaf for training) -> Q x 1.
ad::Var density(ad::Var distances, ad::Var logits, std::span<const double> bandwidths,
                const Matrix* mask = nullptr);

/// Mask with zeros where the query index equals the reference index.
Matrix leave_one_out_mask(std::span<const std::size_t> queries,
                          std::span<const std::size_t> references);

/// Density terciles (stable rank order, cut at floor(N/3) and floor(2N/3))
/// keep floor(0.9·size), floor(0.8·size), floor(0.7·size) members from low
/// to high density. Returns sorted reference indices.
std::vector<std::size_t> stratified_sample(std::span<const double> densities, Rng& rng);

/// ceil(ratio·N) indices drawn without replacement with weights
/// 1/(1+exp(-(ρ_i − median ρ))). Returns sorted reference indices.
std::vector<std::size_t> importance_sample(std::span<const double> densities, double ratio,
                                           Rng& rng);

void write_density_csv(std::ostream& out, std::span<const std::string> ids,
                       std::span<const DensityResult> rows, std::span<const double> bandwidths);
void write_density_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                       std::span<const DensityResult> rows, std::span<const double> bandwidths);

}  // namespace lgkde
