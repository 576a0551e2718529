#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lgkde/autodiff.hpp"
#include "lgkde/gnn.hpp"
#include "lgkde/graph.hpp"

namespace lgkde {

/// Gaussian kernels k(u, v) = exp(-γ‖u − v‖²), γ ascending and distinct.
struct KernelFamily {
  std::vector<double> gammas;

  /// γ = 1/h² for h in {0.01, 0.1, 1, 10, 100}.
  static KernelFamily defaults();
  static KernelFamily from_bandwidths(std::span<const double> h);
  /// Sorts, deduplicates and checks positivity.
  static KernelFamily from_gammas(std::vector<double> gammas);
  std::size_t size() const noexcept { return gammas.size(); }
};

// Kernel terms with γ‖u − v‖² above this are below 5e-18 and skipped.
inline constexpr double kKernelCutoff = 40.0;

/// Biased (V-statistic) squared MMD with a single Gaussian kernel, clamped at 0.
double mmd_sq(const Matrix& zi, const Matrix& zj, double gamma);

struct MmdDistance {
  double distance = 0.0;
  std::size_t argmax = 0;  // index into the family's gammas
};

/// sqrt(max over γ of mmd_sq); ties go to the smallest index.
MmdDistance mmd_distance(const Matrix& zi, const Matrix& zj, const KernelFamily& family);

ad::Var mmd_sq(ad::Var zi, ad::Var zj, double gamma);
ad::Var mmd_distance(ad::Var zi, ad::Var zj, const KernelFamily& family);

/// Fused Q x R distance block: entry (a, b) is the MMD distance between
/// embeddings[queries[a]] and embeddings[references[b]]. Entries whose two
/// indices coincide are exactly 0. The gradient of each entry flows through
/// its maximizing kernel only and is 0 wherever the distance is 0.
ad::Var pairwise_mmd(std::span<const ad::Var> embeddings, std::span<const std::size_t> queries,
                     std::span<const std::size_t> references, const KernelFamily& family);

/// Embeddings plus their per-γ self kernel sums, reused across many pairs.
struct EmbeddingSet {
  std::vector<Matrix> z;
  std::vector<std::vector<long double>> self_sums;
  std::vector<std::string> ids;
};

EmbeddingSet embed(const GraphSet& graphs, const GnnParams& params, const KernelFamily& family);
EmbeddingSet embed(std::vector<Matrix> z, const KernelFamily& family);

struct DistanceMatrix {
  Matrix values;
  std::vector<std::size_t> argmax;  // row-major, same layout as values
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
};

/// All query/reference pairs. Passing the same set twice with self_mode
/// evaluates the upper triangle only and mirrors it.
DistanceMatrix distance_matrix(const EmbeddingSet& queries, const EmbeddingSet& references,
                               const KernelFamily& family, bool self_mode = false);
/// Encodes and compares; references == nullptr compares queries with themselves.
DistanceMatrix distance_matrix(const GraphSet& queries, const GraphSet* references,
                               const GnnParams& params, const KernelFamily& family);

void write_distance_csv(std::ostream& out, const DistanceMatrix& d);
void write_distance_csv(const std::filesystem::path& path, const DistanceMatrix& d);

}  // namespace lgkde
