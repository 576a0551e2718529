#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgkde/trainer.hpp"

namespace lgkde {

/// Training graphs prepared for scoring: embeddings with kernel self sums and
/// each reference graph's leave-one-out density (used for thresholds and
/// for density-aware subsampling).
struct ReferenceIndex {
  EmbeddingSet embeddings;
  std::vector<double> densities;
};

ReferenceIndex build_reference(const GraphSet& reference, const Model& model);

enum class SampleMode { none, stratified, importance };
SampleMode parse_sample_mode(const std::string& name);

struct SampleOptions {
  SampleMode mode = SampleMode::none;
  double ratio = 1.0;  // importance sampling only
  std::uint64_t seed = 0;
};

/// Reference indices that a query is compared against.
std::vector<std::size_t> select_references(const ReferenceIndex& ref, const SampleOptions& opt);

struct ScoreResult {
  std::vector<std::string> ids;
  std::vector<DensityResult> densities;
  std::vector<double> scores;  // −density
  std::size_t references_used = 0;
};

ScoreResult score(const GraphSet& queries, const ReferenceIndex& ref, const Model& model,
                  const SampleOptions& opt = {});

/// Nearest-rank percentile: the ceil(γ/100·N)-th smallest value (at least the first).
double percentile_nearest_rank(std::span<const double> values, double gamma);
/// τ = −percentile_nearest_rank(densities, γ).
double threshold(std::span<const double> reference_densities, double gamma = 10.0);
/// score ≥ τ, i.e. density at or below the reference percentile.
std::vector<int> classify(std::span<const double> scores, double tau);

/// Mann–Whitney AUROC with ties counted 1/2. Labels: 1 anomalous (positive).
double auroc(std::span<const double> scores, std::span<const int> labels);
/// Average precision Σ (R_i − R_{i−1}) P_i over descending distinct thresholds.
double auprc(std::span<const double> scores, std::span<const int> labels);
/// Trapezoidal area under the same precision-recall points, starting at (0, 1).
double auprc_trapezoid(std::span<const double> scores, std::span<const int> labels);
/// FPR at the highest threshold whose TPR reaches 0.95.
double fpr95(std::span<const double> scores, std::span<const int> labels);

/// mean density of normals − mean density of anomalies, against `reference`.
double density_gap(const Model& model, const GraphSet& normals, const GraphSet& anomalies,
                   const GraphSet& reference);
double density_gap(std::span<const double> normal_densities,
                   std::span<const double> anomaly_densities);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct EvalReport {
  ScoreResult result;
  std::vector<std::optional<int>> labels;
  double percentile = 10.0;
  double tau = 0.0;
  std::vector<int> predictions;
  std::optional<double> auroc;
  std::optional<double> auprc;
  std::optional<double> fpr95;
  std::optional<double> density_gap;
  std::string notice;
};

EvalReport evaluate(const GraphSet& queries, const ReferenceIndex& ref, const Model& model,
                    double percentile = 10.0, const SampleOptions& opt = {});

std::string report_json(const EvalReport& report);
void write_score_csv(std::ostream& out, const EvalReport& report);
void write_score_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace lgkde
