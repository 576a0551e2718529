#pragma once

#include <cstdint>
#include <vector>

#include "lgkde/graph.hpp"
#include "lgkde/rng.hpp"

namespace lgkde {

struct PerturbationConfig {
  double r_swap = 0.1;
  double tau1 = 0.5;
  double tau2 = 0.75;
  double p_pert = 0.3;
  double r_max = 10.0;
  std::size_t n_pert = 2;
  std::uint64_t seed = 0;
};

void validate_config(const PerturbationConfig& cfg);

/// Grouping of singular values by cumulative squared energy. Indices are
/// 0-based positions into the descending singular value sequence.
struct EnergyPartition {
  std::vector<std::size_t> high;  // E(i) <= tau1
  std::vector<std::size_t> mid;   // tau1 < E(i) <= tau2
  std::vector<std::size_t> low;   // E(i) > tau2
  std::vector<double> cumulative_energy;
  double ratio = 1.0;
};

/// Replaces floor(r_swap·n) randomly chosen rows by a random permutation of
/// themselves; the other rows are left untouched.
Matrix feature_perturb(const Matrix& x, double r_swap, Rng& rng);

/// Throws DegenerateInputError when every singular value is zero.
///
/// With n >= 2, an empty high group receives index 0 and an empty low group
/// receives index n-1 (taken from whichever group held it). With n == 1 the
/// partition is left as computed and the ratio is 1. The ratio is
/// min(mean(high)/mean(low), r_max), or r_max when mean(low) is 0.
EnergyPartition energy_partition(const std::vector<double>& sigma, double tau1, double tau2,
                                 double r_max = 10.0);

enum class EdgeFlag { remove = 0, add = 1 };

/// Rescales up to floor(p_pert·n) singular values of the eligible group
/// (high for removal, divided by r; low for addition, multiplied by r),
/// reconstructs, thresholds at 0.5, symmetrizes by OR and clears the
/// diagonal. Degenerate spectra return the input unchanged.
Matrix spectral_perturb(const Matrix& adjacency, const PerturbationConfig& cfg, EdgeFlag flag,
                        Rng& rng);

/// feature_perturb then spectral_perturb with a uniformly drawn flag.
Graph generate_sample(const Graph& g, const PerturbationConfig& cfg, Rng& rng);
Graph generate_sample(const Graph& g, const PerturbationConfig& cfg, Rng& rng, EdgeFlag& flag);

/// (|E(b)| - |E(a)|) / max(|E(a)|, 1).
double edge_change_ratio(const Matrix& before, const Matrix& after);

}  // namespace lgkde
