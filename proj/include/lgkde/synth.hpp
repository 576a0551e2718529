#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgkde/graph.hpp"
#include "lgkde/rng.hpp"

namespace lgkde {

enum class Family { er, ba, ws, sbm };

Family parse_family(const std::string& name);
std::string family_name(Family f);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Anomaly tags per family:
///   er:  extreme   (p far from the Beta mode, U[0.02,0.12] or U[0.88,0.98])
///   ba:  weak      (m = 1), rewire (30% of edges moved)
///   ws:  lattice   (p ~ U[0,0.05]), random (p ~ U[0.8,1])
///   sbm: flat      (p_in = p_out ~ U[0.15,0.35]), inverted (ranges swapped)
struct GenSpec {
  Family family = Family::er;
  std::size_t count = 100;
  std::size_t n_min = 20;
  std::size_t n_max = 50;

  double beta_a = 2.0;
  double beta_b = 2.0;
  std::optional<double> er_p;  // fixed p instead of a Beta draw

  std::size_t ba_m = 3;

  std::size_t ws_k = 4;
  double ws_p = 0.2;

  std::size_t sbm_c = 3;
  Interval sbm_p_in{0.4, 0.8};
  Interval sbm_p_out{0.01, 0.10};

  std::string anomaly;  // empty for normal graphs
  std::uint64_t seed = 0;
};

void validate_spec(const GenSpec& spec);

using GraphParams = std::map<std::string, double>;

struct Generated {
  GraphSet graphs;
  std::vector<GraphParams> params;  // true generating parameters, per graph
};

/// Dispatches on spec.family. Graph i is drawn from its own stream
/// derive_seed(spec.seed, i). Normal graphs get label 0, anomalies 1.
Generated generate(const GenSpec& spec);

Generated gen_er(const GenSpec& spec);
Generated gen_ba(const GenSpec& spec);
Generated gen_ws(const GenSpec& spec);
Generated gen_sbm(const GenSpec& spec);

// Single-graph building blocks.
Matrix er_adjacency(std::size_t n, double p, Rng& rng);
Matrix ba_adjacency(std::size_t n, std::size_t m, Rng& rng);
Matrix ws_adjacency(std::size_t n, std::size_t k, double p, Rng& rng);
Matrix sbm_adjacency(std::size_t n, std::size_t c, double p_in, double p_out, Rng& rng);
/// Moves round(fraction·|E|) edges to node pairs that were not edges before.
Matrix rewire_edges(const Matrix& adjacency, double fraction, Rng& rng);
/// Community of node i: i / ceil(n / c).
std::vector<std::size_t> sbm_blocks(std::size_t n, std::size_t c);

void write_sidecar(const std::filesystem::path& path, const GenSpec& spec, const Generated& g);

// Structural statistics.
bool is_connected(const Matrix& adjacency);
double average_clustering(const Matrix& adjacency);
/// Mean shortest-path length over ordered pairs in the largest connected component.
double average_path_length_lcc(const Matrix& adjacency);
double modularity(const Matrix& adjacency, const std::vector<std::size_t>& community);
/// Label propagation with `restarts` random sweeps orders followed by greedy
/// community merging; the partition with the best modularity is returned,
/// relabelled 0..c-1 in order of first appearance.
std::vector<std::size_t> detect_communities(const Matrix& adjacency, std::size_t restarts = 20,
                                            std::uint64_t seed = 0x5eed);

struct TargetParams {
  double beta_a = 2.0;
  double beta_b = 2.0;
  std::size_t ba_m = 3;
};

double beta_pdf(double x, double a, double b);
double ws_score(double clustering, double path_length, std::size_t n);

/// Ground-truth structural score in [0, 1] (ER: Beta pdf, unbounded above).
/// Edgeless graphs score 0 with a warning.
double target_density(Family family, const Graph& g, const TargetParams& params = {});

}  // namespace lgkde
