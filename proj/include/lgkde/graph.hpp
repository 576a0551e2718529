#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgkde/matrix.hpp"

namespace lgkde {

/// Undirected simple graph stored densely: symmetric 0/1 adjacency with a
/// zero diagonal plus an n x d node feature matrix.
struct Graph {
  Matrix adjacency;
  Matrix features;
  std::optional<int> label;  // 0 normal, 1 anomalous
  std::string id;

  std::size_t num_nodes() const noexcept { return adjacency.rows(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }

  friend bool operator==(const Graph&, const Graph&) = default;
};

struct GraphSet {
  std::vector<Graph> graphs;
  std::size_t feature_dim = 0;

  std::size_t size() const noexcept { return graphs.size(); }
  bool empty() const noexcept { return graphs.empty(); }
  const Graph& operator[](std::size_t i) const { return graphs[i]; }

  /// Appends after checking the shared feature dimension.
  void add(Graph g);
  friend bool operator==(const GraphSet&, const GraphSet&) = default;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate(const Graph& g);
/// Throws ValidationError listing every violation.
void require_valid(const Graph& g);

/// D^{-1/2}(A + I)D^{-1/2} with degrees taken from A + I.
Matrix normalized_adjacency(const Graph& g);

/// Node i of the result is node perm[i] of the input.
Graph permute(const Graph& g, std::span<const std::size_t> perm);

std::vector<std::size_t> degrees(const Matrix& adjacency);
std::size_t edge_count(const Matrix& adjacency);
std::vector<std::pair<std::size_t, std::size_t>> edge_list(const Matrix& adjacency);
Matrix adjacency_from_edges(std::size_t n,
                            std::span<const std::pair<std::size_t, std::size_t>> edges);

/// degree / max degree per node (all zeros for an edgeless graph), n x 1.
Matrix normalized_degree_features(const Matrix& adjacency);
/// degree / (n − 1) per node (zeros for n < 2), n x 1.
Matrix degree_centrality_features(const Matrix& adjacency);

/// Local clustering coefficient per node; 0 for degree < 2.
std::vector<double> local_clustering(const Matrix& adjacency);
/// Columns [degree / (n − 1), local clustering], n x 2.
Matrix degree_clustering_features(const Matrix& adjacency);

}  // namespace lgkde
