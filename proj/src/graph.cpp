#include "lgkde/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lgkde/error.hpp"

namespace lgkde {

void GraphSet::add(Graph g) {
  if (graphs.empty()) {
    feature_dim = g.feature_dim();
  } else if (g.feature_dim() != feature_dim) {
    throw ValidationError("graph '" + g.id + "' has feature dimension " +
                          std::to_string(g.feature_dim()) + ", expected " +
                          std::to_string(feature_dim));
  }
  graphs.push_back(std::move(g));
}

ValidationReport validate(const Graph& g) {
  ValidationReport report;
  auto& out = report.violations;
  const Matrix& a = g.adjacency;
  if (a.rows() != a.cols()) {
    out.push_back("adjacency is not square: " + a.shape_string());
    return report;
  }
  const std::size_t n = a.rows();
  if (n == 0) out.push_back("graph has no nodes");
  for (std::size_t i = 0; i < n; ++i) {
    if (a(i, i) != 0.0) out.push_back("nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double x = a(i, j);
      if (x != 0.0 && x != 1.0) {
        std::ostringstream m;
        m << "non-binary adjacency entry " << x << " at (" << i << "," << j << ")";
        out.push_back(m.str());
      }
      if (j > i && x != a(j, i)) {
        out.push_back("asymmetric adjacency at (" + std::to_string(i) + "," + std::to_string(j) +
                      ")");
      }
    }
  }
  if (g.features.rows() != n) {
    out.push_back("feature rows " + std::to_string(g.features.rows()) + " != node count " +
                  std::to_string(n));
  }
  for (std::size_t i = 0; i < g.features.rows(); ++i)
    for (std::size_t j = 0; j < g.features.cols(); ++j)
      if (!std::isfinite(g.features(i, j))) {
        out.push_back("non-finite feature at row " + std::to_string(i) + ", col " +
                      std::to_string(j));
      }
  if (g.label && *g.label != 0 && *g.label != 1) {
    out.push_back("label must be 0 or 1, got " + std::to_string(*g.label));
  }
  return report;
}

void require_valid(const Graph& g) {
  const ValidationReport r = validate(g);
  if (r.ok()) return;
  std::string msg = "invalid graph '" + g.id + "':";
  for (const auto& v : r.violations) msg += "\n  " + v;
  throw ValidationError(msg);
}

Matrix normalized_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += g.adjacency(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = g.adjacency(i, j) + (i == j ? 1.0 : 0.0);
      if (aij != 0.0) out(i, j) = aij * inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  return out;
}

Graph permute(const Graph& g, std::span<const std::size_t> perm) {
  const std::size_t n = g.num_nodes();
  if (perm.size() != n) throw ValidationError("permutation length does not match node count");
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw ValidationError("permutation is not a bijection");
    seen[p] = true;
  }
  Graph out;
  out.id = g.id;
  out.label = g.label;
  out.adjacency = Matrix(n, n);
  out.features = Matrix(n, g.feature_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.adjacency(i, j) = g.adjacency(perm[i], perm[j]);
    for (std::size_t c = 0; c < g.feature_dim(); ++c) out.features(i, c) = g.features(perm[i], c);
  }
  return out;
}

std::vector<std::size_t> degrees(const Matrix& adjacency) {
  std::vector<std::size_t> deg(adjacency.rows(), 0);
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (std::size_t j = 0; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) ++deg[i];
  return deg;
}

std::size_t edge_count(const Matrix& adjacency) {
  std::size_t e = 0;
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (std::size_t j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) ++e;
  return e;
}

std::vector<std::pair<std::size_t, std::size_t>> edge_list(const Matrix& adjacency) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (std::size_t j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) edges.emplace_back(i, j);
  return edges;
}

Matrix adjacency_from_edges(std::size_t n,
                            std::span<const std::pair<std::size_t, std::size_t>> edges) {
  Matrix a(n, n);
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw ValidationError("edge endpoint out of range");
    if (u == v) continue;
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

Matrix normalized_degree_features(const Matrix& adjacency) {
  const auto deg = degrees(adjacency);
  const std::size_t max_deg = deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
  Matrix x(deg.size(), 1);
  if (max_deg == 0) return x;
  for (std::size_t i = 0; i < deg.size(); ++i)
    x(i, 0) = static_cast<double>(deg[i]) / static_cast<double>(max_deg);
  return x;
}

Matrix degree_centrality_features(const Matrix& adjacency) {
  const auto deg = degrees(adjacency);
  Matrix x(deg.size(), 1);
  if (deg.size() < 2) return x;
  const auto denom = static_cast<double>(deg.size() - 1);
  for (std::size_t i = 0; i < deg.size(); ++i) x(i, 0) = static_cast<double>(deg[i]) / denom;
  return x;
}

std::vector<double> local_clustering(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  std::vector<double> c(n, 0.0);
  std::vector<std::size_t> nb;
  for (std::size_t i = 0; i < n; ++i) {
    nb.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (adjacency(i, j) != 0.0) nb.push_back(j);
    const std::size_t k = nb.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b)
        if (adjacency(nb[a], nb[b]) != 0.0) ++links;
    c[i] = 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return c;
}

Matrix degree_clustering_features(const Matrix& adjacency) {
  const Matrix deg = degree_centrality_features(adjacency);
  const auto clus = local_clustering(adjacency);
  Matrix x(adjacency.rows(), 2);
  for (std::size_t i = 0; i < adjacency.rows(); ++i) {
    x(i, 0) = deg(i, 0);
    x(i, 1) = clus[i];
  }
  return x;
}

}  // namespace lgkde
