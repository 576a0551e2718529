#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lgkde/error.hpp"
#include "lgkde/graph_io.hpp"
#include "lgkde/synth.hpp"

using namespace lgkde;

namespace {

std::string serialize(const GraphSet& s) {
  std::ostringstream out;
  write_jsonl(out, s);
  return out.str();
}

Graph bare(Matrix a) {
  Graph g;
  g.features = Matrix(a.rows(), 1, 1.0);
  g.adjacency = std::move(a);
  return g;
}

// Disjoint cliques of the given sizes.
Matrix cliques(std::initializer_list<std::size_t> sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  Matrix a(n, n);
  std::size_t off = 0;
  for (auto s : sizes) {
    for (std::size_t i = off; i < off + s; ++i)
      for (std::size_t j = off; j < off + s; ++j)
        if (i != j) a(i, j) = 1.0;
    off += s;
  }
  return a;
}

}  // namespace

TEST(Er, ExtremeProbabilities) {
  Rng rng = make_rng(1, 0);
  EXPECT_EQ(edge_count(er_adjacency(10, 0.0, rng)), 0u);
  EXPECT_EQ(edge_count(er_adjacency(10, 1.0, rng)), 45u);
}

TEST(Er, SidecarCarriesTrueP) {
  GenSpec s;
  s.count = 5;
  s.seed = 3;
  const Generated g = generate(s);
  ASSERT_EQ(g.params.size(), 5u);
  for (const auto& p : g.params) {
    ASSERT_TRUE(p.contains("p"));
    EXPECT_GT(p.at("p"), 0.0);
    EXPECT_LT(p.at("p"), 1.0);
  }
  const auto path = std::filesystem::temp_directory_path() / "lgkde_sidecar.json";
  write_sidecar(path, s, g);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_DOUBLE_EQ(j["graphs"][2]["p"].get<double>(), g.params[2].at("p"));
}

TEST(Er, EdgeDensityMatchesP) {
  Rng rng = make_rng(2, 0);
  const std::size_t n = 200;
  const double p = 0.3;
  const double pairs = n * (n - 1) / 2.0;
  const double e = static_cast<double>(edge_count(er_adjacency(n, p, rng)));
  EXPECT_LT(std::abs(e - p * pairs), 3.0 * std::sqrt(pairs * p * (1 - p)));
}

TEST(Ba, TreeForMEqualsOne) {
  Rng rng = make_rng(3, 0);
  const Matrix a = ba_adjacency(5, 1, rng);
  EXPECT_EQ(edge_count(a), 4u);
  EXPECT_TRUE(is_connected(a));
}

TEST(Ba, EdgeCount) {
  Rng rng = make_rng(4, 0);
  // Seed clique K_m plus m edges per later node.
  EXPECT_EQ(edge_count(ba_adjacency(50, 3, rng)), 3u * 47u + 3u);
}

TEST(Ws, RingLatticeClustering) {
  Rng rng = make_rng(5, 0);
  const Matrix a = ws_adjacency(30, 4, 0.0, rng);
  EXPECT_EQ(edge_count(a), 60u);
  EXPECT_NEAR(average_clustering(a), 0.5, 1e-12);
}

TEST(Ws, FullRewiringMovesEdges) {
  Rng rng = make_rng(6, 0);
  const Matrix lattice = ws_adjacency(40, 4, 0.0, rng);
  const Matrix a = ws_adjacency(40, 4, 1.0, rng);
  EXPECT_EQ(edge_count(a), edge_count(lattice));
  std::size_t kept = 0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = i + 1; j < 40; ++j) kept += (a(i, j) == 1.0 && lattice(i, j) == 1.0);
  EXPECT_LT(kept, edge_count(lattice) / 2);
}

TEST(Sbm, DisjointCliques) {
  Rng rng = make_rng(7, 0);
  const Matrix a = sbm_adjacency(12, 3, 1.0, 0.0, rng);
  EXPECT_EQ(a, cliques({4, 4, 4}));
}

TEST(Sbm, EqualProbabilitiesLookLikeEr) {
  Rng rng = make_rng(8, 0);
  const std::size_t n = 150;
  const double p = 0.2;
  const double pairs = n * (n - 1) / 2.0;
  const double e = static_cast<double>(edge_count(sbm_adjacency(n, 3, p, p, rng)));
  EXPECT_LT(std::abs(e - p * pairs), 3.0 * std::sqrt(pairs * p * (1 - p)));
}

TEST(Sbm, Blocks) {
  EXPECT_EQ(sbm_blocks(7, 3), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2}));
}

TEST(Stats, PathLengthAndModularity) {
  const Matrix path{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}};
  EXPECT_NEAR(average_path_length_lcc(path), 4.0 / 3.0, 1e-12);
  const Matrix three = cliques({3, 3, 3});
  EXPECT_NEAR(modularity(three, {0, 0, 0, 1, 1, 1, 2, 2, 2}), 2.0 / 3.0, 1e-12);
  const auto c = detect_communities(three);
  EXPECT_NEAR(modularity(three, c), 2.0 / 3.0, 1e-12);
}

TEST(Target, ErBetaPdf) {
  const Graph g = bare(cliques({2, 2}));  // 2 edges of 6 pairs
  EXPECT_NEAR(target_density(Family::er, g), beta_pdf(1.0 / 3.0, 2, 2), 1e-12);
  EXPECT_NEAR(beta_pdf(0.5, 2, 2), 1.5, 1e-12);
}

TEST(Target, WsOptimum) {
  const std::size_t n = 64;
  EXPECT_NEAR(ws_score(0.5, std::log(64.0) / std::log(4.0), n), 1.0, 1e-12);
  EXPECT_LT(ws_score(0.1, 3.0, n), 1.0);
}

TEST(Target, SbmThreeCliques) {
  EXPECT_NEAR(target_density(Family::sbm, bare(cliques({3, 3, 3}))), 2.0 / 3.0, 1e-12);
}

TEST(Target, EdgelessScoresZero) {
  for (Family f : {Family::er, Family::ba, Family::ws, Family::sbm}) {
    EXPECT_EQ(target_density(f, bare(Matrix(5, 5))), 0.0);
  }
}

TEST(Generate, DeterministicPerSeed) {
  for (Family f : {Family::er, Family::ba, Family::ws, Family::sbm}) {
    GenSpec s;
    s.family = f;
    s.count = 6;
    s.seed = 7;
    EXPECT_EQ(serialize(generate(s).graphs), serialize(generate(s).graphs)) << family_name(f);
    GenSpec t = s;
    t.seed = 8;
    EXPECT_NE(serialize(generate(s).graphs), serialize(generate(t).graphs));
  }
}

TEST(Generate, OutputsAreValidAndLabelled) {
  for (Family f : {Family::er, Family::ba, Family::ws, Family::sbm}) {
    GenSpec s;
    s.family = f;
    s.count = 4;
    for (const std::string& mode : std::vector<std::string>{""}) {
      s.anomaly = mode;
      const Generated g = generate(s);
      for (const Graph& x : g.graphs.graphs) {
        EXPECT_TRUE(validate(x).ok());
        EXPECT_GE(x.num_nodes(), s.n_min);
        EXPECT_LE(x.num_nodes(), s.n_max);
        EXPECT_EQ(x.label, 0);
      }
    }
  }
  GenSpec a;
  a.family = Family::ba;
  a.anomaly = "weak";
  a.count = 3;
  for (const Graph& x : generate(a).graphs.graphs) {
    EXPECT_EQ(x.label, 1);
    EXPECT_EQ(edge_count(x.adjacency), x.num_nodes() - 1);
  }
}

TEST(Generate, RejectsBadSpecs) {
  EXPECT_THROW(parse_family("tree"), ValidationError);
  GenSpec s;
  s.anomaly = "weak";  // a BA mode, not an ER one
  EXPECT_THROW(generate(s), ValidationError);
  GenSpec t;
  t.n_min = 30;
  t.n_max = 10;
  EXPECT_THROW(generate(t), ValidationError);
}

TEST(Rewire, KeepsEdgeCount) {
  Rng rng = make_rng(9, 0);
  const Matrix a = er_adjacency(30, 0.2, rng);
  const Matrix b = rewire_edges(a, 0.3, rng);
  EXPECT_EQ(edge_count(a), edge_count(b));
  EXPECT_NE(a, b);
}
