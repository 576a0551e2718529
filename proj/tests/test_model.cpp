#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "lgkde/error.hpp"
#include "lgkde/gnn.hpp"
#include "lgkde/grad_check.hpp"
#include "lgkde/kde.hpp"
#include "lgkde/mmd.hpp"
#include "support.hpp"

using namespace lgkde;

namespace {

GnnParams small_encoder(std::size_t in_dim, std::uint64_t seed) {
  GnnConfig c;
  c.in_dim = in_dim;
  c.hidden_dim = 8;
  c.out_dim = 4;
  return init_params(c, seed);
}

std::vector<double> flatten(const std::vector<Matrix>& ms) {
  std::vector<double> v;
  for (const Matrix& m : ms) v.insert(v.end(), m.values().begin(), m.values().end());
  return v;
}

std::vector<Matrix> unflatten(std::span<const double> v, const std::vector<Matrix>& like) {
  std::vector<Matrix> out;
  std::size_t off = 0;
  for (const Matrix& m : like) {
    out.emplace_back(m.rows(), m.cols(), std::vector<double>(v.begin() + off, v.begin() + off + m.size()));
    off += m.size();
  }
  return out;
}

}  // namespace

// ---- gnn ----

TEST(Gnn, SingleNodeIdentityWeights) {
  GnnConfig c;
  c.in_dim = 2;
  c.hidden_dim = 2;
  c.out_dim = 2;
  GnnParams p = init_params(c, 0);
  p.weights = {Matrix::identity(2), Matrix::identity(2)};
  Graph g;
  g.adjacency = Matrix(1, 1);
  g.features = Matrix{{0.7, -0.4}};
  // Â = [[1]]: relu on the hidden layer, no activation on the output.
  EXPECT_EQ(encode(g, p), (Matrix{{0.7, 0.0}}));
  p.config.final_activation = true;
  EXPECT_EQ(encode(g, p), (Matrix{{0.7, 0.0}}));
}

TEST(Gnn, ZeroWeightsGiveZeroEmbeddings) {
  Rng rng = make_rng(1, 0);
  GnnParams p = small_encoder(3, 1);
  for (Matrix& w : p.weights) w = Matrix(w.rows(), w.cols());
  const Graph g = test::random_graph(6, 0.5, 3, rng);
  EXPECT_EQ(encode(g, p), Matrix(6, 4));
}

TEST(Gnn, PermutationEquivariance) {
  Rng rng = make_rng(2, 0);
  const GnnParams p = small_encoder(2, 2);
  for (int rep = 0; rep < 10; ++rep) {
    const Graph g = test::random_graph(9, 0.4, 2, rng);
    const auto perm = test::random_perm(9, rng);
    const Matrix z = encode(g, p);
    const Matrix zp = encode(permute(g, perm), p);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(zp(i, j), z(perm[i], j), 1e-14);
  }
}

TEST(Gnn, InitIsDeterministicAndBounded) {
  const GnnParams a = small_encoder(3, 5), b = small_encoder(3, 5), c = small_encoder(3, 6);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, c.weights);
  const double limit = std::sqrt(6.0 / (3 + 8));
  for (double w : a.weights[0].values()) EXPECT_LE(std::abs(w), limit);
  EXPECT_EQ(layer_dims(a.config), (std::vector<std::size_t>{3, 8, 4}));
}

TEST(Gnn, BatchEncodingMatchesSingleGraphs) {
  Rng rng = make_rng(3, 0);
  const GnnParams p = small_encoder(1, 3);
  std::vector<Graph> gs;
  for (int i = 0; i < 4; ++i) gs.push_back(test::random_graph(3 + i, 0.5, 1, rng));
  std::vector<const Graph*> ptrs;
  for (const Graph& g : gs) ptrs.push_back(&g);
  ad::Tape t;
  std::vector<ad::Var> w;
  for (const Matrix& m : p.weights) w.push_back(t.constant(m));
  const auto z = encode_batch(t, w, p, ptrs);
  for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_LT(max_abs_diff(z[i].value(), encode(gs[i], p)), 1e-14);
}

TEST(Gnn, InputDimensionMismatchThrows) {
  Rng rng = make_rng(4, 0);
  const GnnParams p = small_encoder(2, 4);
  EXPECT_THROW(encode(test::random_graph(4, 0.5, 3, rng), p), DimensionError);
}

// ---- mmd ----

TEST(Mmd, IdenticalEmbeddingsHaveZeroDistance) {
  Rng rng = make_rng(10, 0);
  const Matrix z = test::random_matrix(5, 3, rng);
  EXPECT_EQ(mmd_sq(z, z, 1.0), 0.0);
  const auto d = mmd_distance(z, z, KernelFamily::defaults());
  EXPECT_EQ(d.distance, 0.0);
  EXPECT_EQ(d.argmax, 0u);
}

TEST(Mmd, SingleNodeClosedForm) {
  const Matrix a{{0.1, 0.2}}, b{{0.4, -0.2}};
  const double sq = 0.3 * 0.3 + 0.4 * 0.4;
  for (double g : {0.5, 1.0, 7.0}) EXPECT_NEAR(mmd_sq(a, b, g), 2.0 - 2.0 * std::exp(-g * sq), 1e-15);
}

TEST(Mmd, MatchesBruteForce) {
  Rng rng = make_rng(11, 0);
  const KernelFamily fam = KernelFamily::defaults();
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix a = test::random_matrix(2 + rep % 7, 3, rng, -0.5, 0.5);
    const Matrix b = test::random_matrix(1 + rep % 5, 3, rng, -0.5, 0.5);
    for (double g : fam.gammas) EXPECT_NEAR(mmd_sq(a, b, g), test::brute_mmd_sq(a, b, g), 1e-10);
    EXPECT_NEAR(mmd_distance(a, b, fam).distance, test::brute_mmd(a, b, fam.gammas), 1e-10);
  }
}

TEST(Mmd, TapeValueMatchesPlainValue) {
  Rng rng = make_rng(12, 0);
  const KernelFamily fam = KernelFamily::from_bandwidths(std::vector<double>{0.3, 1.0, 3.0});
  const Matrix a = test::random_matrix(4, 2, rng), b = test::random_matrix(6, 2, rng);
  ad::Tape t;
  const ad::Var d = mmd_distance(t.leaf(a), t.leaf(b), fam);
  EXPECT_NEAR(d.scalar(), mmd_distance(a, b, fam).distance, 1e-14);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(13, 0);
  const KernelFamily fam = KernelFamily::from_bandwidths(std::vector<double>{0.5, 1.0, 2.0});
  const Matrix a = test::random_matrix(4, 2, rng), b = test::random_matrix(3, 2, rng);
  ad::Tape t;
  const ad::Var va = t.leaf(a), vb = t.leaf(b);
  t.backward(mmd_distance(va, vb, fam));
  const std::vector<double> analytic = flatten({t.grad(va), t.grad(vb)});
  const auto f = [&](std::span<const double> p) {
    const auto m = unflatten(p, {a, b});
    ad::Tape tt;
    const ad::Var out = mmd_distance(tt.leaf(m[0]), tt.leaf(m[1]), fam);
    return Probe{out.scalar(), tt.branch_signature()};
  };
  const auto res = finite_diff_check(f, flatten({a, b}), analytic, 1e-6);
  EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(Mmd, PairwiseBlockMatchesSinglePairs) {
  Rng rng = make_rng(14, 0);
  const KernelFamily fam = KernelFamily::defaults();
  std::vector<Matrix> zs;
  for (int i = 0; i < 5; ++i) zs.push_back(test::random_matrix(2 + i, 3, rng, 0, 0.3));
  ad::Tape t;
  std::vector<ad::Var> vs;
  for (const Matrix& z : zs) vs.push_back(t.leaf(z));
  const std::vector<std::size_t> q{0, 1, 2, 3, 4}, r{0, 2, 4};
  const ad::Var d = pairwise_mmd(vs, q, r, fam);
  for (std::size_t a = 0; a < q.size(); ++a)
    for (std::size_t b = 0; b < r.size(); ++b)
      EXPECT_NEAR(d.value()(a, b), test::brute_mmd(zs[q[a]], zs[r[b]], fam.gammas), 1e-10);
  EXPECT_EQ(d.value()(0, 0), 0.0);
}

TEST(Mmd, DistanceMatrixSelfModeIsSymmetric) {
  Rng rng = make_rng(15, 0);
  GraphSet s;
  for (int i = 0; i < 3; ++i) s.add(test::random_graph(5 + i, 0.5, 1, rng));
  const GnnParams p = small_encoder(1, 7);
  const KernelFamily fam = KernelFamily::defaults();
  const DistanceMatrix d = distance_matrix(s, nullptr, p, fam);
  ASSERT_EQ(d.values.rows(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.values(i, i), 0.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(d.values(i, j), d.values(j, i));
  }
  GraphSet one;
  one.add(s[0]);
  GraphSet two;
  two.add(s[1]);
  two.add(s[2]);
  const DistanceMatrix x = distance_matrix(one, &two, p, fam);
  ASSERT_EQ(x.values.cols(), 2u);
  EXPECT_NEAR(x.values(0, 1), test::brute_mmd(encode(s[0], p), encode(s[2], p), fam.gammas), 1e-10);
}

TEST(Mmd, CsvHasHeaderAndRows) {
  EmbeddingSet e = embed(std::vector<Matrix>{Matrix{{0.0}}, Matrix{{1.0}}}, KernelFamily::defaults());
  e.ids = {"a", "b"};
  std::ostringstream out;
  write_distance_csv(out, distance_matrix(e, e, KernelFamily::defaults(), true));
  const std::string s = out.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "id,a,b");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}

TEST(Mmd, KernelFamilyValidation) {
  EXPECT_THROW(KernelFamily::from_gammas({}), ValidationError);
  EXPECT_THROW(KernelFamily::from_gammas({1.0, -1.0}), ValidationError);
  EXPECT_EQ(KernelFamily::from_gammas({2.0, 1.0, 2.0}).gammas, (std::vector<double>{1.0, 2.0}));
  EXPECT_NEAR(KernelFamily::defaults().gammas.back(), 1e4, 1e-8);
}

// ---- kde ----

TEST(Kde, KernelValues) {
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(kde_kernel(0.0, 1.0), c, 1e-15);
  EXPECT_NEAR(kde_kernel(0.3, 0.3), std::exp(-0.5) * c / 0.3, 1e-15);
  const std::vector<double> one{0.0};
  EXPECT_NEAR(component_density(one, 1.0), c, 1e-15);
  const std::vector<double> two{0.4, 0.4};
  EXPECT_NEAR(component_density(two, 0.7), kde_kernel(0.4, 0.7), 1e-15);
}

TEST(Kde, MixtureLimits) {
  const std::vector<double> d{0.05, 0.3, 1.2};
  KdeParams single = KdeParams::with_bandwidths({0.5});
  EXPECT_NEAR(density(d, single).density, component_density(d, 0.5), 1e-15);
  KdeParams sat = KdeParams::defaults();
  sat.logits = {1e6, 0, 0, 0, 0};
  EXPECT_NEAR(density(d, sat).density, component_density(d, 0.01),
              1e-6 * component_density(d, 0.01) + 1e-300);
}

TEST(Kde, MatchesBruteForce) {
  Rng rng = make_rng(20, 0);
  std::uniform_real_distribution<double> u(0.0, 2.0), l(-2.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> d(1 + rep % 9);
    for (double& x : d) x = u(rng);
    KdeParams p = KdeParams::defaults();
    for (double& x : p.logits) x = l(rng);
    EXPECT_NEAR(density(d, p).density, test::brute_density(d, p.bandwidths, p.weights()), 1e-10);
  }
}

TEST(Kde, TapeMatchesValuesAndMask) {
  Rng rng = make_rng(21, 0);
  const Matrix d = test::random_matrix(3, 4, rng, 0.0, 1.0);
  KdeParams p = KdeParams::defaults();
  p.logits = {0.3, -0.1, 0.5, 0.0, 0.2};
  const std::vector<std::size_t> q{0, 1, 2}, r{0, 1, 2, 3};
  const Matrix mask = leave_one_out_mask(q, r);
  ad::Tape t;
  const ad::Var f = density(t.constant(d), t.leaf(Matrix::row_vector(p.logits)), p.bandwidths, &mask);
  const auto plain = densities(d, p, &mask);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(f.value()(i, 0), plain[i].density, 1e-14);
    std::vector<double> row;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) row.push_back(d(i, j));
    EXPECT_NEAR(plain[i].density, test::brute_density(row, p.bandwidths, p.weights()), 1e-12);
  }
}

TEST(Kde, LogitGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(22, 0);
  const Matrix d = test::random_matrix(4, 5, rng, 0.0, 0.8);
  const std::vector<double> h{0.1, 0.5, 2.0};
  const std::vector<double> lg{0.2, -0.4, 0.1};
  ad::Tape t;
  const ad::Var v = t.leaf(Matrix::row_vector(lg));
  t.backward(ad::sum(ad::exp(ad::scale(density(t.constant(d), v, h), 0.3))));
  const Matrix g = t.grad(v);
  const auto f = [&](std::span<const double> p) {
    ad::Tape tt;
    const ad::Var out = ad::sum(ad::exp(ad::scale(density(tt.constant(d), tt.leaf(Matrix(1, 3, {p.begin(), p.end()})), h), 0.3)));
    return Probe{out.scalar(), 0};
  };
  EXPECT_LT(finite_diff_check(f, lg, g.values(), 1e-6).max_relative_error, 1e-7);
}

TEST(Kde, ParamValidation) {
  EXPECT_THROW(KdeParams::with_bandwidths({1.0, 0.5}).validate(), ValidationError);
  EXPECT_THROW(KdeParams::with_bandwidths({-1.0}).validate(), ValidationError);
  KdeParams p = KdeParams::defaults();
  p.logits[0] = std::nan("");
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Sampling, StratifiedCounts) {
  Rng rng = make_rng(23, 0);
  std::vector<double> dens(30);
  for (std::size_t i = 0; i < 30; ++i) dens[i] = static_cast<double>((i * 7) % 30);
  EXPECT_EQ(stratified_sample(dens, rng).size(), 24u);
  const std::vector<double> flat(30, 1.0);
  const auto kept = stratified_sample(flat, rng);
  EXPECT_EQ(kept.size(), 24u);
  EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
}

TEST(Sampling, ImportanceCountsAndUniformity) {
  Rng rng = make_rng(24, 0);
  std::vector<double> dens(40);
  for (std::size_t i = 0; i < 40; ++i) dens[i] = 0.1 * static_cast<double>(i);
  const auto all = importance_sample(dens, 1.0, rng);
  EXPECT_EQ(all.size(), 40u);
  const auto half = importance_sample(dens, 0.5, rng);
  EXPECT_EQ(half.size(), 20u);
  EXPECT_TRUE(std::adjacent_find(half.begin(), half.end()) == half.end());

  // Equal densities: every index is drawn equally often.
  const std::vector<double> flat(10, 0.3);
  std::vector<int> hits(10, 0);
  for (int rep = 0; rep < 4000; ++rep)
    for (std::size_t i : importance_sample(flat, 0.3, rng)) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / 4000.0, 0.3, 0.04);
}
