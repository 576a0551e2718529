#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "lgkde/detector.hpp"
#include "lgkde/error.hpp"
#include "lgkde/synth.hpp"
#include "lgkde/trainer.hpp"

using namespace lgkde;

namespace {

GraphSet er_set(std::size_t count, double p, std::uint64_t seed, int label) {
  Rng rng = make_rng(seed, 0);
  GraphSet s;
  for (std::size_t i = 0; i < count; ++i) {
    Graph g;
    g.adjacency = er_adjacency(20, p, rng);
    g.features = degree_centrality_features(g.adjacency);
    g.label = label;
    g.id = (label ? "a" : "n") + std::to_string(i);
    s.add(std::move(g));
  }
  return s;
}

Model small_model() {
  GnnConfig c;
  c.in_dim = 1;
  c.hidden_dim = 8;
  c.out_dim = 4;
  const std::vector<double> h{0.01, 0.1, 1.0, 10.0, 100.0};
  return init_model(c, h, h, 11);
}

}  // namespace

TEST(Metrics, AurocHandExample) {
  const std::vector<double> s{0.9, 0.3, 0.8, 0.2};
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
}

TEST(Metrics, AurocTiesAndExtremes) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{1, 1}, std::vector<int>{1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{2, 1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{1, 2}, std::vector<int>{1, 0}), 0.0);
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), ValidationError);
}

TEST(Metrics, AuprcHandExample) {
  const std::vector<double> s{3, 2, 1};
  const std::vector<int> y{1, 0, 1};
  EXPECT_NEAR(auprc(s, y), 5.0 / 6.0, 1e-15);
  // (0,1) -> (0.5,1) -> (0.5,0.5) -> (1,2/3)
  EXPECT_NEAR(auprc_trapezoid(s, y), 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Metrics, Fpr95) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
  const std::vector<int> y{1, 0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(fpr95(s, y), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(fpr95(std::vector<double>{2, 1}, std::vector<int>{1, 0}), 0.0);
}

TEST(Metrics, RandomScoresAreNearHalf) {
  Rng rng = make_rng(12, 0);
  std::uniform_real_distribution<double> u(0, 1);
  double sum = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> s(100);
    std::vector<int> y(100);
    for (int i = 0; i < 100; ++i) {
      s[i] = u(rng);
      y[i] = i < 50;
    }
    sum += auroc(s, y);
  }
  EXPECT_NEAR(sum / trials, 0.5, 0.01);
}

TEST(Threshold, NearestRankPercentile) {
  std::vector<double> d;
  for (int i = 1; i <= 10; ++i) d.push_back(0.1 * i);
  EXPECT_NEAR(threshold(d, 10.0), -0.1, 1e-15);
  EXPECT_NEAR(percentile_nearest_rank(d, 50.0), 0.5, 1e-15);
  EXPECT_NEAR(percentile_nearest_rank(d, 1.0), 0.1, 1e-15);
  EXPECT_NEAR(percentile_nearest_rank(d, 99.0), 1.0, 1e-15);
  EXPECT_THROW(percentile_nearest_rank(d, 0.0), ValidationError);
  EXPECT_THROW(percentile_nearest_rank(std::vector<double>{}, 10.0), ValidationError);
}

TEST(Threshold, ClassifyIsInclusive) {
  const std::vector<double> s{-0.05, -0.1, -0.5};
  EXPECT_EQ(classify(s, -0.1), (std::vector<int>{1, 1, 0}));
}

TEST(Stats, SpearmanAndGap) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  EXPECT_DOUBLE_EQ(density_gap(std::vector<double>{2, 4}, std::vector<double>{1}), 2.0);
}

TEST(Detector, DenseGraphsScoreHigherThanSparseReferences) {
  const Model m = small_model();
  const GraphSet ref = er_set(40, 0.15, 13, 0);
  GraphSet q = er_set(10, 0.15, 14, 0);
  for (const Graph& g : er_set(10, 0.8, 15, 1).graphs) q.add(g);
  const ReferenceIndex idx = build_reference(ref, m);
  EXPECT_EQ(idx.densities.size(), 40u);
  const EvalReport r = evaluate(q, idx, m);
  ASSERT_TRUE(r.auroc.has_value());
  EXPECT_GT(*r.auroc, 0.9);
  EXPECT_GT(*r.density_gap, 0.0);
  EXPECT_TRUE(r.notice.empty());
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_DOUBLE_EQ(r.result.scores[i], -r.result.densities[i].density);
}

TEST(Detector, UnlabeledQueriesSkipMetrics) {
  const Model m = small_model();
  GraphSet q = er_set(5, 0.3, 16, 0);
  for (Graph& g : q.graphs) g.label.reset();
  const EvalReport r = evaluate(q, build_reference(er_set(10, 0.3, 17, 0), m), m);
  EXPECT_FALSE(r.auroc.has_value());
  EXPECT_FALSE(r.notice.empty());
  EXPECT_EQ(r.predictions.size(), 5u);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_TRUE(j.contains("notice"));
}

TEST(Detector, SamplingModes) {
  const Model m = small_model();
  const ReferenceIndex idx = build_reference(er_set(30, 0.2, 18, 0), m);
  EXPECT_EQ(select_references(idx, {}).size(), 30u);
  EXPECT_EQ(select_references(idx, {SampleMode::stratified, 1.0, 1}).size(), 24u);
  EXPECT_EQ(select_references(idx, {SampleMode::importance, 0.5, 1}).size(), 15u);
  EXPECT_EQ(select_references(idx, {SampleMode::importance, 0.5, 2}),
            select_references(idx, {SampleMode::importance, 0.5, 2}));
  EXPECT_THROW(parse_sample_mode("random"), ValidationError);
  const ScoreResult s = score(er_set(3, 0.2, 19, 0), idx, m, {SampleMode::importance, 0.5, 1});
  EXPECT_EQ(s.references_used, 15u);
}

TEST(Detector, ScoreCsvHasOneRowPerQuery) {
  const Model m = small_model();
  const EvalReport r = evaluate(er_set(4, 0.3, 20, 0), build_reference(er_set(8, 0.3, 21, 0), m), m);
  std::ostringstream out;
  write_score_csv(out, r);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
}
