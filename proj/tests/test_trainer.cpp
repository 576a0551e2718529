#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lgkde/checkpoint.hpp"
#include "lgkde/error.hpp"
#include "lgkde/grad_check.hpp"
#include "lgkde/trainer.hpp"
#include "support.hpp"

using namespace lgkde;

namespace {

GnnConfig tiny_gnn(std::size_t in_dim) {
  GnnConfig c;
  c.in_dim = in_dim;
  c.hidden_dim = 6;
  c.out_dim = 3;
  return c;
}

Model tiny_model(std::size_t in_dim, std::uint64_t seed) {
  const std::vector<double> mmd{0.3, 1.0, 3.0};
  const std::vector<double> kde{0.05, 0.2, 1.0};
  return init_model(tiny_gnn(in_dim), mmd, kde, seed);
}

GraphSet random_set(std::size_t count, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  GraphSet s;
  for (std::size_t i = 0; i < count; ++i) {
    Graph g = test::random_graph(6 + i % 5, 0.2 + 0.05 * static_cast<double>(i % 6), 1, rng);
    g.id = "g" + std::to_string(i);
    s.add(std::move(g));
  }
  return s;
}

std::vector<double> model_params(const Model& m) {
  std::vector<double> v;
  for (const Matrix& w : m.gnn.weights) v.insert(v.end(), w.values().begin(), w.values().end());
  v.insert(v.end(), m.kde.logits.begin(), m.kde.logits.end());
  return v;
}

Model with_params(Model m, std::span<const double> v) {
  std::size_t off = 0;
  for (Matrix& w : m.gnn.weights)
    for (double& x : w.values()) x = v[off++];
  for (double& x : m.kde.logits) x = v[off++];
  return m;
}

struct LossSetup {
  GraphSet graphs;
  std::vector<std::vector<Graph>> perturbed;
  std::vector<const Graph*> batch;
};

LossSetup loss_setup(std::size_t count, std::size_t per_graph, std::uint64_t seed) {
  LossSetup s;
  s.graphs = random_set(count, seed);
  PerturbationConfig pc;
  pc.p_pert = 0.3;
  Rng rng = make_rng(seed, 1);
  for (const Graph& g : s.graphs.graphs) {
    s.batch.push_back(&g);
    std::vector<Graph> samples;
    for (std::size_t j = 0; j < per_graph; ++j) samples.push_back(generate_sample(g, pc, rng));
    s.perturbed.push_back(std::move(samples));
  }
  return s;
}

double loss_value(const Model& m, const LossSetup& s, bool loo) {
  ad::Tape t;
  const ModelVars v = bind(t, m, false);
  return contrastive_loss(t, m, v, s.batch, s.perturbed, 1e-6, loo).scalar();
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Matrix> p{Matrix{{1.0, -2.0}}};
  const std::vector<Matrix> g{Matrix{{0.5, -3.0}}};
  AdamState st;
  const std::vector<double> lr{0.01};
  adam_step(p, g, st, lr);
  EXPECT_NEAR(p[0](0, 0), 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[0](0, 1), -2.0 + 0.01, 1e-9);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, PerParameterRates) {
  std::vector<Matrix> p{Matrix{{0.0}}, Matrix{{0.0}}};
  const std::vector<Matrix> g{Matrix{{1.0}}, Matrix{{1.0}}};
  AdamState st;
  const std::vector<double> lr{0.1, 0.001};
  adam_step(p, g, st, lr);
  EXPECT_NEAR(p[0](0, 0), -0.1, 1e-8);
  EXPECT_NEAR(p[1](0, 0), -0.001, 1e-10);
  const std::vector<double> bad{0.1, 0.1, 0.1};
  EXPECT_THROW(adam_step(p, g, st, bad), DimensionError);
}

TEST(Clip, ScalesToMaxNorm) {
  std::vector<Matrix> g{Matrix{{30.0}}, Matrix{{40.0}}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 5.0), 50.0);
  EXPECT_NEAR(g[0](0, 0), 3.0, 1e-12);
  EXPECT_NEAR(g[1](0, 0), 4.0, 1e-12);
  std::vector<Matrix> small{Matrix{{0.3}}};
  clip_global_norm(small, 5.0);
  EXPECT_EQ(small[0](0, 0), 0.3);
}

TEST(Schedule, WarmupAndCosine) {
  TrainConfig c;
  c.lr = 0.01;
  c.warmup_epochs = 10;
  c.max_epochs = 100;
  EXPECT_NEAR(lr_schedule(1, c), 0.001, 1e-15);
  EXPECT_NEAR(lr_schedule(10, c), 0.01, 1e-15);
  EXPECT_NEAR(lr_schedule(55, c), 0.005, 1e-12);
  EXPECT_NEAR(lr_schedule(100, c), 0.0, 1e-15);
  for (std::size_t e = 11; e < 100; ++e) EXPECT_LE(lr_schedule(e + 1, c), lr_schedule(e, c));
}

TEST(Loss, ZeroWhenPerturbationsEqualOriginals) {
  LossSetup s = loss_setup(4, 2, 3);
  for (std::size_t i = 0; i < 4; ++i) s.perturbed[i] = {s.graphs[i], s.graphs[i]};
  const Model m = tiny_model(1, 3);
  EXPECT_NEAR(loss_value(m, s, true), 0.0, 1e-12);
  EXPECT_NEAR(loss_value(m, s, false), 0.0, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const LossSetup s = loss_setup(5, 2, 4);
  const Model m = tiny_model(1, 4);
  ad::Tape t;
  const ModelVars v = bind(t, m, true);
  t.backward(contrastive_loss(t, m, v, s.batch, s.perturbed, 1e-6, true));
  std::vector<double> analytic;
  for (const ad::Var& w : v.weights) {
    const Matrix g = t.grad(w);
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
  }
  const Matrix gl = t.grad(v.logits);
  analytic.insert(analytic.end(), gl.values().begin(), gl.values().end());

  const auto f = [&](std::span<const double> p) {
    const Model mm = with_params(m, p);
    ad::Tape tt;
    const ModelVars vv = bind(tt, mm, false);
    const double val = contrastive_loss(tt, mm, vv, s.batch, s.perturbed, 1e-6, true).scalar();
    return Probe{val, tt.branch_signature()};
  };
  const auto res = finite_diff_check(f, model_params(m), analytic, 1e-4);
  EXPECT_LT(res.max_relative_error, 1e-4) << "worst index " << res.worst_index;
  EXPECT_GT(res.checked, res.excluded);
}

TEST(Loss, RejectsMismatchedBatch) {
  LossSetup s = loss_setup(3, 1, 5);
  s.perturbed.pop_back();
  const Model m = tiny_model(1, 5);
  ad::Tape t;
  const ModelVars v = bind(t, m, false);
  EXPECT_THROW(contrastive_loss(t, m, v, s.batch, s.perturbed, 1e-6), DimensionError);
}

TEST(Train, ImprovesFixedSampleLossAndIsDeterministic) {
  const GraphSet data = random_set(24, 6);
  TrainConfig c;
  c.max_epochs = 20;
  c.warmup_epochs = 1;
  c.batch_size = 12;
  c.lr = 0.01;
  c.val_fraction = 0.0;
  c.patience = 100;
  c.seed = 6;
  const std::vector<double> h{0.1, 1.0, 10.0};
  const TrainResult a = train(data, c, tiny_gnn(1), h, h);
  const TrainResult b = train(data, c, tiny_gnn(1), h, h);
  ASSERT_EQ(a.log.size(), 20u);
  EXPECT_FALSE(a.aborted);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].epoch, i + 1);
    EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  }
  EXPECT_EQ(a.model.gnn.weights, b.model.gnn.weights);

  // Per-epoch losses use fresh perturbations; compare on one fixed draw.
  LossSetup s = loss_setup(24, 4, 6);
  const Model before = init_model(tiny_gnn(1), h, h, c.seed);
  EXPECT_LT(loss_value(a.model, s, true), loss_value(before, s, true));
}

TEST(Train, EarlyStopping) {
  const GraphSet data = random_set(20, 7);
  TrainConfig c;
  c.max_epochs = 50;
  c.warmup_epochs = 1;
  c.lr = 1e-12;  // validation loss stays flat
  c.patience = 2;
  c.val_fraction = 0.2;
  const std::vector<double> h{0.1, 1.0};
  const TrainResult r = train(data, c, tiny_gnn(1), h, h);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.log.size(), 50u);
}

TEST(Train, ResumeContinuesNumbering) {
  const GraphSet data = random_set(12, 8);
  TrainConfig c;
  c.max_epochs = 6;
  c.warmup_epochs = 1;
  c.patience = 100;
  const TrainResult r = train(data, c, tiny_model(1, 8), 4);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[0].epoch, 5u);
  EXPECT_EQ(r.last_epoch, 6u);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.val_fraction = 0.9;
  EXPECT_THROW(validate_config(c), ValidationError);
  TrainConfig d;
  d.lr = 0.0;
  EXPECT_THROW(validate_config(d), ValidationError);
}

TEST(Train, LogIsJsonLines) {
  const auto path = std::filesystem::temp_directory_path() / "lgkde_log.jsonl";
  std::vector<EpochLog> log(3);
  for (std::size_t i = 0; i < 3; ++i) log[i].epoch = i + 1;
  write_training_log(path, log);
  write_training_log(path, std::span(log).subspan(0, 1), true);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 4u);
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint ck{tiny_model(2, 9), 17};
  ck.model.kde.logits = {0.1, -1.0 / 3.0, 2.5};
  const Checkpoint back = checkpoint_from_json(checkpoint_to_json(ck));
  EXPECT_EQ(back.epoch, 17u);
  EXPECT_EQ(back.model.gnn.weights, ck.model.gnn.weights);
  EXPECT_EQ(back.model.kde.logits, ck.model.kde.logits);
  EXPECT_EQ(back.model.family.gammas, ck.model.family.gammas);
  EXPECT_EQ(back.model.gnn.config.in_dim, 2u);
}

TEST(Checkpoint, RejectsMalformedInput) {
  EXPECT_THROW(checkpoint_from_json("{"), ValidationError);
  EXPECT_THROW(checkpoint_from_json(R"({"format":"other"})"), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), IoError);
}
