#include "lgkde/synthbench.hpp"

#include <cmath>
#include <json.hpp>
#include <numeric>

#include <fmt/format.h>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

GenSpec base_spec(const SynthBenchConfig& cfg, std::size_t count, std::uint64_t stream,
                  const std::string& anomaly) {
  GenSpec s;
  s.family = cfg.family;
  s.count = count;
  s.n_min = cfg.n_min;
  s.n_max = cfg.n_max;
  s.anomaly = anomaly;
  s.seed = derive_seed(cfg.seed, stream);
  return s;
}

void append(GraphSet& into, const GraphSet& from) {
  for (const Graph& g : from.graphs) into.add(g);
}

}  // namespace

std::vector<std::string> anomaly_modes(Family f) {
  switch (f) {
    case Family::er: return {"extreme"};
    case Family::ba: return {"weak", "rewire"};
    case Family::ws: return {"lattice", "random"};
    case Family::sbm: return {"flat", "inverted"};
  }
  return {};
}

SynthBenchReport run_synthbench(const SynthBenchConfig& cfg) {
  if (cfg.n_train < 2 || cfg.n_test_normal == 0 || cfg.n_test_anomaly == 0) {
    throw ValidationError("synthbench needs training graphs and both test classes");
  }
  const Generated train = generate(base_spec(cfg, cfg.n_train, 1, ""));
  const Generated test_normal = generate(base_spec(cfg, cfg.n_test_normal, 2, ""));
  GraphSet test = test_normal.graphs;
  const auto modes = anomaly_modes(cfg.family);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::size_t share = cfg.n_test_anomaly / modes.size() +
                              (k < cfg.n_test_anomaly % modes.size() ? 1 : 0);
    if (share == 0) continue;
    append(test, generate(base_spec(cfg, share, 3 + k, modes[k])).graphs);
  }

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 0x7472);
  const TrainResult trained =
      lgkde::train(train.graphs, tc, cfg.gnn, cfg.mmd_bandwidths, cfg.kde_bandwidths);
  const ReferenceIndex ref = build_reference(train.graphs, trained.model);
  const EvalReport rep = evaluate(test, ref, trained.model);

  SynthBenchReport out;
  out.family = cfg.family;
  out.seed = cfg.seed;
  out.epochs_run = trained.last_epoch;
  out.best_epoch = trained.best_epoch;
  std::vector<double> normal_d, anomaly_d, dens, target;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double d = rep.result.densities[i].density;
    (test[i].label == 1 ? anomaly_d : normal_d).push_back(d);
    dens.push_back(d);
    target.push_back(target_density(cfg.family, test[i], {2.0, 2.0, 3}));
  }
  std::tie(out.normal_mean, out.normal_std) = mean_std(normal_d);
  std::tie(out.anomaly_mean, out.anomaly_std) = mean_std(anomaly_d);
  out.density_gap = rep.density_gap.value_or(0.0);
  out.auroc = rep.auroc.value_or(0.0);
  out.auprc = rep.auprc.value_or(0.0);
  out.fpr95 = rep.fpr95.value_or(0.0);
  out.target_spearman = spearman(dens, target);

  if (cfg.family == Family::er) {
    for (int b = 0; b < 5; ++b) out.bins.push_back({0.2 * b, 0.2 * (b + 1), 0, 0.0, 0.0});
    std::vector<std::vector<double>> per_bin(5);
    std::vector<double> train_target;
    for (std::size_t i = 0; i < train.graphs.size(); ++i) {
      const double p = train.params[i].at("p");
      const auto b = std::min<std::size_t>(4, static_cast<std::size_t>(std::floor(p / 0.2)));
      per_bin[b].push_back(ref.densities[i]);
      train_target.push_back(beta_pdf(p, 2.0, 2.0));
    }
    for (std::size_t b = 0; b < 5; ++b) {
      out.bins[b].count = per_bin[b].size();
      std::tie(out.bins[b].mean_density, out.bins[b].std_density) = mean_std(per_bin[b]);
    }
    out.train_target_spearman = spearman(ref.densities, train_target);
  }
  return out;
}

std::string synthbench_json(const SynthBenchReport& r) {
  nlohmann::ordered_json j;
  j["family"] = family_name(r.family);
  j["seed"] = r.seed;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  if (!r.bins.empty()) {
    auto bins = nlohmann::ordered_json::array();
    for (const DensityBin& b : r.bins) {
      bins.push_back({{"p_lo", b.lo},
                      {"p_hi", b.hi},
                      {"count", b.count},
                      {"mean_density", b.mean_density},
                      {"std_density", b.std_density}});
    }
    j["bins"] = std::move(bins);
  }
  if (r.train_target_spearman) j["train_target_spearman"] = *r.train_target_spearman;
  j["normal_density"] = {{"mean", r.normal_mean}, {"std", r.normal_std}};
  j["anomaly_density"] = {{"mean", r.anomaly_mean}, {"std", r.anomaly_std}};
  j["density_gap"] = r.density_gap;
  j["auroc"] = r.auroc;
  j["auprc"] = r.auprc;
  j["fpr95"] = r.fpr95;
  j["target_spearman"] = r.target_spearman;
  return j.dump(2);
}

std::string synthbench_table(const SynthBenchReport& r) {
  std::string s = fmt::format("family {}  seed {}  epochs {} (best {})\n", family_name(r.family),
                              r.seed, r.epochs_run, r.best_epoch);
  if (!r.bins.empty()) {
    s += "p range      count  mean density  std\n";
    for (const DensityBin& b : r.bins) {
      s += fmt::format("[{:.1f}, {:.1f}]  {:5d}  {:12.6g}  {:.6g}\n", b.lo, b.hi, b.count,
                       b.mean_density, b.std_density);
    }
    if (r.train_target_spearman) {
      s += fmt::format("spearman(density, Beta pdf) on training graphs: {:.4f}\n",
                       *r.train_target_spearman);
    }
  }
  s += fmt::format("normal density   {:.6g} ± {:.6g}\n", r.normal_mean, r.normal_std);
  s += fmt::format("anomaly density  {:.6g} ± {:.6g}\n", r.anomaly_mean, r.anomaly_std);
  s += fmt::format("density gap      {:.6g}\n", r.density_gap);
  s += fmt::format("AUROC {:.4f}  AUPRC {:.4f}  FPR95 {:.4f}\n", r.auroc, r.auprc, r.fpr95);
  s += fmt::format("spearman(density, target density) on test graphs: {:.4f}\n",
                   r.target_spearman);
  return s;
}

}  // namespace lgkde
