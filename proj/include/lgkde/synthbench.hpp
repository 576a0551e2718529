#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lgkde/detector.hpp"
#include "lgkde/synth.hpp"

namespace lgkde {

struct SynthBenchConfig {
  Family family = Family::er;
  std::uint64_t seed = 0;
  std::size_t n_train = 240;
  std::size_t n_test_normal = 60;
  std::size_t n_test_anomaly = 60;  // split evenly across the family's anomaly modes
  std::size_t n_min = 20;
  std::size_t n_max = 50;
  TrainConfig train;
  GnnConfig gnn;
  std::vector<double> mmd_bandwidths{0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> kde_bandwidths{0.01, 0.1, 1.0, 10.0, 100.0};
};

struct DensityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_density = 0.0;
  double std_density = 0.0;
};

struct SynthBenchReport {
  Family family = Family::er;
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<DensityBin> bins;  // ER only: training graphs binned by true p
  std::optional<double> train_target_spearman;  // ER only
  double normal_mean = 0.0, normal_std = 0.0;
  double anomaly_mean = 0.0, anomaly_std = 0.0;
  double density_gap = 0.0;
  double auroc = 0.0, auprc = 0.0, fpr95 = 0.0;
  double target_spearman = 0.0;  // test densities vs ground-truth target density
};

std::vector<std::string> anomaly_modes(Family f);

SynthBenchReport run_synthbench(const SynthBenchConfig& cfg);
std::string synthbench_json(const SynthBenchReport& report);
/// Human-readable table, stable formatting.
std::string synthbench_table(const SynthBenchReport& report);

}  // namespace lgkde
