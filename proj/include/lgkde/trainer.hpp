#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgkde/gnn.hpp"
#include "lgkde/kde.hpp"
#include "lgkde/mmd.hpp"
#include "lgkde/perturb.hpp"

namespace lgkde {

/// Everything needed to score a graph: encoder, MMD kernels and KDE mixture.
struct Model {
  GnnParams gnn;
  KernelFamily family;
  KdeParams kde;
};

Model init_model(const GnnConfig& gnn, std::span<const double> mmd_bandwidths,
                 std::span<const double> kde_bandwidths, std::uint64_t seed);

struct TrainConfig {
  double lr = 1e-3;
  std::optional<double> lr_gnn;  // per-group overrides of lr
  std::optional<double> lr_kde;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double clip_norm = 5.0;
  std::size_t warmup_epochs = 10;
  double eps = 1e-6;
  double val_fraction = 0.1;
  bool leave_one_out = true;  // false keeps each graph in its own reference set
  PerturbationConfig perturb;
  std::uint64_t seed = 0;
};

void validate_config(const TrainConfig& cfg);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam; lrs holds one rate per parameter (or a single shared one).
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               std::span<const double> lrs);

/// Scales grads in place so their joint Frobenius norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

/// Linear warmup over epochs 1..warmup, then cosine decay reaching 0 at max_epochs.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Handles of the model parameters on a tape.
struct ModelVars {
  std::vector<ad::Var> weights;
  ad::Var logits;
};

ModelVars bind(ad::Tape& tape, const Model& model, bool trainable);

/// −Σ_i Σ_j (f(G_i) − f(G̃_ij)) / (f(G_i) + eps), where the batch is the only
/// KDE reference set and perturbed graphs are queries only.
ad::Var contrastive_loss(ad::Tape& tape, const Model& model, const ModelVars& vars,
                         std::span<const Graph* const> batch,
                         std::span<const std::vector<Graph>> perturbed, double eps,
                         bool leave_one_out = false, const EncodeContext& ctx = {});

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean per training graph
  double val_loss = 0.0;  // mean per validation graph (training loss when no split)
  double lr = 0.0;
  std::vector<double> weights;
};

struct TrainResult {
  Model model;  // best-validation parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t last_epoch = 0;
  bool early_stopped = false;
  bool aborted = false;
  std::string abort_reason;
};

/// Fresh perturbations every epoch; validation perturbations are drawn once.
/// `start_epoch` > 0 resumes numbering after a checkpoint of `initial`.
TrainResult train(const GraphSet& dataset, const TrainConfig& cfg, const GnnConfig& gnn_cfg,
                  std::span<const double> mmd_bandwidths, std::span<const double> kde_bandwidths);
TrainResult train(const GraphSet& dataset, const TrainConfig& cfg, Model initial,
                  std::size_t start_epoch = 0);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                        bool append = false);

}  // namespace lgkde
