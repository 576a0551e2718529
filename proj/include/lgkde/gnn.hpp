#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgkde/autodiff.hpp"
#include "lgkde/graph.hpp"
#include "lgkde/rng.hpp"

namespace lgkde {

struct GnnConfig {
  std::size_t in_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 32;
  std::size_t layers = 2;
  bool batch_norm = false;
  double dropout = 0.0;
  bool final_activation = false;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

/// d_in, d_hid, ..., d_hid, d_out (layers + 1 entries).
std::vector<std::size_t> layer_dims(const GnnConfig& cfg);

struct GnnParams {
  GnnConfig config;
  std::vector<Matrix> weights;
  // Batch-norm running statistics for each hidden layer (1 x d rows).
  std::vector<Matrix> running_mean;
  std::vector<Matrix> running_var;
};

void validate_config(const GnnConfig& cfg);

/// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)); deterministic per seed.
GnnParams init_params(const GnnConfig& cfg, std::uint64_t seed);

struct EncodeContext {
  bool training = false;
  Rng* rng = nullptr;                 // dropout masks; required when training with dropout
  GnnParams* update_stats = nullptr;  // receives running batch-norm statistics
};

/// Encodes every graph of the batch on `tape`, with `weights` the tape
/// handles of params.weights (leaves for training, constants otherwise).
/// Layer: Z' = act(Â Z W), act = relu on hidden layers and optionally on the
/// last. With batch norm, hidden pre-activations are standardized over all
/// nodes of the batch in training mode and by running statistics otherwise.
std::vector<ad::Var> encode_batch(ad::Tape& tape, std::span<const ad::Var> weights,
                                  const GnnParams& params, std::span<const Graph* const> graphs,
                                  const EncodeContext& ctx = {});

/// Inference-mode embedding of one graph, n x d_out.
Matrix encode(const Graph& g, const GnnParams& params);

}  // namespace lgkde
