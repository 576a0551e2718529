#include "lgkde/gnn.hpp"

#include <cmath>

#include "lgkde/error.hpp"

namespace lgkde {

std::vector<std::size_t> layer_dims(const GnnConfig& cfg) {
  std::vector<std::size_t> dims{cfg.in_dim};
  for (std::size_t l = 1; l < cfg.layers; ++l) dims.push_back(cfg.hidden_dim);
  dims.push_back(cfg.out_dim);
  return dims;
}

void validate_config(const GnnConfig& cfg) {
  if (cfg.layers < 1) throw ValidationError("GNN needs at least one layer");
  if (cfg.in_dim == 0 || cfg.out_dim == 0 || (cfg.layers > 1 && cfg.hidden_dim == 0)) {
    throw ValidationError("GNN layer widths must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
}

GnnParams init_params(const GnnConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  GnnParams p;
  p.config = cfg;
  const auto dims = layer_dims(cfg);
  Rng rng = make_rng(seed, 0x676e6eULL);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(dims[l], dims[l + 1]);
    for (double& x : w.values()) x = u(rng);
    p.weights.push_back(std::move(w));
  }
  if (cfg.batch_norm) {
    for (std::size_t l = 1; l + 1 < dims.size(); ++l) {
      p.running_mean.emplace_back(1, dims[l], 0.0);
      p.running_var.emplace_back(1, dims[l], 1.0);
    }
  }
  return p;
}

namespace {

// (x - mean) / sqrt(var + eps) with fixed statistics, as tape ops.
ad::Var normalize_fixed(ad::Var x, const Matrix& mean, const Matrix& var, double eps) {
  ad::Tape& t = *x.tape();
  const std::size_t rows = x.rows(), d = x.cols();
  std::vector<double> inv(d);
  for (std::size_t j = 0; j < d; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  Matrix shift(rows, d);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) shift(i, j) = -mean[j] * inv[j];
  return ad::add(ad::matmul(x, t.constant(Matrix::diagonal(inv))), t.constant(std::move(shift)));
}

void update_running(const Matrix& x, double momentum, Matrix& mean, Matrix& var) {
  const std::size_t rows = x.rows(), d = x.cols();
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < rows; ++i) m += x(i, j);
    m /= static_cast<double>(rows);
    double v = 0.0;
    for (std::size_t i = 0; i < rows; ++i) v += (x(i, j) - m) * (x(i, j) - m);
    v /= static_cast<double>(rows);
    mean[j] = (1.0 - momentum) * mean[j] + momentum * m;
    var[j] = (1.0 - momentum) * var[j] + momentum * v;
  }
}

}  // namespace

std::vector<ad::Var> encode_batch(ad::Tape& tape, std::span<const ad::Var> weights,
                                  const GnnParams& params, std::span<const Graph* const> graphs,
                                  const EncodeContext& ctx) {
  const GnnConfig& cfg = params.config;
  if (weights.size() != params.weights.size()) {
    throw DimensionError("weight handle count does not match layer count");
  }
  if (graphs.empty()) return {};
  const bool dropout = ctx.training && cfg.dropout > 0.0;
  if (dropout && ctx.rng == nullptr) throw ValidationError("dropout needs a random stream");

  std::vector<Matrix> a_hat;
  std::vector<ad::Var> z;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Graph* g : graphs) {
    if (g->feature_dim() != cfg.in_dim) {
      throw DimensionError("graph '" + g->id + "' has feature dimension " +
                           std::to_string(g->feature_dim()) + ", encoder expects " +
                           std::to_string(cfg.in_dim));
    }
    a_hat.push_back(normalized_adjacency(*g));
    offsets.push_back(total);
    total += g->num_nodes();
  }
  // First propagation has no trainable input, so Â·X is folded into a constant.
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    z.push_back(tape.constant(matmul(a_hat[k], graphs[k]->features)));
  }

  for (std::size_t l = 0; l < weights.size(); ++l) {
    const bool last = l + 1 == weights.size();
    std::vector<ad::Var> propagated;
    propagated.reserve(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      propagated.push_back(l == 0 ? z[k] : ad::matmul(tape.constant(a_hat[k]), z[k]));
    }
    ad::Var h = ad::matmul(propagated.size() == 1 ? propagated[0] : ad::vstack(propagated),
                           weights[l]);
    if (cfg.batch_norm && !last) {
      if (ctx.training) {
        if (ctx.update_stats != nullptr) {
          update_running(h.value(), cfg.bn_momentum, ctx.update_stats->running_mean[l],
                         ctx.update_stats->running_var[l]);
        }
        h = ad::standardize_columns(h, cfg.bn_eps);
      } else {
        h = normalize_fixed(h, params.running_mean[l], params.running_var[l], cfg.bn_eps);
      }
    }
    if (!last || cfg.final_activation) h = ad::relu(h);
    if (dropout && !last) {
      std::bernoulli_distribution keep(1.0 - cfg.dropout);
      Matrix mask(h.rows(), h.cols());
      for (double& m : mask.values()) m = keep(*ctx.rng) ? 1.0 / (1.0 - cfg.dropout) : 0.0;
      h = ad::mul(h, tape.constant(std::move(mask)));
    }
    z.clear();
    if (graphs.size() == 1) {
      z.push_back(h);
    } else {
      for (std::size_t k = 0; k < graphs.size(); ++k) {
        z.push_back(ad::slice_rows(h, offsets[k], graphs[k]->num_nodes()));
      }
    }
  }
  return z;
}

Matrix encode(const Graph& g, const GnnParams& params) {
  ad::Tape tape;
  std::vector<ad::Var> w;
  for (const Matrix& m : params.weights) w.push_back(tape.constant(m));
  const Graph* one[] = {&g};
  return encode_batch(tape, w, params, one)[0].value();
}

}  // namespace lgkde
