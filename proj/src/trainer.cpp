#include "lgkde/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kShuffleStream = 0x7368756600000000ULL;
constexpr std::uint64_t kPerturbStream = 0x7065727400000000ULL;
constexpr std::uint64_t kValStream = 0x76616c0000000000ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f7000000000ULL;

std::vector<std::vector<Graph>> make_samples(const GraphSet& data,
                                             std::span<const std::size_t> idx,
                                             const PerturbationConfig& pc, std::uint64_t seed) {
  std::vector<std::vector<Graph>> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Rng rng = make_rng(seed, idx[k]);
    for (std::size_t s = 0; s < pc.n_pert; ++s) out[k].push_back(generate_sample(data[idx[k]], pc, rng));
  }
  return out;
}

double batch_loss_value(const Model& model, const GraphSet& data, std::span<const std::size_t> idx,
                        const std::vector<std::vector<Graph>>& samples, const TrainConfig& cfg) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, model, false);
  std::vector<const Graph*> batch;
  for (std::size_t i : idx) batch.push_back(&data[i]);
  return contrastive_loss(tape, model, vars, batch, samples, cfg.eps, cfg.leave_one_out).scalar();
}

double evaluate(const Model& model, const GraphSet& data, std::span<const std::size_t> idx,
                const std::vector<std::vector<Graph>>& samples, const TrainConfig& cfg) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(idx.size(), b + cfg.batch_size);
    const std::vector<std::vector<Graph>> chunk(samples.begin() + static_cast<std::ptrdiff_t>(b),
                                                samples.begin() + static_cast<std::ptrdiff_t>(e));
    total += batch_loss_value(model, data, idx.subspan(b, e - b), chunk, cfg);
  }
  return total / static_cast<double>(idx.size());
}

bool all_finite(std::span<const Matrix> ms) {
  return std::all_of(ms.begin(), ms.end(), [](const Matrix& m) { return m.all_finite(); });
}

}  // namespace

Model init_model(const GnnConfig& gnn, std::span<const double> mmd_bandwidths,
                 std::span<const double> kde_bandwidths, std::uint64_t seed) {
  Model m;
  m.gnn = init_params(gnn, seed);
  m.family = KernelFamily::from_bandwidths(mmd_bandwidths);
  m.kde = KdeParams::with_bandwidths({kde_bandwidths.begin(), kde_bandwidths.end()});
  return m;
}

void validate_config(const TrainConfig& cfg) {
  const auto positive = [](double x, const char* what) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError(std::string(what) + " must be positive");
  };
  positive(cfg.lr, "learning rate");
  if (cfg.lr_gnn) positive(*cfg.lr_gnn, "GNN learning rate");
  if (cfg.lr_kde) positive(*cfg.lr_kde, "KDE learning rate");
  positive(cfg.clip_norm, "clip norm");
  positive(cfg.eps, "epsilon");
  if (cfg.batch_size == 0) throw ValidationError("batch size must be positive");
  if (cfg.max_epochs == 0) throw ValidationError("max epochs must be positive");
  if (cfg.patience == 0) throw ValidationError("patience must be positive");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction <= 0.5)) {
    throw ValidationError("validation fraction must lie in [0, 0.5]");
  }
  validate_config(cfg.perturb);
}

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               std::span<const double> lrs) {
  if (params.size() != grads.size()) throw DimensionError("parameter and gradient counts differ");
  if (lrs.size() != 1 && lrs.size() != params.size()) {
    throw DimensionError("expected one learning rate or one per parameter");
  }
  if (state.m.empty()) {
    for (const Matrix& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("Adam state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k].same_shape(params[k]) || !state.m[k].same_shape(params[k])) {
      throw DimensionError("Adam shape mismatch for parameter " + std::to_string(k));
    }
    if (!grads[k].all_finite()) {
      throw NumericalError("non-finite gradient for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double lr = lrs.size() == 1 ? lrs[0] : lrs[k];
    auto p = params[k].values();
    auto g = grads[k].values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= lr * mh / (std::sqrt(vh) + state.eps);
    }
  }
}

double clip_global_norm(std::span<Matrix> grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads)
    for (double x : g.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Matrix& g : grads) g *= s;
  }
  return norm;
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  const auto e = static_cast<double>(epoch);
  const auto w = static_cast<double>(cfg.warmup_epochs);
  const auto total = static_cast<double>(cfg.max_epochs);
  if (epoch >= cfg.max_epochs) return 0.0;
  if (cfg.warmup_epochs > 0 && epoch <= cfg.warmup_epochs) return cfg.lr * e / w;
  const double progress = (e - w) / (total - w);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

ModelVars bind(ad::Tape& tape, const Model& model, bool trainable) {
  ModelVars v;
  for (const Matrix& w : model.gnn.weights) {
    v.weights.push_back(trainable ? tape.leaf(w) : tape.constant(w));
  }
  Matrix logits = Matrix::row_vector(model.kde.logits);
  v.logits = trainable ? tape.leaf(std::move(logits)) : tape.constant(std::move(logits));
  return v;
}

ad::Var contrastive_loss(ad::Tape& tape, const Model& model, const ModelVars& vars,
                         std::span<const Graph* const> batch,
                         std::span<const std::vector<Graph>> perturbed, double eps,
                         bool leave_one_out, const EncodeContext& ctx) {
  if (batch.empty()) throw ValidationError("loss needs a non-empty batch");
  if (perturbed.size() != batch.size()) {
    throw DimensionError("perturbed sample lists do not match the batch");
  }
  std::vector<const Graph*> all(batch.begin(), batch.end());
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    if (perturbed[i].empty()) throw ValidationError("graph without perturbed samples");
    for (const Graph& g : perturbed[i]) {
      all.push_back(&g);
      source.push_back(i);
    }
  }
  const std::vector<ad::Var> emb = encode_batch(tape, vars.weights, model.gnn, all, ctx);

  const std::size_t nb = batch.size(), np = source.size();
  std::vector<std::size_t> queries(nb + np), refs(nb);
  std::iota(queries.begin(), queries.end(), 0);
  std::iota(refs.begin(), refs.end(), 0);
  const ad::Var dist = pairwise_mmd(emb, queries, refs, model.family);
  // Perturbed samples are owned by their source graph, so leave-one-out drops
  // the source from their reference set as well.
  std::vector<std::size_t> owner(refs);
  owner.insert(owner.end(), source.begin(), source.end());
  const Matrix mask = leave_one_out ? leave_one_out_mask(owner, refs) : Matrix();
  if (leave_one_out && nb < 2) throw ValidationError("leave-one-out needs at least two graphs");
  const ad::Var f = density(dist, vars.logits, model.kde.bandwidths, leave_one_out ? &mask : nullptr);

  const ad::Var f_orig = ad::gather_rows(ad::slice_rows(f, 0, nb), source);
  const ad::Var f_pert = ad::slice_rows(f, nb, np);
  const ad::Var ratio = ad::div(ad::sub(f_orig, f_pert), ad::add_scalar(f_orig, eps));
  return ad::scale(ad::sum(ratio), -1.0);
}

TrainResult train(const GraphSet& dataset, const TrainConfig& cfg, const GnnConfig& gnn_cfg,
                  std::span<const double> mmd_bandwidths, std::span<const double> kde_bandwidths) {
  GnnConfig g = gnn_cfg;
  g.in_dim = dataset.feature_dim;
  return train(dataset, cfg, init_model(g, mmd_bandwidths, kde_bandwidths, cfg.seed), 0);
}

TrainResult train(const GraphSet& dataset, const TrainConfig& cfg, Model initial,
                  std::size_t start_epoch) {
  validate_config(cfg);
  if (dataset.empty()) throw ValidationError("training set is empty");
  if (dataset.feature_dim != initial.gnn.config.in_dim) {
    throw DimensionError("dataset feature dimension " + std::to_string(dataset.feature_dim) +
                         " does not match the encoder input " +
                         std::to_string(initial.gnn.config.in_dim));
  }
  const std::uint64_t pseed = derive_seed(cfg.seed, cfg.perturb.seed);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = make_rng(cfg.seed, kSplitStream);
  std::shuffle(order.begin(), order.end(), split_rng);
  auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(order.size())));
  if (cfg.leave_one_out && order.size() < 2) {
    throw ValidationError("leave-one-out training needs at least two graphs");
  }
  // Each side of the split is its own reference set and needs two graphs.
  if (n_val >= order.size() || (cfg.leave_one_out && (n_val < 2 || order.size() - n_val < 2))) {
    n_val = 0;
  }
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  const auto val_samples = make_samples(dataset, val, cfg.perturb, derive_seed(pseed, kValStream));

  TrainResult result;
  result.model = initial;
  Model model = std::move(initial);
  AdamState adam;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  result.best_epoch = start_epoch;
  result.last_epoch = start_epoch;

  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    const double factor = lr / cfg.lr;
    Rng shuffle_rng = make_rng(cfg.seed, kShuffleStream + epoch);
    Rng dropout_rng = make_rng(cfg.seed, kDropoutStream + epoch);
    std::shuffle(tr.begin(), tr.end(), shuffle_rng);
    double total = 0.0;
    try {
      for (std::size_t b = 0, len = 0; b < tr.size(); b += len) {
        len = std::min(cfg.batch_size, tr.size() - b);
        if (tr.size() - b - len == 1) ++len;  // no single-graph trailing batch
        const std::span<const std::size_t> idx(tr.data() + b, len);
        const auto samples = make_samples(dataset, idx, cfg.perturb, derive_seed(pseed, kPerturbStream + epoch));
        ad::Tape tape;
        const ModelVars vars = bind(tape, model, true);
        std::vector<const Graph*> batch;
        for (std::size_t i : idx) batch.push_back(&dataset[i]);
        EncodeContext ctx{true, &dropout_rng, model.gnn.config.batch_norm ? &model.gnn : nullptr};
        const ad::Var loss = contrastive_loss(tape, model, vars, batch, samples, cfg.eps,
                                              cfg.leave_one_out, ctx);
        if (!std::isfinite(loss.scalar())) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
        }
        tape.backward(loss);
        std::vector<Matrix> grads, params;
        std::vector<double> lrs;
        for (std::size_t k = 0; k < vars.weights.size(); ++k) {
          grads.push_back(tape.grad(vars.weights[k]));
          params.push_back(model.gnn.weights[k]);
          lrs.push_back(cfg.lr_gnn.value_or(cfg.lr) * factor);
        }
        grads.push_back(tape.grad(vars.logits));
        params.push_back(Matrix::row_vector(model.kde.logits));
        lrs.push_back(cfg.lr_kde.value_or(cfg.lr) * factor);
        if (!all_finite(grads)) {
          throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
        }
        clip_global_norm(grads, cfg.clip_norm);
        adam_step(params, grads, adam, lrs);
        for (std::size_t k = 0; k < vars.weights.size(); ++k) model.gnn.weights[k] = std::move(params[k]);
        const Matrix& lg = params.back();
        model.kde.logits.assign(lg.values().begin(), lg.values().end());
        total += loss.scalar();
      }
    } catch (const NumericalError& e) {
      spdlog::error("training aborted: {}", e.what());
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = total / static_cast<double>(tr.size());
    entry.val_loss = val.empty() ? entry.loss : evaluate(model, dataset, val, val_samples, cfg);
    entry.lr = lr;
    entry.weights = model.kde.weights();
    result.log.push_back(entry);
    result.last_epoch = epoch;
    spdlog::info("epoch {:4d} loss {:.6f} val {:.6f} lr {:.3g}", epoch, entry.loss,
                 entry.val_loss, lr);

    if (!std::isfinite(entry.val_loss)) {
      result.aborted = true;
      result.abort_reason = "non-finite validation loss at epoch " + std::to_string(epoch);
      spdlog::error("training aborted: {}", result.abort_reason);
      break;
    }
    if (entry.val_loss < best) {
      best = entry.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      spdlog::info("early stop at epoch {} (best {})", epoch, result.best_epoch);
      break;
    }
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                        bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot write training log " + path.string());
  for (const EpochLog& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["val_loss"] = e.val_loss;
    j["lr"] = e.lr;
    j["pi"] = e.weights;
    out << j.dump() << '\n';
  }
}

}  // namespace lgkde
