#include "lgkde/perturb.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgkde/error.hpp"
#include "lgkde/svd.hpp"

namespace lgkde {
namespace {

double mean_of(const std::vector<double>& sigma, const std::vector<std::size_t>& idx) {
  double s = 0.0;
  for (std::size_t i : idx) s += sigma[i];
  return s / static_cast<double>(idx.size());
}

void move_index(std::size_t idx, EnergyPartition& p, std::vector<std::size_t>& dest) {
  for (auto* group : {&p.high, &p.mid, &p.low}) std::erase(*group, idx);
  dest.push_back(idx);
  std::sort(dest.begin(), dest.end());
}

}  // namespace

void validate_config(const PerturbationConfig& cfg) {
  if (!(cfg.r_swap >= 0.0 && cfg.r_swap <= 1.0)) throw ValidationError("r_swap must lie in [0,1]");
  if (!(cfg.tau1 >= 0.0 && cfg.tau1 < cfg.tau2 && cfg.tau2 <= 1.0)) {
    throw ValidationError("thresholds must satisfy 0 <= tau1 < tau2 <= 1");
  }
  if (!(cfg.p_pert > 0.0 && cfg.p_pert <= 1.0)) throw ValidationError("p_pert must lie in (0,1]");
  if (!(cfg.r_max > 1.0)) throw ValidationError("r_max must exceed 1");
  if (cfg.n_pert == 0) throw ValidationError("n_pert must be positive");
}

Matrix feature_perturb(const Matrix& x, double r_swap, Rng& rng) {
  const std::size_t n = x.rows();
  const auto k = static_cast<std::size_t>(std::floor(r_swap * static_cast<double>(n)));
  if (k < 2) return x;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<std::size_t> selected(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(selected.begin(), selected.end());
  std::vector<std::size_t> source = selected;
  std::shuffle(source.begin(), source.end(), rng);
  Matrix out = x;
  for (std::size_t i = 0; i < k; ++i) {
    auto dst = out.row(selected[i]);
    auto src = x.row(source[i]);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

EnergyPartition energy_partition(const std::vector<double>& sigma, double tau1, double tau2,
                                 double r_max) {
  const std::size_t n = sigma.size();
  double total = 0.0;
  for (double s : sigma) total += s * s;
  if (n == 0 || total == 0.0) throw DegenerateInputError("all singular values are zero");

  EnergyPartition p;
  p.cumulative_energy.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += sigma[i] * sigma[i];
    p.cumulative_energy[i] = i + 1 == n ? 1.0 : std::min(acc / total, 1.0);
    const double e = p.cumulative_energy[i];
    if (e <= tau1) {
      p.high.push_back(i);
    } else if (e <= tau2) {
      p.mid.push_back(i);
    } else {
      p.low.push_back(i);
    }
  }
  if (n == 1) {
    p.ratio = 1.0;
    return p;
  }
  if (p.high.empty()) move_index(0, p, p.high);
  if (p.low.empty()) move_index(n - 1, p, p.low);

  const double mu_h = mean_of(sigma, p.high);
  const double mu_l = mean_of(sigma, p.low);
  p.ratio = mu_l == 0.0 ? r_max : std::min(mu_h / mu_l, r_max);
  return p;
}

Matrix spectral_perturb(const Matrix& adjacency, const PerturbationConfig& cfg, EdgeFlag flag,
                        Rng& rng) {
  const std::size_t n = adjacency.rows();
  if (n == 0) return adjacency;
  SvdResult s = svd(adjacency);
  EnergyPartition part;
  try {
    part = energy_partition(s.singular_values, cfg.tau1, cfg.tau2, cfg.r_max);
  } catch (const DegenerateInputError&) {
    return adjacency;
  }
  std::vector<std::size_t> group = flag == EdgeFlag::remove ? part.high : part.low;
  if (group.empty()) {
    spdlog::warn("no eligible singular values for {}; graph left unchanged",
                 flag == EdgeFlag::remove ? "removal" : "addition");
    return adjacency;
  }
  const auto budget = static_cast<std::size_t>(std::floor(cfg.p_pert * static_cast<double>(n)));
  const std::size_t count = std::min(budget, group.size());
  std::shuffle(group.begin(), group.end(), rng);
  const double factor = flag == EdgeFlag::remove ? 1.0 / part.ratio : part.ratio;
  for (std::size_t i = 0; i < count; ++i) s.singular_values[group[i]] *= factor;

  const Matrix recon = reconstruct(s.u, s.singular_values, s.v);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && (recon(i, j) >= 0.5 || recon(j, i) >= 0.5)) out(i, j) = 1.0;
  return out;
}

Graph generate_sample(const Graph& g, const PerturbationConfig& cfg, Rng& rng) {
  EdgeFlag flag;
  return generate_sample(g, cfg, rng, flag);
}

Graph generate_sample(const Graph& g, const PerturbationConfig& cfg, Rng& rng, EdgeFlag& flag) {
  Graph out;
  out.id = g.id;
  out.label = g.label;
  out.features = feature_perturb(g.features, cfg.r_swap, rng);
  flag = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? EdgeFlag::remove : EdgeFlag::add;
  out.adjacency = spectral_perturb(g.adjacency, cfg, flag, rng);
  return out;
}

double edge_change_ratio(const Matrix& before, const Matrix& after) {
  const double e0 = static_cast<double>(edge_count(before));
  const double e1 = static_cast<double>(edge_count(after));
  return (e1 - e0) / std::max(e0, 1.0);
}

}  // namespace lgkde
