#include "lgkde/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

using Sums = std::vector<long double>;

void check_pair(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ValidationError("MMD needs non-empty embedding sets");
  if (a.cols() != b.cols()) {
    throw DimensionError("embedding widths differ: " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

double squared_distance(const double* u, const double* v, std::size_t d) {
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = u[c] - v[c];
    s += diff * diff;
  }
  return s;
}

// Σ_p Σ_q exp(-γ‖a_p − b_q‖²) for every γ (ascending), accumulated in long double.
Sums kernel_sums(const Matrix& a, const Matrix& b, std::span<const double> gammas) {
  Sums out(gammas.size(), 0.0L);
  const std::size_t d = a.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* u = a.row(p).data();
    for (std::size_t q = 0; q < b.rows(); ++q) {
      const double d2 = squared_distance(u, b.row(q).data(), d);
      for (std::size_t s = 0; s < gammas.size(); ++s) {
        const double x = gammas[s] * d2;
        if (x > kKernelCutoff) break;
        out[s] += std::exp(-x);
      }
    }
  }
  return out;
}

long double combine(long double self_i, long double self_j, long double cross, std::size_t ni,
                    std::size_t nj) {
  const long double a = self_i / static_cast<long double>(ni * ni);
  const long double b = self_j / static_cast<long double>(nj * nj);
  const long double c = cross / static_cast<long double>(ni * nj);
  return a + b - 2.0L * c;
}

MmdDistance reduce(const Sums& si, const Sums& sj, const Sums& cross, std::size_t ni,
                   std::size_t nj) {
  MmdDistance best;
  long double top = 0.0L;
  for (std::size_t s = 0; s < cross.size(); ++s) {
    const long double v = combine(si[s], sj[s], cross[s], ni, nj);
    if (s == 0 || v > top) {
      top = v;
      best.argmax = s;
    }
  }
  best.distance = top > 0.0L ? std::sqrt(static_cast<double>(top)) : 0.0;
  return best;
}

// Adds coef · ∂k(a_p, b_q)/∂a_p into ga and coef · ∂k/∂b_q into gb for all p, q.
// ga and gb may alias (self terms).
void cross_grad(const Matrix& a, const Matrix& b, double gamma, double coef, Matrix& ga,
                Matrix& gb) {
  const std::size_t d = a.cols();
  std::vector<double> diff(d);
  for (std::size_t p = 0; p < a.rows(); ++p) {
    for (std::size_t q = 0; q < b.rows(); ++q) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        diff[c] = a(p, c) - b(q, c);
        d2 += diff[c] * diff[c];
      }
      const double x = gamma * d2;
      if (x > kKernelCutoff) continue;
      const double w = -2.0 * gamma * std::exp(-x) * coef;
      for (std::size_t c = 0; c < d; ++c) {
        ga(p, c) += w * diff[c];
        gb(q, c) -= w * diff[c];
      }
    }
  }
}

}  // namespace

KernelFamily KernelFamily::defaults() {
  const double h[] = {0.01, 0.1, 1.0, 10.0, 100.0};
  return from_bandwidths(h);
}

KernelFamily KernelFamily::from_bandwidths(std::span<const double> h) {
  std::vector<double> g;
  for (double x : h) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError("MMD bandwidths must be positive");
    g.push_back(1.0 / (x * x));
  }
  return from_gammas(std::move(g));
}

KernelFamily KernelFamily::from_gammas(std::vector<double> gammas) {
  if (gammas.empty()) throw ValidationError("kernel family is empty");
  for (double g : gammas)
    if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError("kernel gammas must be positive");
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());
  return KernelFamily{std::move(gammas)};
}

double mmd_sq(const Matrix& zi, const Matrix& zj, double gamma) {
  check_pair(zi, zj);
  const double g[] = {gamma};
  const long double v = combine(kernel_sums(zi, zi, g)[0], kernel_sums(zj, zj, g)[0],
                                kernel_sums(zi, zj, g)[0], zi.rows(), zj.rows());
  return v > 0.0L ? static_cast<double>(v) : 0.0;
}

MmdDistance mmd_distance(const Matrix& zi, const Matrix& zj, const KernelFamily& family) {
  check_pair(zi, zj);
  return reduce(kernel_sums(zi, zi, family.gammas), kernel_sums(zj, zj, family.gammas),
                kernel_sums(zi, zj, family.gammas), zi.rows(), zj.rows());
}

ad::Var mmd_sq(ad::Var zi, ad::Var zj, double gamma) {
  const Matrix& a = zi.value();
  const Matrix& b = zj.value();
  check_pair(a, b);
  const double value = mmd_sq(a, b, gamma);
  const ad::Var parents[] = {zi, zj};
  const std::size_t ia = zi.id(), ib = zj.id();
  return zi.tape()->record(
      Matrix(1, 1, value), parents, "mmd_sq", [ia, ib, gamma](const Matrix& g, ad::Tape& t) {
        const Matrix& a = t.value(ia);
        const Matrix& b = t.value(ib);
        const double ni = static_cast<double>(a.rows()), nj = static_cast<double>(b.rows());
        Matrix ga(a.rows(), a.cols()), gb(b.rows(), b.cols());
        cross_grad(a, a, gamma, g[0] / (ni * ni), ga, ga);
        cross_grad(b, b, gamma, g[0] / (nj * nj), gb, gb);
        cross_grad(a, b, gamma, -2.0 * g[0] / (ni * nj), ga, gb);
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
      });
}

ad::Var mmd_distance(ad::Var zi, ad::Var zj, const KernelFamily& family) {
  const ad::Var emb[] = {zi, zj};
  const std::size_t q[] = {0}, r[] = {1};
  return pairwise_mmd(emb, q, r, family);
}

ad::Var pairwise_mmd(std::span<const ad::Var> embeddings, std::span<const std::size_t> queries,
                     std::span<const std::size_t> references, const KernelFamily& family) {
  if (embeddings.empty()) throw ValidationError("pairwise MMD needs embeddings");
  ad::Tape& tape = *embeddings[0].tape();
  const std::size_t ne = embeddings.size();
  for (std::size_t k : queries)
    if (k >= ne) throw DimensionError("query index out of range");
  for (std::size_t k : references)
    if (k >= ne) throw DimensionError("reference index out of range");

  // Self sums only for embeddings that take part.
  std::vector<char> used(ne, 0);
  for (std::size_t k : queries) used[k] = 1;
  for (std::size_t k : references) used[k] = 1;
  std::vector<Sums> self(ne);
  std::vector<std::size_t> used_list;
  for (std::size_t k = 0; k < ne; ++k)
    if (used[k]) used_list.push_back(k);
  for (std::size_t k : used_list) {
    check_pair(embeddings[k].value(), embeddings[used_list[0]].value());
  }
#pragma omp parallel for schedule(dynamic)
  for (std::size_t u = 0; u < used_list.size(); ++u) {
    const Matrix& z = embeddings[used_list[u]].value();
    self[used_list[u]] = kernel_sums(z, z, family.gammas);
  }

  const std::size_t nq = queries.size(), nr = references.size();
  Matrix dist(nq, nr);
  std::vector<std::size_t> argmax(nq * nr, 0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < nq * nr; ++idx) {
    const std::size_t i = queries[idx / nr], j = references[idx % nr];
    if (i == j) continue;
    const Matrix& zi = embeddings[i].value();
    const Matrix& zj = embeddings[j].value();
    const MmdDistance m =
        reduce(self[i], self[j], kernel_sums(zi, zj, family.gammas), zi.rows(), zj.rows());
    dist[idx] = m.distance;
    argmax[idx] = m.argmax;
  }
  for (std::size_t a : argmax) tape.note_branch(a);

  std::vector<ad::Var> parents(embeddings.begin(), embeddings.end());
  std::vector<std::size_t> ids(ne);
  for (std::size_t k = 0; k < ne; ++k) ids[k] = embeddings[k].id();
  std::vector<std::size_t> q(queries.begin(), queries.end());
  std::vector<std::size_t> r(references.begin(), references.end());
  const std::size_t out_id = tape.size();
  return tape.record(
      std::move(dist), parents, "pairwise_mmd",
      [ids, q, r, argmax, gammas = family.gammas, out_id](const Matrix& g, ad::Tape& t) {
        const Matrix& d = t.value(out_id);
        const std::size_t nr = r.size(), ns = gammas.size();
        std::vector<Matrix> grads(ids.size());
        std::vector<double> self_coef(ids.size() * ns, 0.0);
        auto grad_of = [&](std::size_t k) -> Matrix& {
          if (grads[k].empty()) grads[k] = Matrix(t.value(ids[k]).rows(), t.value(ids[k]).cols());
          return grads[k];
        };
        for (std::size_t idx = 0; idx < d.size(); ++idx) {
          if (d[idx] == 0.0 || g[idx] == 0.0) continue;
          const std::size_t i = q[idx / nr], j = r[idx % nr], s = argmax[idx];
          const Matrix& zi = t.value(ids[i]);
          const Matrix& zj = t.value(ids[j]);
          const double ni = static_cast<double>(zi.rows()), nj = static_cast<double>(zj.rows());
          const double coef = g[idx] / (2.0 * d[idx]);
          self_coef[i * ns + s] += coef / (ni * ni);
          self_coef[j * ns + s] += coef / (nj * nj);
          cross_grad(zi, zj, gammas[s], -2.0 * coef / (ni * nj), grad_of(i), grad_of(j));
        }
        for (std::size_t k = 0; k < ids.size(); ++k)
          for (std::size_t s = 0; s < ns; ++s) {
            const double c = self_coef[k * ns + s];
            if (c == 0.0) continue;
            Matrix& gk = grad_of(k);
            const Matrix& z = t.value(ids[k]);
            cross_grad(z, z, gammas[s], c, gk, gk);
          }
        for (std::size_t k = 0; k < ids.size(); ++k)
          if (!grads[k].empty()) t.accumulate(ids[k], grads[k]);
      });
}

EmbeddingSet embed(std::vector<Matrix> z, const KernelFamily& family) {
  EmbeddingSet set;
  set.self_sums.resize(z.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (z[k].rows() == 0) continue;
    set.self_sums[k] = kernel_sums(z[k], z[k], family.gammas);
  }
  set.z = std::move(z);
  set.ids.resize(set.z.size());
  for (std::size_t k = 0; k < set.ids.size(); ++k) set.ids[k] = std::to_string(k);
  return set;
}

EmbeddingSet embed(const GraphSet& graphs, const GnnParams& params, const KernelFamily& family) {
  std::vector<Matrix> z(graphs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < graphs.size(); ++k) z[k] = encode(graphs[k], params);
  EmbeddingSet set = embed(std::move(z), family);
  for (std::size_t k = 0; k < graphs.size(); ++k) set.ids[k] = graphs[k].id;
  return set;
}

DistanceMatrix distance_matrix(const EmbeddingSet& queries, const EmbeddingSet& references,
                               const KernelFamily& family, bool self_mode) {
  const std::size_t nq = queries.z.size(), nr = references.z.size();
  if (self_mode && &queries != &references && nq != nr) {
    throw DimensionError("self-mode distance matrix needs one set");
  }
  for (const auto* set : {&queries, &references})
    for (const Matrix& z : set->z) {
      if (z.rows() == 0) throw ValidationError("MMD needs non-empty embedding sets");
    }
  DistanceMatrix out;
  out.values = Matrix(nq, nr);
  out.argmax.assign(nq * nr, 0);
  out.row_ids = queries.ids;
  out.col_ids = references.ids;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < nq * nr; ++idx) {
    const std::size_t i = idx / nr, j = idx % nr;
    if (self_mode && j <= i) continue;
    const Matrix& zi = queries.z[i];
    const Matrix& zj = references.z[j];
    check_pair(zi, zj);
    const MmdDistance m = reduce(queries.self_sums[i], references.self_sums[j],
                                 kernel_sums(zi, zj, family.gammas), zi.rows(), zj.rows());
    out.values[idx] = m.distance;
    out.argmax[idx] = m.argmax;
  }
  if (self_mode) {
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < i; ++j) {
        out.values(i, j) = out.values(j, i);
        out.argmax[i * nr + j] = out.argmax[j * nr + i];
      }
  }
  return out;
}

DistanceMatrix distance_matrix(const GraphSet& queries, const GraphSet* references,
                               const GnnParams& params, const KernelFamily& family) {
  const EmbeddingSet q = embed(queries, params, family);
  if (references == nullptr) return distance_matrix(q, q, family, true);
  const EmbeddingSet r = embed(*references, params, family);
  return distance_matrix(q, r, family, false);
}

void write_distance_csv(std::ostream& out, const DistanceMatrix& d) {
  out << "id";
  for (const auto& c : d.col_ids) out << ',' << c;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < d.values.rows(); ++i) {
    out << (i < d.row_ids.size() ? d.row_ids[i] : std::to_string(i));
    for (std::size_t j = 0; j < d.values.cols(); ++j) out << ',' << d.values(i, j);
    out << '\n';
  }
}

void write_distance_csv(const std::filesystem::path& path, const DistanceMatrix& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_distance_csv(out, d);
}

}  // namespace lgkde
