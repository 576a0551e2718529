#include "lgkde/synth.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <queue>
#include <set>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

double beta_draw(Rng& rng, double a, double b) {
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  return x / (x + y);
}

std::size_t draw_n(const GenSpec& spec, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(spec.n_min, spec.n_max)(rng);
}

template <typename Fn>
Generated generate_each(const GenSpec& spec, Fn&& one) {
  validate_spec(spec);
  Generated out;
  out.params.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = make_rng(spec.seed, i);
    GraphParams params;
    Graph g = one(rng, params);
    g.id = family_name(spec.family) + (spec.anomaly.empty() ? "" : "_" + spec.anomaly) + "_" +
           std::to_string(i);
    g.label = spec.anomaly.empty() ? 0 : 1;
    params["n"] = static_cast<double>(g.num_nodes());
    out.graphs.add(std::move(g));
    out.params.push_back(std::move(params));
  }
  return out;
}

Graph with_features(Matrix adjacency, bool clustering) {
  Graph g;
  g.features = clustering ? degree_clustering_features(adjacency)
                          : degree_centrality_features(adjacency);
  g.adjacency = std::move(adjacency);
  return g;
}

std::vector<std::size_t> bfs_distances(const Matrix& a, std::size_t src) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> dist(n, SIZE_MAX);
  std::queue<std::size_t> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v = 0; v < n; ++v)
      if (a(u, v) != 0.0 && dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

std::vector<std::size_t> components(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> comp(n, SIZE_MAX);
  std::size_t next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != SIZE_MAX) continue;
    const auto d = bfs_distances(a, s);
    for (std::size_t v = 0; v < n; ++v)
      if (d[v] != SIZE_MAX) comp[v] = next;
    ++next;
  }
  return comp;
}

std::vector<std::size_t> relabel(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], remap.size());
    out[i] = it->second;
  }
  return out;
}

// Greedy agglomeration: merge the community pair with the largest positive
// modularity gain until none remains.
void merge_communities(const Matrix& a, std::vector<std::size_t>& comm, double m) {
  for (;;) {
    comm = relabel(comm);
    const std::size_t c = *std::max_element(comm.begin(), comm.end()) + 1;
    if (c < 2) return;
    std::vector<double> deg(c, 0.0);
    Matrix between(c, c);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        if (a(i, j) != 0.0) {
          deg[comm[i]] += 1.0;
          if (comm[i] != comm[j]) between(comm[i], comm[j]) += 0.5;
        }
    double best = 1e-12;
    std::size_t ba = 0, bb = 0;
    for (std::size_t x = 0; x < c; ++x)
      for (std::size_t y = x + 1; y < c; ++y) {
        const double gain = between(x, y) / m - deg[x] * deg[y] / (2.0 * m * m);
        if (gain > best) {
          best = gain;
          ba = x;
          bb = y;
        }
      }
    if (best <= 1e-12) return;
    for (auto& l : comm)
      if (l == bb) l = ba;
  }
}

}  // namespace

Family parse_family(const std::string& name) {
  if (name == "er") return Family::er;
  if (name == "ba") return Family::ba;
  if (name == "ws") return Family::ws;
  if (name == "sbm") return Family::sbm;
  throw ValidationError("unknown graph family '" + name + "' (expected er, ba, ws or sbm)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::er: return "er";
    case Family::ba: return "ba";
    case Family::ws: return "ws";
    case Family::sbm: return "sbm";
  }
  return "?";
}

void validate_spec(const GenSpec& spec) {
  if (spec.count == 0) throw ValidationError("count must be positive");
  if (spec.n_min < 1 || spec.n_min > spec.n_max) {
    throw ValidationError("invalid node range [" + std::to_string(spec.n_min) + ", " +
                          std::to_string(spec.n_max) + "]");
  }
  const auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(what) + " must lie in [0,1]");
  };
  static const std::map<Family, std::set<std::string>> modes = {
      {Family::er, {"extreme"}},
      {Family::ba, {"weak", "rewire"}},
      {Family::ws, {"lattice", "random"}},
      {Family::sbm, {"flat", "inverted"}}};
  if (!spec.anomaly.empty() && !modes.at(spec.family).contains(spec.anomaly)) {
    throw ValidationError("unknown anomaly mode '" + spec.anomaly + "' for family " +
                          family_name(spec.family));
  }
  switch (spec.family) {
    case Family::er:
      if (spec.er_p) prob(*spec.er_p, "p");
      if (!(spec.beta_a > 0.0 && spec.beta_b > 0.0)) {
        throw ValidationError("Beta parameters must be positive");
      }
      break;
    case Family::ba:
      if (spec.ba_m < 1 || spec.ba_m >= spec.n_min) {
        throw ValidationError("BA attachment m must satisfy 1 <= m < n_min");
      }
      break;
    case Family::ws:
      if (spec.ws_k % 2 != 0 || spec.ws_k == 0 || spec.ws_k >= spec.n_min) {
        throw ValidationError("WS ring degree k must be even, positive and below n_min");
      }
      prob(spec.ws_p, "rewire probability");
      break;
    case Family::sbm:
      if (spec.sbm_c < 1) throw ValidationError("SBM needs at least one community");
      for (const Interval* iv : {&spec.sbm_p_in, &spec.sbm_p_out}) {
        prob(iv->lo, "SBM probability");
        prob(iv->hi, "SBM probability");
        if (iv->lo > iv->hi) throw ValidationError("SBM probability range is reversed");
      }
      break;
  }
}

Matrix er_adjacency(std::size_t n, double p, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng, p)) a(i, j) = a(j, i) = 1.0;
  return a;
}

Matrix ba_adjacency(std::size_t n, std::size_t m, Rng& rng) {
  if (m < 1 || m >= n) throw ValidationError("BA attachment m must satisfy 1 <= m < n");
  Matrix a(n, n);
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      a(i, j) = a(j, i) = 1.0;
      deg[i] += 1.0;
      deg[j] += 1.0;
    }
  std::vector<std::size_t> targets;
  for (std::size_t v = m; v < n; ++v) {
    targets.clear();
    const double total = std::accumulate(deg.begin(), deg.begin() + v, 0.0);
    while (targets.size() < m) {
      std::size_t t = 0;
      if (total == 0.0) {
        t = std::uniform_int_distribution<std::size_t>(0, v - 1)(rng);
      } else {
        double r = uniform(rng, 0.0, total);
        while (t + 1 < v && r >= deg[t]) r -= deg[t++];
      }
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
    }
    for (std::size_t t : targets) {
      a(v, t) = a(t, v) = 1.0;
      deg[t] += 1.0;
      deg[v] += 1.0;
    }
  }
  return a;
}

Matrix ws_adjacency(std::size_t n, std::size_t k, double p, Rng& rng) {
  if (k % 2 != 0 || k >= n) throw ValidationError("WS ring degree k must be even and below n");
  Matrix a(n, n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t j = 1; j <= k / 2; ++j) {
      const std::size_t v = (u + j) % n;
      a(u, v) = a(v, u) = 1.0;
    }
  for (std::size_t j = 1; j <= k / 2; ++j)
    for (std::size_t u = 0; u < n; ++u) {
      if (!coin(rng, p)) continue;
      const std::size_t v = (u + j) % n;
      std::size_t deg = 0;
      for (std::size_t w = 0; w < n; ++w) deg += a(u, w) != 0.0;
      if (deg >= n - 1) continue;
      std::size_t w;
      do {
        w = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      } while (w == u || a(u, w) != 0.0);
      a(u, v) = a(v, u) = 0.0;
      a(u, w) = a(w, u) = 1.0;
    }
  return a;
}

std::vector<std::size_t> sbm_blocks(std::size_t n, std::size_t c) {
  const std::size_t size = (n + c - 1) / c;
  std::vector<std::size_t> block(n);
  for (std::size_t i = 0; i < n; ++i) block[i] = i / size;
  return block;
}

Matrix sbm_adjacency(std::size_t n, std::size_t c, double p_in, double p_out, Rng& rng) {
  const auto block = sbm_blocks(n, c);
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng, block[i] == block[j] ? p_in : p_out)) a(i, j) = a(j, i) = 1.0;
  return a;
}

Matrix rewire_edges(const Matrix& adjacency, double fraction, Rng& rng) {
  const std::size_t n = adjacency.rows();
  auto edges = edge_list(adjacency);
  std::vector<std::pair<std::size_t, std::size_t>> free_pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adjacency(i, j) == 0.0) free_pairs.emplace_back(i, j);
  std::size_t moves = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(edges.size())));
  moves = std::min({moves, edges.size(), free_pairs.size()});
  std::shuffle(edges.begin(), edges.end(), rng);
  std::shuffle(free_pairs.begin(), free_pairs.end(), rng);
  Matrix out = adjacency;
  for (std::size_t k = 0; k < moves; ++k) {
    auto [u, v] = edges[k];
    auto [x, y] = free_pairs[k];
    out(u, v) = out(v, u) = 0.0;
    out(x, y) = out(y, x) = 1.0;
  }
  return out;
}

Generated gen_er(const GenSpec& spec) {
  return generate_each(spec, [&](Rng& rng, GraphParams& params) {
    const std::size_t n = draw_n(spec, rng);
    double p;
    if (spec.anomaly == "extreme") {
      p = coin(rng, 0.5) ? uniform(rng, 0.02, 0.12) : uniform(rng, 0.88, 0.98);
    } else {
      p = spec.er_p ? *spec.er_p : beta_draw(rng, spec.beta_a, spec.beta_b);
    }
    params["p"] = p;
    return with_features(er_adjacency(n, p, rng), false);
  });
}

Generated gen_ba(const GenSpec& spec) {
  return generate_each(spec, [&](Rng& rng, GraphParams& params) {
    const std::size_t n = draw_n(spec, rng);
    const std::size_t m = spec.anomaly == "weak" ? 1 : spec.ba_m;
    params["m"] = static_cast<double>(m);
    Matrix a = ba_adjacency(n, m, rng);
    if (spec.anomaly == "rewire") {
      a = rewire_edges(a, 0.3, rng);
      params["rewired_fraction"] = 0.3;
    }
    return with_features(std::move(a), true);
  });
}

Generated gen_ws(const GenSpec& spec) {
  return generate_each(spec, [&](Rng& rng, GraphParams& params) {
    const std::size_t n = draw_n(spec, rng);
    double p = spec.ws_p;
    if (spec.anomaly == "lattice") p = uniform(rng, 0.0, 0.05);
    if (spec.anomaly == "random") p = uniform(rng, 0.8, 1.0);
    params["k"] = static_cast<double>(spec.ws_k);
    params["p"] = p;
    return with_features(ws_adjacency(n, spec.ws_k, p, rng), true);
  });
}

Generated gen_sbm(const GenSpec& spec) {
  return generate_each(spec, [&](Rng& rng, GraphParams& params) {
    const std::size_t n = draw_n(spec, rng);
    double p_in, p_out;
    if (spec.anomaly == "flat") {
      p_in = p_out = uniform(rng, 0.15, 0.35);
    } else if (spec.anomaly == "inverted") {
      p_in = uniform(rng, spec.sbm_p_out.lo, spec.sbm_p_out.hi);
      p_out = uniform(rng, spec.sbm_p_in.lo, spec.sbm_p_in.hi);
    } else {
      p_in = uniform(rng, spec.sbm_p_in.lo, spec.sbm_p_in.hi);
      p_out = uniform(rng, spec.sbm_p_out.lo, spec.sbm_p_out.hi);
    }
    params["c"] = static_cast<double>(spec.sbm_c);
    params["p_in"] = p_in;
    params["p_out"] = p_out;
    return with_features(sbm_adjacency(n, spec.sbm_c, p_in, p_out, rng), true);
  });
}

Generated generate(const GenSpec& spec) {
  switch (spec.family) {
    case Family::er: return gen_er(spec);
    case Family::ba: return gen_ba(spec);
    case Family::ws: return gen_ws(spec);
    case Family::sbm: return gen_sbm(spec);
  }
  throw ValidationError("unknown family");
}

void write_sidecar(const std::filesystem::path& path, const GenSpec& spec, const Generated& g) {
  nlohmann::ordered_json doc;
  doc["family"] = family_name(spec.family);
  doc["anomaly"] = spec.anomaly.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(spec.anomaly);
  doc["seed"] = spec.seed;
  doc["count"] = spec.count;
  doc["node_range"] = {spec.n_min, spec.n_max};
  auto graphs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.graphs.size(); ++i) {
    nlohmann::ordered_json entry;
    entry["id"] = g.graphs[i].id;
    for (const auto& [k, v] : g.params[i]) entry[k] = v;
    graphs.push_back(std::move(entry));
  }
  doc["graphs"] = std::move(graphs);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sidecar " + path.string());
  out << doc.dump(2) << '\n';
}

bool is_connected(const Matrix& adjacency) {
  if (adjacency.rows() == 0) return true;
  const auto d = bfs_distances(adjacency, 0);
  return std::none_of(d.begin(), d.end(), [](std::size_t x) { return x == SIZE_MAX; });
}

double average_clustering(const Matrix& adjacency) {
  const auto c = local_clustering(adjacency);
  if (c.empty()) return 0.0;
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

double average_path_length_lcc(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  if (n < 2) return 0.0;
  const auto comp = components(adjacency);
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t c : comp) ++sizes[c];
  std::size_t best = 0, best_size = 0;
  for (const auto& [c, s] : sizes)
    if (s > best_size) {
      best = c;
      best_size = s;
    }
  if (best_size < 2) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != best) continue;
    const auto d = bfs_distances(adjacency, s);
    for (std::size_t v = 0; v < n; ++v)
      if (v != s && comp[v] == best) total += static_cast<double>(d[v]);
  }
  return total / static_cast<double>(best_size * (best_size - 1));
}

double modularity(const Matrix& adjacency, const std::vector<std::size_t>& community) {
  const std::size_t n = adjacency.rows();
  if (community.size() != n) throw DimensionError("community vector length mismatch");
  const double m = static_cast<double>(edge_count(adjacency));
  if (m == 0.0) return 0.0;
  std::map<std::size_t, double> inside, degree;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (adjacency(i, j) != 0.0) {
        degree[community[i]] += 1.0;
        if (community[i] == community[j]) inside[community[i]] += 0.5;
      }
  double q = 0.0;
  for (const auto& [c, d] : degree) {
    const double frac = d / (2.0 * m);
    q += inside[c] / m - frac * frac;
  }
  return q;
}

std::vector<std::size_t> detect_communities(const Matrix& adjacency, std::size_t restarts,
                                            std::uint64_t seed) {
  const std::size_t n = adjacency.rows();
  std::vector<std::size_t> best(n, 0);
  const double m = static_cast<double>(edge_count(adjacency));
  if (n == 0 || m == 0.0) {
    std::iota(best.begin(), best.end(), 0);
    return relabel(best);
  }
  double best_q = -1.0;
  std::vector<std::size_t> order(n), label(n);
  std::vector<double> votes(n);
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng = make_rng(seed, r);
    std::iota(label.begin(), label.end(), 0);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
      std::shuffle(order.begin(), order.end(), rng);
      bool changed = false;
      for (std::size_t u : order) {
        std::fill(votes.begin(), votes.end(), 0.0);
        bool any = false;
        for (std::size_t v = 0; v < n; ++v)
          if (adjacency(u, v) != 0.0) {
            votes[label[v]] += 1.0;
            any = true;
          }
        if (!any) continue;
        const double top = *std::max_element(votes.begin(), votes.end());
        if (votes[label[u]] == top) continue;
        std::vector<std::size_t> ties;
        for (std::size_t l = 0; l < n; ++l)
          if (votes[l] == top) ties.push_back(l);
        label[u] = ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
        changed = true;
      }
      if (!changed) break;
    }
    std::vector<std::size_t> comm = label;
    merge_communities(adjacency, comm, m);
    const double q = modularity(adjacency, comm);
    if (q > best_q + 1e-12) {
      best_q = q;
      best = comm;
    }
  }
  return relabel(best);
}

double beta_pdf(double x, double a, double b) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  if ((x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0)) return INFINITY;
  if ((x == 0.0 && a > 1.0) || (x == 1.0 && b > 1.0)) return 0.0;
  const double lx = a == 1.0 ? 0.0 : (a - 1.0) * std::log(x);
  const double ly = b == 1.0 ? 0.0 : (b - 1.0) * std::log1p(-x);
  return std::exp(log_norm + lx + ly);
}

double ws_score(double clustering, double path_length, std::size_t n) {
  const double c_star = 0.5;
  const double l_star = std::log(static_cast<double>(n)) / std::log(4.0);
  const double s_c = 1.0 / (1.0 + 10.0 * (clustering - c_star) * (clustering - c_star));
  const double s_l = 1.0 / (1.0 + 0.1 * (path_length - l_star) * (path_length - l_star));
  return 0.5 * (s_c + s_l);
}

double target_density(Family family, const Graph& g, const TargetParams& params) {
  const Matrix& a = g.adjacency;
  const std::size_t n = g.num_nodes();
  const std::size_t e = edge_count(a);
  if (e == 0) {
    spdlog::warn("target density of edgeless graph '{}' set to 0", g.id);
    return 0.0;
  }
  switch (family) {
    case Family::er: {
      const double density = static_cast<double>(e) / (0.5 * static_cast<double>(n * (n - 1)));
      return beta_pdf(density, params.beta_a, params.beta_b);
    }
    case Family::ba: {
      const auto deg = degrees(a);
      const std::size_t m = std::max<std::size_t>(params.ba_m, 1);
      std::vector<double> q(n, 0.0), p(n, 0.0);
      double z = 0.0;
      for (std::size_t k = m; k < n; ++k) z += std::pow(static_cast<double>(k), -3.0);
      for (std::size_t k = m; k < n; ++k) q[k] = std::pow(static_cast<double>(k), -3.0) / z;
      for (std::size_t d : deg) p[d] += 1.0 / static_cast<double>(n);
      double kl = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (p[k] > 0.0) kl += p[k] * std::log((p[k] + 1e-12) / (q[k] + 1e-12));
      return 1.0 / (1.0 + std::max(kl, 0.0));
    }
    case Family::ws:
      return ws_score(average_clustering(a), average_path_length_lcc(a), n);
    case Family::sbm: {
      const auto comm = detect_communities(a);
      const double q = modularity(a, comm);
      // Isolated nodes are not counted as communities.
      std::map<std::size_t, std::size_t> sizes;
      for (std::size_t l : comm) ++sizes[l];
      const double c = static_cast<double>(
          std::count_if(sizes.begin(), sizes.end(), [](const auto& kv) { return kv.second > 1; }));
      return std::max(0.0, q) / (1.0 + 0.3 * std::abs(c - 3.0));
    }
  }
  return 0.0;
}

}  // namespace lgkde
