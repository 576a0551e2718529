#include "lgkde/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <ostream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l == 1) {
      pos = true;
    } else if (l == 0) {
      neg = true;
    } else {
      throw ValidationError("labels must be 0 or 1");
    }
  }
  if (!pos || !neg) throw ValidationError("metric undefined: labels contain a single class");
}

// (recall, precision) at each distinct threshold, highest score first.
std::vector<std::pair<double, double>> pr_points(std::span<const double> scores,
                                                 std::span<const int> labels) {
  check_binary(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  std::vector<std::pair<double, double>> pts;
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (labels[order[k]] == 1 ? tp : fp) += 1.0;
    if (k + 1 < order.size() && scores[order[k + 1]] == scores[order[k]]) continue;
    pts.emplace_back(tp / positives, tp / (tp + fp));
  }
  return pts;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of an empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

EmbeddingSet subset(const EmbeddingSet& set, std::span<const std::size_t> idx) {
  EmbeddingSet out;
  for (std::size_t i : idx) {
    out.z.push_back(set.z[i]);
    out.self_sums.push_back(set.self_sums[i]);
    out.ids.push_back(set.ids[i]);
  }
  return out;
}

}  // namespace

ReferenceIndex build_reference(const GraphSet& reference, const Model& model) {
  if (reference.empty()) throw ValidationError("reference set is empty");
  ReferenceIndex ref;
  ref.embeddings = embed(reference, model.gnn, model.family);
  const DistanceMatrix d = distance_matrix(ref.embeddings, ref.embeddings, model.family, true);
  std::vector<std::size_t> idx(reference.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (reference.size() == 1) {
    ref.densities = {density(d.values.values(), model.kde).density};
  } else {
    const Matrix mask = leave_one_out_mask(idx, idx);
    for (const DensityResult& r : densities(d.values, model.kde, &mask)) {
      ref.densities.push_back(r.density);
    }
  }
  return ref;
}

SampleMode parse_sample_mode(const std::string& name) {
  if (name == "none" || name.empty()) return SampleMode::none;
  if (name == "stratified") return SampleMode::stratified;
  if (name == "importance") return SampleMode::importance;
  throw ValidationError("unknown sampling mode '" + name + "' (none, stratified, importance)");
}

std::vector<std::size_t> select_references(const ReferenceIndex& ref, const SampleOptions& opt) {
  Rng rng = make_rng(opt.seed, 0x73616d70ULL);
  switch (opt.mode) {
    case SampleMode::stratified: return stratified_sample(ref.densities, rng);
    case SampleMode::importance: return importance_sample(ref.densities, opt.ratio, rng);
    case SampleMode::none: break;
  }
  std::vector<std::size_t> all(ref.densities.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

ScoreResult score(const GraphSet& queries, const ReferenceIndex& ref, const Model& model,
                  const SampleOptions& opt) {
  const std::vector<std::size_t> chosen = select_references(ref, opt);
  const EmbeddingSet q = embed(queries, model.gnn, model.family);
  const DistanceMatrix d =
      opt.mode == SampleMode::none
          ? distance_matrix(q, ref.embeddings, model.family)
          : distance_matrix(q, subset(ref.embeddings, chosen), model.family);
  ScoreResult out;
  out.ids = q.ids;
  out.references_used = chosen.size();
  out.densities = densities(d.values, model.kde);
  for (const DensityResult& r : out.densities) out.scores.push_back(-r.density);
  return out;
}

double percentile_nearest_rank(std::span<const double> values, double gamma) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  if (!(gamma > 0.0 && gamma < 100.0)) throw ValidationError("percentile must lie in (0, 100)");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  auto rank = static_cast<std::size_t>(std::ceil(gamma / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

double threshold(std::span<const double> reference_densities, double gamma) {
  return -percentile_nearest_rank(reference_densities, gamma);
}

std::vector<int> classify(std::span<const double> scores, double tau) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= tau ? 1 : 0);
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  const auto rank = average_ranks(scores);
  double pos_rank = 0.0, np = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) {
      pos_rank += rank[i];
      np += 1.0;
    }
  const double nn = static_cast<double>(labels.size()) - np;
  return (pos_rank - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  double area = 0.0, prev_recall = 0.0;
  for (auto [r, p] : pr_points(scores, labels)) {
    area += (r - prev_recall) * p;
    prev_recall = r;
  }
  return area;
}

double auprc_trapezoid(std::span<const double> scores, std::span<const int> labels) {
  double area = 0.0, prev_r = 0.0, prev_p = 1.0;
  for (auto [r, p] : pr_points(scores, labels)) {
    area += (r - prev_r) * 0.5 * (p + prev_p);
    prev_r = r;
    prev_p = p;
  }
  return area;
}

double fpr95(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(labels.size()) - positives;
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (labels[order[k]] == 1 ? tp : fp) += 1.0;
    if (k + 1 < order.size() && scores[order[k + 1]] == scores[order[k]]) continue;
    if (tp / positives >= 0.95 - 1e-12) return fp / negatives;
  }
  return 1.0;
}

double density_gap(std::span<const double> normal_densities,
                   std::span<const double> anomaly_densities) {
  return mean(normal_densities) - mean(anomaly_densities);
}

double density_gap(const Model& model, const GraphSet& normals, const GraphSet& anomalies,
                   const GraphSet& reference) {
  if (normals.empty() || anomalies.empty()) throw ValidationError("density gap needs both sets");
  const ReferenceIndex ref{embed(reference, model.gnn, model.family), {}};
  const auto dens = [&](const GraphSet& s) {
    std::vector<double> out;
    const EmbeddingSet q = embed(s, model.gnn, model.family);
    for (const DensityResult& r :
         densities(distance_matrix(q, ref.embeddings, model.family).values, model.kde)) {
      out.push_back(r.density);
    }
    return out;
  };
  return density_gap(dens(normals), dens(anomalies));
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("Spearman correlation needs two equal-length samples");
  }
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

EvalReport evaluate(const GraphSet& queries, const ReferenceIndex& ref, const Model& model,
                    double percentile, const SampleOptions& opt) {
  EvalReport rep;
  rep.result = score(queries, ref, model, opt);
  rep.percentile = percentile;
  rep.tau = threshold(ref.densities, percentile);
  rep.predictions = classify(rep.result.scores, rep.tau);
  std::vector<int> labels;
  std::vector<double> normal_d, anomaly_d;
  bool all_labeled = true;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    rep.labels.push_back(queries[i].label);
    if (!queries[i].label) {
      all_labeled = false;
      continue;
    }
    labels.push_back(*queries[i].label);
    (*queries[i].label == 1 ? anomaly_d : normal_d).push_back(rep.result.densities[i].density);
  }
  if (!all_labeled || normal_d.empty() || anomaly_d.empty()) {
    rep.notice = all_labeled ? "queries contain a single class; metrics omitted"
                             : "queries are not fully labeled; metrics omitted";
    return rep;
  }
  rep.auroc = auroc(rep.result.scores, labels);
  rep.auprc = auprc(rep.result.scores, labels);
  rep.fpr95 = fpr95(rep.result.scores, labels);
  rep.density_gap = density_gap(normal_d, anomaly_d);
  return rep;
}

std::string report_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["num_queries"] = rep.result.scores.size();
  j["references_used"] = rep.result.references_used;
  j["percentile"] = rep.percentile;
  j["threshold"] = rep.tau;
  j["num_flagged"] = std::count(rep.predictions.begin(), rep.predictions.end(), 1);
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
  };
  j["auroc"] = opt(rep.auroc);
  j["auprc"] = opt(rep.auprc);
  j["fpr95"] = opt(rep.fpr95);
  j["density_gap"] = opt(rep.density_gap);
  if (!rep.notice.empty()) j["notice"] = rep.notice;
  auto graphs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.result.scores.size(); ++i) {
    nlohmann::ordered_json g;
    g["id"] = rep.result.ids[i];
    g["score"] = rep.result.scores[i];
    g["prediction"] = rep.predictions[i];
    g["label"] = rep.labels[i] ? nlohmann::ordered_json(*rep.labels[i]) : nlohmann::ordered_json();
    graphs.push_back(std::move(g));
  }
  j["graphs"] = std::move(graphs);
  return j.dump(2);
}

void write_score_csv(std::ostream& out, const EvalReport& rep) {
  out << "id,density,score,prediction,label\n";
  out.precision(17);
  for (std::size_t i = 0; i < rep.result.scores.size(); ++i) {
    out << rep.result.ids[i] << ',' << rep.result.densities[i].density << ','
        << rep.result.scores[i] << ',' << rep.predictions[i] << ',';
    if (i < rep.labels.size() && rep.labels[i]) out << *rep.labels[i];
    out << '\n';
  }
}

void write_score_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_score_csv(out, rep);
}

}  // namespace lgkde
