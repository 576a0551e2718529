#include "lgkde/graph_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

using nlohmann::json;

Graph parse_graph(const json& obj, std::size_t line_no) {
  if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
  if (!obj.contains("num_nodes") || !obj["num_nodes"].is_number_integer()) {
    throw ParseError("missing integer key 'num_nodes'", line_no);
  }
  const auto n_signed = obj["num_nodes"].get<long long>();
  if (n_signed <= 0) throw ParseError("num_nodes must be positive", line_no);
  const auto n = static_cast<std::size_t>(n_signed);

  std::set<std::pair<std::size_t, std::size_t>> edges;
  if (obj.contains("edges")) {
    if (!obj["edges"].is_array()) throw ParseError("'edges' must be an array", line_no);
    for (const auto& e : obj["edges"]) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer()) {
        throw ParseError("each edge must be a pair of integers", line_no);
      }
      const auto u = e[0].get<long long>(), v = e[1].get<long long>();
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n ||
          static_cast<std::size_t>(v) >= n) {
        throw ParseError("edge [" + std::to_string(u) + "," + std::to_string(v) +
                             "] out of range for " + std::to_string(n) + " nodes",
                         line_no);
      }
      if (u == v) {
        spdlog::warn("line {}: dropping self-loop on node {}", line_no, u);
        continue;
      }
      edges.emplace(std::min(u, v), std::max(u, v));
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> edge_vec(edges.begin(), edges.end());

  if (!obj.contains("features") || !obj["features"].is_array()) {
    throw ParseError("missing array key 'features'", line_no);
  }
  const auto& rows = obj["features"];
  if (rows.size() != n) {
    throw ParseError("features has " + std::to_string(rows.size()) + " rows, expected " +
                         std::to_string(n),
                     line_no);
  }
  const std::size_t d = rows[0].is_array() ? rows[0].size() : 0;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (!rows[i].is_array() || rows[i].size() != d) {
      throw ParseError("feature row " + std::to_string(i) + " has inconsistent length", line_no);
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!rows[i][j].is_number()) throw ParseError("non-numeric feature value", line_no);
      x(i, j) = rows[i][j].get<double>();
    }
  }

  Graph g;
  g.adjacency = adjacency_from_edges(n, edge_vec);
  g.features = std::move(x);
  g.id = obj.contains("id") && obj["id"].is_string() ? obj["id"].get<std::string>()
                                                      : "g" + std::to_string(line_no);
  if (obj.contains("label") && !obj["label"].is_null()) {
    if (!obj["label"].is_number_integer()) throw ParseError("label must be an integer", line_no);
    g.label = obj["label"].get<int>();
  }
  const ValidationReport report = validate(g);
  if (!report.ok()) throw ParseError(report.violations.front(), line_no);
  return g;
}

std::vector<std::vector<double>> read_numeric_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (!ss.eof()) throw ParseError("non-numeric token in " + path.filename().string(), line_no);
    if (!vals.empty()) lines.push_back(std::move(vals));
  }
  return lines;
}

}  // namespace

GraphSet read_jsonl(std::istream& in) {
  GraphSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    Graph g = parse_graph(obj, line_no);
    if (!set.empty() && g.feature_dim() != set.feature_dim) {
      throw ParseError("feature dimension " + std::to_string(g.feature_dim()) +
                           " differs from earlier graphs (" + std::to_string(set.feature_dim) +
                           ")",
                       line_no);
    }
    set.add(std::move(g));
  }
  if (set.empty()) spdlog::warn("graph file contained no graphs");
  return set;
}

GraphSet load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file " + path.string());
  return read_jsonl(in);
}

void write_jsonl(std::ostream& out, const GraphSet& set) {
  for (const Graph& g : set.graphs) {
    nlohmann::ordered_json obj;
    obj["id"] = g.id;
    obj["num_nodes"] = g.num_nodes();
    auto edges = nlohmann::ordered_json::array();
    for (auto [u, v] : edge_list(g.adjacency)) edges.push_back({u, v});
    obj["edges"] = std::move(edges);
    auto feats = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      auto row = g.features.row(i);
      feats.push_back(std::vector<double>(row.begin(), row.end()));
    }
    obj["features"] = std::move(feats);
    if (g.label) obj["label"] = *g.label;
    out << obj.dump() << '\n';
  }
}

void save_jsonl(const std::filesystem::path& path, const GraphSet& set) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file " + path.string());
  write_jsonl(out, set);
  if (!out) throw IoError("write failed for " + path.string());
}

GraphSet load_tu(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::string prefix;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 6 && name.ends_with("_A.txt")) {
      prefix = name.substr(0, name.size() - 6);
      break;
    }
  }
  if (prefix.empty()) throw IoError("no *_A.txt edge file in " + dir.string());
  const auto file = [&](const std::string& suffix) { return dir / (prefix + "_" + suffix); };
  if (!fs::exists(file("graph_indicator.txt"))) {
    throw IoError("missing " + file("graph_indicator.txt").string());
  }

  const auto indicator_rows = read_numeric_lines(file("graph_indicator.txt"));
  const std::size_t total_nodes = indicator_rows.size();
  std::vector<std::size_t> graph_of(total_nodes);
  std::size_t num_graphs = 0;
  for (std::size_t i = 0; i < total_nodes; ++i) {
    const double gid = indicator_rows[i].at(0);
    if (gid < 1) throw ValidationError("graph indicator ids must be 1-indexed");
    graph_of[i] = static_cast<std::size_t>(gid) - 1;
    if (i > 0 && graph_of[i] < graph_of[i - 1]) {
      throw ValidationError("graph indicator is not grouped by graph");
    }
    num_graphs = std::max(num_graphs, graph_of[i] + 1);
  }
  std::vector<std::size_t> first_node(num_graphs + 1, total_nodes), counts(num_graphs, 0);
  for (std::size_t i = total_nodes; i-- > 0;) first_node[graph_of[i]] = i;
  for (std::size_t g : graph_of) ++counts[g];
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (counts[g] == 0) throw ValidationError("graph " + std::to_string(g + 1) + " has no nodes");
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(num_graphs);
  const auto edge_rows = read_numeric_lines(file("A.txt"));
  for (std::size_t k = 0; k < edge_rows.size(); ++k) {
    const auto& row = edge_rows[k];
    if (row.size() < 2 || row[0] < 1 || row[1] < 1 || row[0] > static_cast<double>(total_nodes) ||
        row[1] > static_cast<double>(total_nodes)) {
      throw ParseError("edge references an unknown node", k + 1);
    }
    const auto u = static_cast<std::size_t>(row[0]) - 1, v = static_cast<std::size_t>(row[1]) - 1;
    if (graph_of[u] != graph_of[v]) {
      throw ParseError("edge joins nodes of different graphs", k + 1);
    }
    if (u == v) {
      spdlog::warn("{}: dropping self-loop on node {}", prefix, u + 1);
      continue;
    }
    const std::size_t g = graph_of[u];
    edges[g].emplace_back(u - first_node[g], v - first_node[g]);
  }

  std::vector<long long> node_labels;
  std::map<long long, std::size_t> label_index;
  if (fs::exists(file("node_labels.txt"))) {
    for (const auto& row : read_numeric_lines(file("node_labels.txt"))) {
      node_labels.push_back(static_cast<long long>(row.at(0)));
    }
    if (node_labels.size() != total_nodes) {
      throw ValidationError("node label count does not match graph indicator");
    }
    for (long long l : node_labels) label_index.emplace(l, 0);
    std::size_t k = 0;
    for (auto& [l, idx] : label_index) idx = k++;
  }

  std::vector<int> graph_labels(num_graphs, -1);
  if (fs::exists(file("graph_labels.txt"))) {
    const auto rows = read_numeric_lines(file("graph_labels.txt"));
    if (rows.size() != num_graphs) {
      throw ValidationError("graph label count does not match graph indicator");
    }
    std::map<long long, std::size_t> class_counts;
    for (const auto& r : rows) ++class_counts[static_cast<long long>(r.at(0))];
    long long majority = class_counts.begin()->first;
    for (const auto& [cls, cnt] : class_counts)
      if (cnt > class_counts[majority]) majority = cls;
    for (std::size_t g = 0; g < num_graphs; ++g) {
      graph_labels[g] = static_cast<long long>(rows[g].at(0)) == majority ? 0 : 1;
    }
  }

  GraphSet set;
  for (std::size_t g = 0; g < num_graphs; ++g) {
    Graph graph;
    graph.id = prefix + "_" + std::to_string(g + 1);
    graph.adjacency = adjacency_from_edges(counts[g], edges[g]);
    if (!label_index.empty()) {
      graph.features = Matrix(counts[g], label_index.size());
      for (std::size_t i = 0; i < counts[g]; ++i) {
        graph.features(i, label_index.at(node_labels[first_node[g] + i])) = 1.0;
      }
    } else {
      graph.features = normalized_degree_features(graph.adjacency);
    }
    if (graph_labels[g] >= 0) graph.label = graph_labels[g];
    require_valid(graph);
    set.add(std::move(graph));
  }
  return set;
}

}  // namespace lgkde
