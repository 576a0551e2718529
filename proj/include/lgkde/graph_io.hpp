#pragma once

#include <filesystem>
#include <iosfwd>

#include "lgkde/graph.hpp"

namespace lgkde {

// JSON-lines graph format, one object per line:
//   {"id": "...", "num_nodes": n, "edges": [[u, v], ...],
//    "features": [[...], ...], "label": 0}
// `id` and `label` are optional. Edges are undirected, 0-indexed,
// deduplicated and symmetrized on load; self-loops are dropped with a warning.

GraphSet read_jsonl(std::istream& in);
GraphSet load_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, const GraphSet& set);
void save_jsonl(const std::filesystem::path& path, const GraphSet& set);

/// TU benchmark directory (DS_A.txt, DS_graph_indicator.txt, optional
/// DS_node_labels.txt / DS_graph_labels.txt). Node labels become one-hot
/// features, otherwise normalized degree. The most frequent graph class is
/// mapped to label 0 and every other class to 1.
GraphSet load_tu(const std::filesystem::path& dir);

}  // namespace lgkde
