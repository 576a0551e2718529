#include "lgkde/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lgkde/error.hpp"

namespace lgkde {
namespace {

using nlohmann::ordered_json;

ordered_json matrix_json(const Matrix& m) {
  ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.values().begin(), m.values().end());
  return j;
}

Matrix matrix_from(const ordered_json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  return Matrix(rows, cols, j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  const GnnConfig& c = m.gnn.config;
  ordered_json doc;
  doc["format"] = "lgkde-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["epoch"] = ckpt.epoch;
  ordered_json gnn;
  gnn["dims"] = layer_dims(c);
  gnn["batch_norm"] = c.batch_norm;
  gnn["dropout"] = c.dropout;
  gnn["final_activation"] = c.final_activation;
  gnn["bn_momentum"] = c.bn_momentum;
  gnn["bn_eps"] = c.bn_eps;
  auto weights = ordered_json::array();
  for (const Matrix& w : m.gnn.weights) weights.push_back(matrix_json(w));
  gnn["weights"] = std::move(weights);
  auto mean = ordered_json::array(), var = ordered_json::array();
  for (const Matrix& x : m.gnn.running_mean) {
    mean.push_back(std::vector<double>(x.values().begin(), x.values().end()));
  }
  for (const Matrix& x : m.gnn.running_var) {
    var.push_back(std::vector<double>(x.values().begin(), x.values().end()));
  }
  gnn["running_mean"] = std::move(mean);
  gnn["running_var"] = std::move(var);
  doc["gnn"] = std::move(gnn);
  doc["mmd"]["gammas"] = m.family.gammas;
  doc["kde"]["bandwidths"] = m.kde.bandwidths;
  doc["kde"]["logits"] = m.kde.logits;
  return doc.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw ValidationError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "lgkde-checkpoint") throw ValidationError("not an lgkde checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + doc.at("version").dump());
    }
    Checkpoint ck;
    ck.epoch = doc.value("epoch", std::size_t{0});
    const auto& g = doc.at("gnn");
    const auto dims = g.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() < 2) throw ValidationError("checkpoint dimension chain too short");
    GnnConfig& c = ck.model.gnn.config;
    c.in_dim = dims.front();
    c.out_dim = dims.back();
    c.layers = dims.size() - 1;
    c.hidden_dim = dims.size() > 2 ? dims[1] : c.hidden_dim;
    c.batch_norm = g.at("batch_norm").get<bool>();
    c.dropout = g.at("dropout").get<double>();
    c.final_activation = g.at("final_activation").get<bool>();
    c.bn_momentum = g.value("bn_momentum", c.bn_momentum);
    c.bn_eps = g.value("bn_eps", c.bn_eps);
    validate_config(c);
    for (const auto& w : g.at("weights")) ck.model.gnn.weights.push_back(matrix_from(w));
    if (ck.model.gnn.weights.size() != c.layers) throw ValidationError("weight count mismatch");
    for (std::size_t l = 0; l < c.layers; ++l) {
      const Matrix& w = ck.model.gnn.weights[l];
      if (w.rows() != dims[l] || w.cols() != dims[l + 1]) {
        throw ValidationError("weight " + std::to_string(l) + " has shape " + w.shape_string());
      }
    }
    for (const auto& x : g.at("running_mean")) {
      ck.model.gnn.running_mean.push_back(Matrix::row_vector(x.get<std::vector<double>>()));
    }
    for (const auto& x : g.at("running_var")) {
      ck.model.gnn.running_var.push_back(Matrix::row_vector(x.get<std::vector<double>>()));
    }
    if (c.batch_norm && ck.model.gnn.running_mean.size() + 1 != c.layers) {
      throw ValidationError("batch-norm statistics do not match the layer count");
    }
    ck.model.family = KernelFamily::from_gammas(doc.at("mmd").at("gammas").get<std::vector<double>>());
    ck.model.kde.bandwidths = doc.at("kde").at("bandwidths").get<std::vector<double>>();
    ck.model.kde.logits = doc.at("kde").at("logits").get<std::vector<double>>();
    ck.model.kde.validate();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace lgkde
