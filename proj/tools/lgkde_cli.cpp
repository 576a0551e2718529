// lgkde command-line entry point.
//
// Exit codes: 0 success, 1 validation or usage, 2 I/O, 3 numerical failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lgkde/checkpoint.hpp"
#include "lgkde/detector.hpp"
#include "lgkde/error.hpp"
#include "lgkde/graph_io.hpp"
#include "lgkde/perturb.hpp"
#include "lgkde/synth.hpp"
#include "lgkde/synthbench.hpp"
#include "lgkde/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kNumerical = 3 };

std::string sibling(const fs::path& out, const std::string& suffix) {
  return out.string() + suffix;
}

ordered_json typed(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  if (!s.empty()) {
    std::size_t used = 0;
    try {
      const double d = std::stod(s, &used);
      if (used == s.size()) {
        if (s.find_first_of(".eE") == std::string::npos) {
          try {
            return std::stoll(s);
          } catch (const std::exception&) {
            return std::stoull(s);
          }
        }
        return d;
      }
    } catch (const std::exception&) {
    }
  }
  return s;
}

// Every option of the subcommand, with given values or captured defaults.
ordered_json resolved_config(const CLI::App& app, const CLI::App& sub,
                             std::optional<std::size_t> threads) {
  ordered_json j;
  j["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
      continue;
    }
    std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (vals.empty()) {
      const std::string def = opt->get_default_str();
      if (def.empty()) {
        j[name] = nullptr;
        continue;
      }
      if (opt->get_expected_max() > 1 && def.front() == '[') {
        std::string body = def.substr(1, def.size() - 2);
        std::size_t pos = 0;
        while (pos <= body.size()) {
          const std::size_t comma = body.find(',', pos);
          std::string item = body.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos);
          while (!item.empty() && item.front() == ' ') item.erase(item.begin());
          if (!item.empty()) vals.push_back(item);
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
      } else {
        vals.push_back(def);
      }
    }
    if (opt->get_expected_max() > 1) {
      auto arr = ordered_json::array();
      for (const auto& v : vals) arr.push_back(typed(v));
      j[name] = std::move(arr);
    } else {
      j[name] = typed(vals.front());
    }
  }
  if (threads) j["threads"] = *threads;
  (void)app;
  return j;
}

void write_config(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw lgkde::IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  spdlog::info("resolved config written to {}", path.string());
}

void apply_threads(std::optional<std::size_t> threads) {
  std::optional<std::size_t> n = threads;
  if (!n) {
    if (const char* env = std::getenv("LGKDE_THREADS")) {
      try {
        n = static_cast<std::size_t>(std::stoul(env));
      } catch (const std::exception&) {
        throw lgkde::ValidationError(std::string("LGKDE_THREADS is not a count: ") + env);
      }
    }
  }
  if (n && *n == 0) throw lgkde::ValidationError("thread count must be positive");
#ifdef _OPENMP
  if (n) omp_set_num_threads(static_cast<int>(*n));
#endif
}

lgkde::Interval to_interval(const std::vector<double>& v, const char* what) {
  if (v.size() != 2) throw lgkde::ValidationError(std::string(what) + " takes two values");
  return {v[0], v[1]};
}

// Keys of a generate spec file use the flag names.
void apply_spec_file(const fs::path& path, lgkde::GenSpec& s, std::string& family) {
  std::ifstream in(path);
  if (!in) throw lgkde::IoError("cannot open spec file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw lgkde::ParseError(std::string("invalid spec file: ") + e.what(), 0);
  }
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "family") family = v.get<std::string>();
      else if (key == "count") s.count = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "n-min") s.n_min = v.get<std::size_t>();
      else if (key == "n-max") s.n_max = v.get<std::size_t>();
      else if (key == "beta-a") s.beta_a = v.get<double>();
      else if (key == "beta-b") s.beta_b = v.get<double>();
      else if (key == "p") s.er_p = v.get<double>();
      else if (key == "m") s.ba_m = v.get<std::size_t>();
      else if (key == "k") s.ws_k = v.get<std::size_t>();
      else if (key == "rewire-p") s.ws_p = v.get<double>();
      else if (key == "communities") s.sbm_c = v.get<std::size_t>();
      else if (key == "p-in") s.sbm_p_in = to_interval(v.get<std::vector<double>>(), "p-in");
      else if (key == "p-out") s.sbm_p_out = to_interval(v.get<std::vector<double>>(), "p-out");
      else if (key == "anomaly") s.anomaly = v.get<std::string>();
      else throw lgkde::ValidationError("unknown spec key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw lgkde::ValidationError(std::string("bad spec value: ") + e.what());
  }
}

struct ModelOptions {
  lgkde::TrainConfig train;
  lgkde::GnnConfig gnn;
  std::vector<double> mmd_bandwidths{0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> kde_bandwidths{0.01, 0.1, 1.0, 10.0, 100.0};
};

void add_perturb_options(CLI::App* c, lgkde::PerturbationConfig& p) {
  c->add_option("--r-swap", p.r_swap, "fraction of node feature rows permuted");
  c->add_option("--tau1", p.tau1, "energy threshold of the high group");
  c->add_option("--tau2", p.tau2, "energy threshold of the low group");
  c->add_option("--p-pert", p.p_pert, "fraction of singular values rescaled");
  c->add_option("--r-max", p.r_max, "cap on the rescaling ratio");
  c->add_option("--n-pert", p.n_pert, "perturbed samples per graph");
}

void add_model_options(CLI::App* c, ModelOptions& m, std::optional<double>& lr_gnn,
                       std::optional<double>& lr_kde) {
  auto& t = m.train;
  c->add_option("--lr", t.lr, "base learning rate");
  c->add_option("--lr-gnn", lr_gnn, "learning rate of the encoder weights");
  c->add_option("--lr-kde", lr_kde, "learning rate of the mixture logits");
  c->add_option("--batch-size", t.batch_size);
  c->add_option("--epochs", t.max_epochs);
  c->add_option("--patience", t.patience);
  c->add_option("--clip", t.clip_norm, "global gradient norm cap");
  c->add_option("--warmup", t.warmup_epochs);
  c->add_option("--eps", t.eps, "loss denominator offset");
  c->add_option("--val-fraction", t.val_fraction);
  c->add_flag("--include-self{false}", t.leave_one_out,
              "keep each graph (and a perturbed sample's source) in its own batch reference");
  c->add_option("--hidden", m.gnn.hidden_dim);
  c->add_option("--out-dim", m.gnn.out_dim);
  c->add_option("--layers", m.gnn.layers);
  c->add_flag("--batch-norm", m.gnn.batch_norm);
  c->add_option("--dropout", m.gnn.dropout);
  c->add_flag("--final-activation", m.gnn.final_activation, "apply ReLU after the last layer");
  c->add_option("--mmd-bandwidths", m.mmd_bandwidths)->expected(1, -1);
  c->add_option("--kde-bandwidths", m.kde_bandwidths)->expected(1, -1);
  add_perturb_options(c, t.perturb);
}

void finish_model_options(ModelOptions& m, const std::optional<double>& lr_gnn,
                          const std::optional<double>& lr_kde) {
  m.train.lr_gnn = lr_gnn;
  m.train.lr_kde = lr_kde;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learnable graph kernel density estimation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::optional<std::size_t> threads;
  std::string log_level = "info";
  app.add_option("--threads", threads, "worker cap (default: LGKDE_THREADS or all cores)");
  app.add_option("--log-level", log_level)
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // generate
  auto* gen = app.add_subcommand("generate", "sample synthetic graphs");
  lgkde::GenSpec gs;
  std::string family;
  std::string spec_file;
  std::vector<double> p_in{gs.sbm_p_in.lo, gs.sbm_p_in.hi};
  std::vector<double> p_out{gs.sbm_p_out.lo, gs.sbm_p_out.hi};
  std::optional<double> er_p;
  fs::path gen_out;
  std::string sidecar;
  gen->add_option("--spec", spec_file, "JSON file keyed by flag names; flags override it");
  gen->add_option("--family", family, "er | ba | ws | sbm");
  gen->add_option("--count", gs.count);
  gen->add_option("--seed", gs.seed);
  gen->add_option("--n-min", gs.n_min);
  gen->add_option("--n-max", gs.n_max);
  gen->add_option("--beta-a", gs.beta_a);
  gen->add_option("--beta-b", gs.beta_b);
  gen->add_option("--p", er_p, "fixed ER edge probability");
  gen->add_option("--m", gs.ba_m, "BA attachment count");
  gen->add_option("--k", gs.ws_k, "WS ring degree");
  gen->add_option("--rewire-p", gs.ws_p, "WS rewiring probability");
  gen->add_option("--communities", gs.sbm_c);
  gen->add_option("--p-in", p_in)->expected(2);
  gen->add_option("--p-out", p_out)->expected(2);
  gen->add_option("--anomaly", gs.anomaly, "anomaly mode of the family");
  gen->add_option("-o,--out", gen_out, "output JSONL")->required();
  gen->add_option("--sidecar", sidecar, "parameter sidecar (default <out>.params.json)");

  // perturb
  auto* per = app.add_subcommand("perturb", "draw perturbed counterparts of graphs");
  lgkde::PerturbationConfig pc;
  fs::path per_in, per_out;
  std::string per_csv;
  per->add_option("-i,--input", per_in)->required();
  per->add_option("-o,--out", per_out)->required();
  per->add_option("--edges-csv", per_csv, "edge change ratios (default <out>.edges.csv)");
  per->add_option("--seed", pc.seed);
  add_perturb_options(per, pc);

  // train
  auto* tr = app.add_subcommand("train", "fit encoder and density model");
  ModelOptions mo;
  std::optional<double> lr_gnn, lr_kde;
  fs::path tr_data, tr_out;
  std::string tr_log, resume;
  tr->add_option("-d,--data", tr_data, "training JSONL")->required();
  tr->add_option("-o,--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "training log (default <out>.log.jsonl)");
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_option("--seed", mo.train.seed);
  add_model_options(tr, mo, lr_gnn, lr_kde);

  // score / eval share their inputs
  struct ScoreArgs {
    fs::path checkpoint, queries, reference, out;
    double percentile = 10.0;
    std::string sample = "none";
    double ratio = 0.5;
    std::uint64_t seed = 0;
    std::string densities_csv, distances_csv;
  };
  ScoreArgs sa, ea;
  const auto add_score = [](CLI::App* c, ScoreArgs& a) {
    c->add_option("-c,--checkpoint", a.checkpoint)->required();
    c->add_option("-q,--queries", a.queries)->required();
    c->add_option("-r,--reference", a.reference, "reference JSONL (training graphs)")->required();
    c->add_option("--percentile", a.percentile, "reference density percentile for the threshold");
    c->add_option("--sample", a.sample, "none | stratified | importance")
        ->check(CLI::IsMember({"none", "stratified", "importance"}));
    c->add_option("--ratio", a.ratio, "reference fraction kept by importance sampling");
    c->add_option("--seed", a.seed, "sampling seed");
    c->add_option("--densities-csv", a.densities_csv, "per-component densities");
    c->add_option("--distances-csv", a.distances_csv, "query x reference MMD distances");
  };
  auto* sc = app.add_subcommand("score", "anomaly scores for query graphs");
  add_score(sc, sa);
  sc->add_option("-o,--out", sa.out, "score CSV")->required();
  auto* ev = app.add_subcommand("eval", "scores plus detection metrics");
  add_score(ev, ea);
  ev->add_option("-o,--out", ea.out, "report JSON")->required();
  std::string ev_scores;
  ev->add_option("--scores-csv", ev_scores, "also write the score CSV");

  // synthbench
  auto* sb = app.add_subcommand("synthbench", "train and evaluate on one synthetic family");
  lgkde::SynthBenchConfig sbc;
  ModelOptions sbo;
  std::optional<double> sb_lr_gnn, sb_lr_kde;
  std::string sb_family = "er";
  fs::path sb_out;
  sb->add_option("--family", sb_family, "er | ba | ws | sbm");
  sb->add_option("--seed", sbc.seed);
  sb->add_option("--n-train", sbc.n_train);
  sb->add_option("--n-normal", sbc.n_test_normal);
  sb->add_option("--n-anomaly", sbc.n_test_anomaly);
  sb->add_option("--n-min", sbc.n_min);
  sb->add_option("--n-max", sbc.n_max);
  sb->add_option("-o,--out", sb_out, "report JSON")->required();
  add_model_options(sb, sbo, sb_lr_gnn, sb_lr_kde);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("lgkde"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    apply_threads(threads);

    if (*gen) {
      if (!spec_file.empty()) {
        // Flags given explicitly win over the spec file.
        const lgkde::GenSpec flags = gs;
        const std::string flag_family = family;
        gs = lgkde::GenSpec{};
        family.clear();
        apply_spec_file(spec_file, gs, family);
        const auto given = [&](const char* name) { return gen->get_option(name)->count() > 0; };
        if (given("--family")) family = flag_family;
        if (given("--count")) gs.count = flags.count;
        if (given("--seed")) gs.seed = flags.seed;
        if (given("--n-min")) gs.n_min = flags.n_min;
        if (given("--n-max")) gs.n_max = flags.n_max;
        if (given("--beta-a")) gs.beta_a = flags.beta_a;
        if (given("--beta-b")) gs.beta_b = flags.beta_b;
        if (given("--m")) gs.ba_m = flags.ba_m;
        if (given("--k")) gs.ws_k = flags.ws_k;
        if (given("--rewire-p")) gs.ws_p = flags.ws_p;
        if (given("--communities")) gs.sbm_c = flags.sbm_c;
        if (given("--anomaly")) gs.anomaly = flags.anomaly;
        if (given("--p-in")) gs.sbm_p_in = to_interval(p_in, "--p-in");
        if (given("--p-out")) gs.sbm_p_out = to_interval(p_out, "--p-out");
      } else {
        gs.sbm_p_in = to_interval(p_in, "--p-in");
        gs.sbm_p_out = to_interval(p_out, "--p-out");
      }
      if (er_p) gs.er_p = er_p;
      if (family.empty()) throw lgkde::ValidationError("--family is required");
      gs.family = lgkde::parse_family(family);
      const lgkde::Generated g = lgkde::generate(gs);
      lgkde::save_jsonl(gen_out, g.graphs);
      lgkde::write_sidecar(sidecar.empty() ? sibling(gen_out, ".params.json") : sidecar, gs, g);
      write_config(sibling(gen_out, ".config.json"), resolved_config(app, *gen, threads));
      spdlog::info("wrote {} graphs to {}", g.graphs.size(), gen_out.string());
    } else if (*per) {
      lgkde::validate_config(pc);
      const lgkde::GraphSet in = lgkde::load_jsonl(per_in);
      lgkde::GraphSet out;
      const fs::path csv_path = per_csv.empty() ? fs::path(sibling(per_out, ".edges.csv")) : fs::path(per_csv);
      std::ofstream csv(csv_path);
      if (!csv) throw lgkde::IoError("cannot write " + csv_path.string());
      csv << "id,sample,flag,edges_before,edges_after,edge_change_ratio\n";
      for (std::size_t i = 0; i < in.size(); ++i) {
        lgkde::Rng rng = lgkde::make_rng(pc.seed, i);
        for (std::size_t s = 0; s < pc.n_pert; ++s) {
          lgkde::EdgeFlag flag;
          lgkde::Graph p = lgkde::generate_sample(in[i], pc, rng, flag);
          p.id = in[i].id + "_p" + std::to_string(s);
          csv << in[i].id << ',' << s << ',' << (flag == lgkde::EdgeFlag::add ? "add" : "remove")
              << ',' << lgkde::edge_count(in[i].adjacency) << ','
              << lgkde::edge_count(p.adjacency) << ','
              << fmt::format("{:.17g}", lgkde::edge_change_ratio(in[i].adjacency, p.adjacency))
              << '\n';
          out.add(std::move(p));
        }
      }
      lgkde::save_jsonl(per_out, out);
      write_config(sibling(per_out, ".config.json"), resolved_config(app, *per, threads));
    } else if (*tr) {
      finish_model_options(mo, lr_gnn, lr_kde);
      lgkde::validate_config(mo.train);
      const lgkde::GraphSet data = lgkde::load_jsonl(tr_data);
      if (data.empty()) throw lgkde::ValidationError("training set is empty");
      lgkde::TrainResult r;
      if (!resume.empty()) {
        lgkde::Checkpoint ck = lgkde::load_checkpoint(resume);
        r = lgkde::train(data, mo.train, std::move(ck.model), ck.epoch);
      } else {
        mo.gnn.in_dim = data.feature_dim;
        r = lgkde::train(data, mo.train, mo.gnn, mo.mmd_bandwidths, mo.kde_bandwidths);
      }
      lgkde::save_checkpoint(tr_out, {r.model, r.last_epoch});
      const fs::path log_path = tr_log.empty() ? fs::path(sibling(tr_out, ".log.jsonl")) : fs::path(tr_log);
      lgkde::write_training_log(log_path, r.log, !resume.empty() && fs::exists(log_path));
      write_config(sibling(tr_out, ".config.json"), resolved_config(app, *tr, threads));
      spdlog::info("trained through epoch {} (best {})", r.last_epoch, r.best_epoch);
      if (r.aborted) {
        spdlog::error("training aborted: {}", r.abort_reason);
        return kNumerical;
      }
    } else if (*sc || *ev) {
      ScoreArgs& a = *sc ? sa : ea;
      CLI::App* sub = *sc ? sc : ev;
      const lgkde::Checkpoint ck = lgkde::load_checkpoint(a.checkpoint);
      const lgkde::GraphSet queries = lgkde::load_jsonl(a.queries);
      const lgkde::GraphSet reference = lgkde::load_jsonl(a.reference);
      const lgkde::ReferenceIndex ref = lgkde::build_reference(reference, ck.model);
      lgkde::SampleOptions opt{lgkde::parse_sample_mode(a.sample), a.ratio, a.seed};
      const lgkde::EvalReport rep = lgkde::evaluate(queries, ref, ck.model, a.percentile, opt);
      if (*sc) {
        lgkde::write_score_csv(a.out, rep);
      } else {
        std::ofstream out(a.out);
        if (!out) throw lgkde::IoError("cannot write " + a.out.string());
        out << lgkde::report_json(rep) << '\n';
        if (!ev_scores.empty()) lgkde::write_score_csv(ev_scores, rep);
      }
      if (!rep.notice.empty()) spdlog::warn("{}", rep.notice);
      if (!a.densities_csv.empty()) {
        std::ofstream out(a.densities_csv);
        if (!out) throw lgkde::IoError("cannot write " + a.densities_csv);
        lgkde::write_density_csv(out, rep.result.ids, rep.result.densities, ck.model.kde.bandwidths);
      }
      if (!a.distances_csv.empty()) {
        const lgkde::EmbeddingSet q = lgkde::embed(queries, ck.model.gnn, ck.model.family);
        lgkde::write_distance_csv(
            a.distances_csv,
            lgkde::distance_matrix(q, ref.embeddings, ck.model.family, false));
      }
      write_config(sibling(a.out, ".config.json"), resolved_config(app, *sub, threads));
      spdlog::info("scored {} graphs against {} references", queries.size(),
                   rep.result.references_used);
    } else if (*sb) {
      finish_model_options(sbo, sb_lr_gnn, sb_lr_kde);
      lgkde::validate_config(sbo.train);
      sbc.family = lgkde::parse_family(sb_family);
      sbc.train = sbo.train;
      sbc.gnn = sbo.gnn;
      sbc.mmd_bandwidths = sbo.mmd_bandwidths;
      sbc.kde_bandwidths = sbo.kde_bandwidths;
      const lgkde::SynthBenchReport rep = lgkde::run_synthbench(sbc);
      std::ofstream out(sb_out);
      if (!out) throw lgkde::IoError("cannot write " + sb_out.string());
      out << lgkde::synthbench_json(rep) << '\n';
      std::cout << lgkde::synthbench_table(rep);
      write_config(sibling(sb_out, ".config.json"), resolved_config(app, *sb, threads));
    }
  } catch (const lgkde::IoError& e) {
    spdlog::error("{}", e.what());
    return kIo;
  } catch (const lgkde::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  } catch (const lgkde::Error& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  }
  return kOk;
}
