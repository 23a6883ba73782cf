#include "sleepsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sleepsim/primitives.hpp"

namespace sleepsim {

int log_star(double x) {
  int k = 0;
  while (x > 1.0) {
    x = std::log2(x);
    ++k;
  }
  return k;
}

// ---------------------------------------------------------------------------
// Graph file I/O.
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> data_tokens(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  return tokens;
}

std::uint64_t parse_u64(const std::string& tok, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != tok.size() || tok.empty() || tok[0] == '-') {
    throw std::runtime_error(std::string("cannot parse ") + what + " '" +
                             tok + "'");
  }
  return v;
}

}  // namespace

Graph read_edge_list(std::istream& in) {
  std::vector<std::string> toks = data_tokens(in);
  std::size_t pos = 0;
  auto next = [&](const char* what) -> const std::string& {
    if (pos >= toks.size()) {
      throw std::runtime_error(std::string("graph file ended early: expected ") +
                               what);
    }
    return toks[pos++];
  };
  std::uint64_t n = parse_u64(next("node count"), "node count");
  std::uint64_t m = parse_u64(next("edge count"), "edge count");
  std::vector<NodeId> ids;
  std::map<NodeId, NodeIndex> index;
  for (std::uint64_t i = 0; i < n; ++i) {
    NodeId id = parse_u64(next("node id"), "node id");
    if (id == 0) throw std::runtime_error("node ids must be positive");
    if (!index.emplace(id, static_cast<NodeIndex>(ids.size())).second) {
      throw std::runtime_error("duplicate node id " + std::to_string(id));
    }
    ids.push_back(id);
  }
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  for (std::uint64_t e = 0; e < m; ++e) {
    NodeId u = parse_u64(next("edge endpoint"), "edge endpoint");
    NodeId w = parse_u64(next("edge endpoint"), "edge endpoint");
    auto iu = index.find(u);
    auto iw = index.find(w);
    if (iu == index.end() || iw == index.end()) {
      throw std::runtime_error("edge " + std::to_string(u) + " " +
                               std::to_string(w) +
                               " references an unlisted node id");
    }
    edges.push_back({iu->second, iw->second});
  }
  if (pos != toks.size()) {
    throw std::runtime_error("trailing tokens after the edge list");
  }
  return Graph(ids, edges);
}

Graph read_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  const auto edges = g.edges();
  out << g.node_count() << ' ' << edges.size() << '\n';
  for (NodeIndex v = 0; v < g.node_count(); ++v) out << g.id_of(v) << '\n';
  for (const auto& [a, b] : edges) {
    out << g.id_of(a) << ' ' << g.id_of(b) << '\n';
  }
}

void write_edge_list_file(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file '" + path + "'");
  write_edge_list(out, g);
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

Message ExperimentConfig::to_json() const {
  Message j = Message::object();
  j["family"] = Message{{"kind", family_to_string(family.kind)},
                        {"n", family.n},
                        {"seed", family.seed},
                        {"rows", family.rows},
                        {"cols", family.cols},
                        {"p", family.p},
                        {"degree", family.degree},
                        {"id_exponent", family.id_exponent}};
  j["graph_file"] = graph_file;
  j["algorithm"] = algorithm;
  j["threshold_override"] = threshold_override;
  j["ids_as_distance2"] = ids_as_distance2;
  j["event_cap"] = event_cap;
  j["record_trace"] = record_trace;
  j["repetitions"] = repetitions;
  j["sweep"] = sweep;
  j["out_clustering"] = out_clustering;
  j["out_solution"] = out_solution;
  j["out_metrics"] = out_metrics;
  j["out_trace"] = out_trace;
  j["out_csv"] = out_csv;
  j["out_graph"] = out_graph;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const Message& j) {
  if (!j.is_object()) throw std::runtime_error("config must be a json object");
  static const std::set<std::string> known = {
      "family",        "graph_file",   "algorithm",   "threshold_override",
      "ids_as_distance2", "event_cap", "record_trace", "repetitions",
      "sweep",         "out_clustering", "out_solution", "out_metrics",
      "out_trace",     "out_csv",       "out_graph"};
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  if (j.contains("family")) {
    const Message& f = j.at("family");
    if (!f.is_object()) throw std::runtime_error("config family must be an object");
    static const std::set<std::string> fam_known = {
        "kind", "n", "seed", "rows", "cols", "p", "degree", "id_exponent"};
    for (const auto& [key, value] : f.items()) {
      if (fam_known.count(key) == 0) {
        throw std::runtime_error("unknown config key 'family." + key + "'");
      }
    }
    if (f.contains("kind")) {
      cfg.family.kind = family_from_string(f.at("kind").get<std::string>());
    }
    if (f.contains("n")) cfg.family.n = f.at("n").get<std::uint32_t>();
    if (f.contains("seed")) cfg.family.seed = f.at("seed").get<std::uint64_t>();
    if (f.contains("rows")) cfg.family.rows = f.at("rows").get<std::uint32_t>();
    if (f.contains("cols")) cfg.family.cols = f.at("cols").get<std::uint32_t>();
    if (f.contains("p")) cfg.family.p = f.at("p").get<double>();
    if (f.contains("degree")) {
      cfg.family.degree = f.at("degree").get<std::uint32_t>();
    }
    if (f.contains("id_exponent")) {
      cfg.family.id_exponent = f.at("id_exponent").get<std::uint32_t>();
    }
  }
  if (j.contains("graph_file")) cfg.graph_file = j.at("graph_file").get<std::string>();
  if (j.contains("algorithm")) cfg.algorithm = j.at("algorithm").get<std::string>();
  if (j.contains("threshold_override")) {
    cfg.threshold_override = j.at("threshold_override").get<std::int64_t>();
  }
  if (j.contains("ids_as_distance2")) {
    cfg.ids_as_distance2 = j.at("ids_as_distance2").get<bool>();
  }
  if (j.contains("event_cap")) cfg.event_cap = j.at("event_cap").get<std::uint64_t>();
  if (j.contains("record_trace")) cfg.record_trace = j.at("record_trace").get<bool>();
  if (j.contains("repetitions")) cfg.repetitions = j.at("repetitions").get<int>();
  if (j.contains("sweep")) {
    cfg.sweep = j.at("sweep").get<std::vector<std::uint32_t>>();
  }
  if (j.contains("out_clustering")) cfg.out_clustering = j.at("out_clustering").get<std::string>();
  if (j.contains("out_solution")) cfg.out_solution = j.at("out_solution").get<std::string>();
  if (j.contains("out_metrics")) cfg.out_metrics = j.at("out_metrics").get<std::string>();
  if (j.contains("out_trace")) cfg.out_trace = j.at("out_trace").get<std::string>();
  if (j.contains("out_csv")) cfg.out_csv = j.at("out_csv").get<std::string>();
  if (j.contains("out_graph")) cfg.out_graph = j.at("out_graph").get<std::string>();
  return cfg;
}

// ---------------------------------------------------------------------------
// Metrics rows and CSV.
// ---------------------------------------------------------------------------

std::string MetricsRow::csv_header() {
  return "n,delta,family,seed,algorithm,max_awake,mean_awake,max_round,"
         "distinct_colors,valid";
}

std::string MetricsRow::csv_line() const {
  char mean[32];
  std::snprintf(mean, sizeof mean, "%.6f", mean_awake);
  std::ostringstream out;
  out << n << ',' << delta << ',' << family << ',' << seed << ','
      << algorithm << ',' << max_awake << ',' << mean << ',' << max_round
      << ',' << distinct_colors << ',' << (valid ? 1 : 0);
  return out.str();
}

std::string to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = MetricsRow::csv_header() + "\n";
  for (const MetricsRow& r : rows) out += r.csv_line() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Command plumbing.
// ---------------------------------------------------------------------------

std::uint64_t effective_event_cap(const ExperimentConfig& cfg) {
  const char* env = std::getenv("SLEEPSIM_EVENT_CAP");
  if (env != nullptr && *env != '\0') {
    return parse_u64(env, "SLEEPSIM_EVENT_CAP");
  }
  return cfg.event_cap;
}

namespace {

Graph load_graph(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.graph_file.empty()) return read_edge_list_file(cfg.graph_file);
  GraphFamily fam = cfg.family;
  fam.seed = seed;
  return generate(fam);
}

std::int64_t graph_id_bound(const Graph& g) {
  NodeId m = 1;
  for (NodeId id : g.ids()) m = std::max(m, id);
  return static_cast<std::int64_t>(m);
}

RunOptions run_options(const ExperimentConfig& cfg) {
  RunOptions opts;
  std::uint64_t cap = effective_event_cap(cfg);
  if (cap != 0) opts.event_cap = cap;
  opts.record_trace = cfg.record_trace || !cfg.out_trace.empty();
  return opts;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

Message read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Message j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot parse '" + path + "': " + e.what());
  }
  return j;
}

template <typename T>
std::uint64_t distinct_count(const std::vector<T>& values) {
  return std::set<T>(values.begin(), values.end()).size();
}

MetricsRow base_row(const ExperimentConfig& cfg, const Graph& g,
                    std::uint64_t seed) {
  MetricsRow row;
  row.n = g.node_count();
  row.delta = g.max_degree();
  row.family =
      cfg.graph_file.empty() ? family_to_string(cfg.family.kind) : "file";
  row.seed = seed;
  row.algorithm = cfg.algorithm;
  return row;
}

void fill_run_metrics(MetricsRow& row, const RunMetrics& m) {
  row.max_awake = m.max_awake;
  row.mean_awake = m.mean_awake;
  row.max_round = m.max_round;
}

void write_run_artifacts(const ExperimentConfig& cfg, const Graph& g,
                         const RunResult& run) {
  if (!cfg.out_metrics.empty()) {
    write_text_file(cfg.out_metrics, run.metrics.to_json(g).dump(2) + "\n");
  }
  if (!cfg.out_trace.empty()) {
    write_text_file(cfg.out_trace, run.trace.to_json_lines());
  }
  if (!cfg.out_graph.empty()) write_edge_list_file(cfg.out_graph, g);
}

GreedyRule rule_for(const std::string& algorithm) {
  if (algorithm == "solve-coloring") return first_fit_coloring();
  if (algorithm == "solve-mis") return greedy_mis();
  throw std::runtime_error("algorithm '" + algorithm +
                           "' is not a solve rule (use solve-coloring or "
                           "solve-mis)");
}

int repetitions_of(const ExperimentConfig& cfg) {
  if (cfg.repetitions < 1) {
    throw std::runtime_error("repetitions must be at least 1");
  }
  return cfg.repetitions;
}

// Escalate an exit code: the round-cap outranks a validation failure.
void raise_exit(int& code, int next) { code = std::max(code, next); }

// BFS forest from the smallest id in every component; the label is the BFS
// depth plus one, so children always exceed their parents.
TreeLabeling bfs_forest(const Graph& g) {
  const NodeIndex n = g.node_count();
  std::vector<NodeIndex> order(n);
  for (NodeIndex v = 0; v < n; ++v) order[v] = v;
  std::sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) {
    return g.id_of(a) < g.id_of(b);
  });
  TreeLabeling t;
  t.parent.assign(n, 0);
  t.label.assign(n, 0);
  for (NodeIndex s : order) {
    if (t.label[s] != 0) continue;
    t.label[s] = 1;
    std::queue<NodeIndex> q;
    q.push(s);
    while (!q.empty()) {
      NodeIndex u = q.front();
      q.pop();
      for (NodeIndex w : g.neighbors(u)) {
        if (t.label[w] == 0) {
          t.label[w] = t.label[u] + 1;
          t.parent[w] = g.id_of(u);
          q.push(w);
        }
      }
    }
  }
  t.bound = *std::max_element(t.label.begin(), t.label.end());
  return t;
}

// One primitives run: broadcast a payload down a BFS forest, then collect
// every node's contribution back at the roots. The row aggregates both runs.
MetricsRow run_primitives(const ExperimentConfig& cfg, const Graph& g,
                          std::uint64_t seed, const RunOptions& opts) {
  MetricsRow row = base_row(cfg, g, seed);
  TreeLabeling t = bfs_forest(g);
  t.validate(g);

  Message payload = Message{{"token", seed}};
  RunResult down = run(g, make_broadcast_program(),
                       broadcast_inputs(g, t, payload), opts);
  bool ok = true;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (down.outputs[v] != payload) ok = false;
  }

  std::vector<Message> contributions(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    contributions[v] = Message{{"from", g.id_of(v)}};
  }
  RunResult up = run(g, make_convergecast_program(),
                     convergecast_inputs(g, t, contributions), opts);
  // Every root must collect exactly its own tree, id-sorted.
  std::map<NodeId, std::vector<NodeId>> trees;
  std::vector<NodeId> root_of(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    NodeIndex r = v;
    while (t.parent[r] != 0) r = g.index_of(t.parent[r]);
    root_of[v] = g.id_of(r);
    trees[g.id_of(r)].push_back(g.id_of(v));
  }
  for (auto& [root, members] : trees) {
    std::sort(members.begin(), members.end());
  }
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (root_of[v] != g.id_of(v)) {
      if (!up.outputs[v].is_null()) ok = false;
      continue;
    }
    Message expect = Message::array();
    for (NodeId member : trees.at(g.id_of(v))) {
      expect.push_back(
          Message{{"id", member}, {"payload", Message{{"from", member}}}});
    }
    if (up.outputs[v] != expect) ok = false;
  }

  row.max_awake = std::max(down.metrics.max_awake, up.metrics.max_awake);
  row.mean_awake = std::max(down.metrics.mean_awake, up.metrics.mean_awake);
  row.max_round = std::max(down.metrics.max_round, up.metrics.max_round);
  row.distinct_colors = 0;
  row.valid = ok;
  return row;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

CommandOutcome cmd_cluster(const ExperimentConfig& cfg) {
  CommandOutcome out;
  std::ostringstream msg;
  const int reps = repetitions_of(cfg);
  for (int rep = 0; rep < reps; ++rep) {
    const std::uint64_t seed = cfg.family.seed + static_cast<std::uint64_t>(rep);
    Graph g = load_graph(cfg, seed);
    MetricsRow row = base_row(cfg, g, seed);
    row.algorithm = "cluster";
    try {
      PipelineParams params = PipelineParams::from_graph_order(
          g.node_count(), graph_id_bound(g), cfg.ids_as_distance2);
      if (cfg.threshold_override > 0) params.threshold = cfg.threshold_override;
      PipelineRun pr = run_pipeline(g, params, run_options(cfg));
      ValidationReport v = validate_colored(g, pr.clustering);
      fill_run_metrics(row, pr.run.metrics);
      row.distinct_colors = distinct_count(pr.clustering.color);
      row.valid = v.ok;
      if (rep == 0) {
        if (!cfg.out_clustering.empty()) {
          write_text_file(cfg.out_clustering,
                          pr.clustering.to_json(g).dump(2) + "\n");
        }
        write_run_artifacts(cfg, g, pr.run);
        out.report = v.to_json();
      }
      if (!v.ok) raise_exit(out.exit_code, kExitValidationFailure);
      msg << "cluster n=" << row.n << " seed=" << seed
          << " colors=" << row.distinct_colors
          << " max_awake=" << row.max_awake << " max_round=" << row.max_round
          << " valid=" << (v.ok ? "yes" : "no") << "\n";
    } catch (const EngineError& e) {
      if (!e.partial_metrics.has_value()) throw;
      raise_exit(out.exit_code, kExitRoundCap);
      fill_run_metrics(row, *e.partial_metrics);
      row.valid = false;
      msg << "cluster n=" << row.n << " seed=" << seed << " aborted: "
          << e.what() << "\n";
    }
    out.rows.push_back(row);
  }
  out.message = msg.str();
  return out;
}

CommandOutcome cmd_solve(const ExperimentConfig& cfg) {
  CommandOutcome out;
  std::ostringstream msg;
  GreedyRule rule = rule_for(cfg.algorithm);
  const int reps = repetitions_of(cfg);
  for (int rep = 0; rep < reps; ++rep) {
    const std::uint64_t seed = cfg.family.seed + static_cast<std::uint64_t>(rep);
    Graph g = load_graph(cfg, seed);
    MetricsRow row = base_row(cfg, g, seed);
    try {
      FullSolverParams params;
      params.n = g.node_count();
      params.id_bound = graph_id_bound(g);
      params.ids_as_distance2 = cfg.ids_as_distance2;
      params.rule = rule;
      params.threshold_override = cfg.threshold_override;
      SolveRun sr = run_full_solver(g, params, run_options(cfg));
      ValidationReport v = rule.validate(g, sr.outputs);
      fill_run_metrics(row, sr.run.metrics);
      if (cfg.algorithm == "solve-coloring") {
        std::vector<std::int64_t> labels(sr.outputs.size());
        for (std::size_t i = 0; i < sr.outputs.size(); ++i) {
          labels[i] = sr.outputs[i].get<std::int64_t>();
        }
        row.distinct_colors = distinct_count(labels);
      }
      row.valid = v.ok;
      if (rep == 0) {
        if (!cfg.out_solution.empty()) {
          write_text_file(cfg.out_solution,
                          solution_to_json(g, sr.outputs).dump(2) + "\n");
        }
        write_run_artifacts(cfg, g, sr.run);
        out.report = v.to_json();
      }
      if (!v.ok) raise_exit(out.exit_code, kExitValidationFailure);
      msg << cfg.algorithm << " n=" << row.n << " seed=" << seed
          << " max_awake=" << row.max_awake << " max_round=" << row.max_round
          << " valid=" << (v.ok ? "yes" : "no") << "\n";
    } catch (const EngineError& e) {
      if (!e.partial_metrics.has_value()) throw;
      raise_exit(out.exit_code, kExitRoundCap);
      fill_run_metrics(row, *e.partial_metrics);
      row.valid = false;
      msg << cfg.algorithm << " n=" << row.n << " seed=" << seed
          << " aborted: " << e.what() << "\n";
    }
    out.rows.push_back(row);
  }
  out.message = msg.str();
  return out;
}

CommandOutcome cmd_bench(const ExperimentConfig& cfg) {
  CommandOutcome out;
  const int reps = repetitions_of(cfg);
  for (std::uint32_t n : cfg.sweep) {
    for (int rep = 0; rep < reps; ++rep) {
      const std::uint64_t seed =
          cfg.family.seed + static_cast<std::uint64_t>(rep);
      ExperimentConfig point = cfg;
      point.family.n = n;
      point.family.seed = seed;
      point.graph_file.clear();
      point.repetitions = 1;
      point.out_clustering.clear();
      point.out_solution.clear();
      point.out_metrics.clear();
      point.out_trace.clear();
      point.out_csv.clear();
      point.out_graph.clear();
      CommandOutcome one;
      if (cfg.algorithm == "cluster") {
        one = cmd_cluster(point);
      } else if (cfg.algorithm == "primitives") {
        Graph g = load_graph(point, seed);
        one.rows.push_back(run_primitives(point, g, seed, run_options(point)));
        if (!one.rows.back().valid) one.exit_code = kExitValidationFailure;
      } else {
        one = cmd_solve(point);
      }
      raise_exit(out.exit_code, one.exit_code);
      out.rows.insert(out.rows.end(), one.rows.begin(), one.rows.end());
    }
  }
  std::sort(out.rows.begin(), out.rows.end(),
            [](const MetricsRow& a, const MetricsRow& b) {
              return std::tie(a.n, a.seed) < std::tie(b.n, b.seed);
            });
  std::ostringstream msg;
  for (const MetricsRow& row : out.rows) {
    double denom = row.n >= 2
                       ? std::sqrt(std::log2(static_cast<double>(row.n))) *
                             (log_star(static_cast<double>(row.n)) + 1)
                       : 1.0;
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.4f", row.max_awake / denom);
    msg << "n=" << row.n << " seed=" << row.seed << " algorithm="
        << row.algorithm << " max_awake=" << row.max_awake
        << " awake/(sqrt(log2 n)*(log* n+1))=" << ratio << "\n";
  }
  out.message = msg.str();
  if (!cfg.out_csv.empty()) write_text_file(cfg.out_csv, to_csv(out.rows));
  return out;
}

CommandOutcome cmd_verify(const VerifyConfig& cfg) {
  if (cfg.graph_file.empty()) {
    throw std::runtime_error("verify requires a graph file");
  }
  if (cfg.clustering_file.empty() && cfg.solution_file.empty()) {
    throw std::runtime_error(
        "verify requires a clustering or a solution file");
  }
  Graph g = read_edge_list_file(cfg.graph_file);
  CommandOutcome out;
  Message report = Message::object();
  bool all_ok = true;
  std::ostringstream msg;
  if (!cfg.clustering_file.empty()) {
    Message j = read_json_file(cfg.clustering_file);
    ColoredClustering c = ColoredClustering::from_json(g, j);
    ValidationReport v = validate_colored(g, c);
    report["clustering"] = v.to_json();
    all_ok = all_ok && v.ok;
    msg << "clustering: "
        << (v.ok ? std::string("ok") : v.violations.front()) << "\n";
  }
  if (!cfg.solution_file.empty()) {
    Message j = read_json_file(cfg.solution_file);
    if (!j.is_object() || j.size() != g.node_count()) {
      throw std::runtime_error("solution does not match the graph order");
    }
    std::vector<Message> outputs(g.node_count());
    bool all_bool = true;
    bool all_int = true;
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      const std::string key = std::to_string(g.id_of(v));
      if (!j.contains(key)) {
        throw std::runtime_error("solution is missing node " + key);
      }
      outputs[v] = j.at(key);
      all_bool = all_bool && outputs[v].is_boolean();
      all_int = all_int && (outputs[v].is_number_integer() ||
                            outputs[v].is_number_unsigned());
    }
    ValidationReport v;
    if (all_bool) {
      v = greedy_mis().validate(g, outputs);
    } else if (all_int) {
      v = first_fit_coloring().validate(g, outputs);
    } else {
      throw std::runtime_error(
          "solution labels must be all integers or all booleans");
    }
    report["solution"] = v.to_json();
    all_ok = all_ok && v.ok;
    msg << "solution: " << (v.ok ? std::string("ok") : v.violations.front())
        << "\n";
  }
  report["ok"] = all_ok;
  out.report = report;
  out.message = msg.str();
  out.exit_code = all_ok ? kExitOk : kExitValidationFailure;
  return out;
}

}  // namespace sleepsim
