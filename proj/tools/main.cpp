#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sleepsim/harness.hpp"

using namespace sleepsim;

namespace {

// Flags shared by cluster, solve, and bench. Explicit flags override values
// loaded from --config.
struct CommonFlags {
  std::string config_file;
  std::string graph_file;
  std::string family = "path";
  std::uint32_t n = 16;
  std::uint64_t seed = 1;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  double p = 0.1;
  std::uint32_t degree = 3;
  std::uint32_t id_exponent = 1;
  std::int64_t threshold = 0;
  bool ids_as_distance2 = false;
  std::uint64_t event_cap = 0;
  int repetitions = 1;
  std::string out_metrics;
  std::string out_trace;
  std::string out_graph;
};

void add_common_options(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file,
                  "json experiment config; explicit flags override it");
  cmd->add_option("--graph", f.graph_file, "edge-list graph file");
  cmd->add_option("--family", f.family,
                  "generator family (path, cycle, star, grid, tree, gnp, "
                  "regular)");
  cmd->add_option("-n,--nodes", f.n, "graph order");
  cmd->add_option("--seed", f.seed, "generator seed");
  cmd->add_option("--rows", f.rows, "grid rows");
  cmd->add_option("--cols", f.cols, "grid columns");
  cmd->add_option("--p", f.p, "gnp edge probability");
  cmd->add_option("--degree", f.degree, "regular-graph degree");
  cmd->add_option("--id-exponent", f.id_exponent,
                  "ids drawn from {1..n^s} for this s");
  cmd->add_option("--threshold", f.threshold,
                  "cluster-size threshold b (0 = derive from n)");
  cmd->add_flag("--ids-as-distance2", f.ids_as_distance2,
                "seed the pipeline from raw ids instead of palette "
                "reduction");
  cmd->add_option("--event-cap", f.event_cap,
                  "abort runs after this many wake events "
                  "(SLEEPSIM_EVENT_CAP overrides)");
  cmd->add_option("--repetitions", f.repetitions,
                  "rerun with seeds seed..seed+k-1");
  cmd->add_option("--metrics", f.out_metrics, "write per-node metrics json");
  cmd->add_option("--trace", f.out_trace, "write the execution trace");
  cmd->add_option("--out-graph", f.out_graph,
                  "write the graph that was run as an edge list");
}

Message load_json(const std::string& path) {
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

ExperimentConfig build_config(const CLI::App* cmd, const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_file.empty()) {
    cfg = ExperimentConfig::from_json(load_json(f.config_file));
  }
  auto given = [cmd](const char* name) { return cmd->count(name) > 0; };
  if (given("--graph")) cfg.graph_file = f.graph_file;
  if (given("--family")) cfg.family.kind = family_from_string(f.family);
  if (given("--nodes")) cfg.family.n = f.n;
  if (given("--seed")) cfg.family.seed = f.seed;
  if (given("--rows")) cfg.family.rows = f.rows;
  if (given("--cols")) cfg.family.cols = f.cols;
  if (given("--p")) cfg.family.p = f.p;
  if (given("--degree")) cfg.family.degree = f.degree;
  if (given("--id-exponent")) cfg.family.id_exponent = f.id_exponent;
  if (given("--threshold")) cfg.threshold_override = f.threshold;
  if (given("--ids-as-distance2")) cfg.ids_as_distance2 = f.ids_as_distance2;
  if (given("--event-cap")) cfg.event_cap = f.event_cap;
  if (given("--repetitions")) cfg.repetitions = f.repetitions;
  if (given("--metrics")) cfg.out_metrics = f.out_metrics;
  if (given("--trace")) cfg.out_trace = f.out_trace;
  if (given("--out-graph")) cfg.out_graph = f.out_graph;
  if (cfg.graph_file.empty() && cfg.family.n == 0) cfg.family.n = f.n;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator and algorithm suite for the "
               "sleeping synchronous message-passing model"};
  app.require_subcommand(1);

  CommonFlags cluster_flags;
  std::string cluster_out;
  CLI::App* cluster =
      app.add_subcommand("cluster", "run the clustering pipeline");
  add_common_options(cluster, cluster_flags);
  cluster->add_option("--out", cluster_out, "write the colored clustering");

  CommonFlags solve_flags;
  std::string solve_out;
  std::string solve_rule = "coloring";
  CLI::App* solve = app.add_subcommand(
      "solve", "cluster, then label every node with a greedy rule");
  add_common_options(solve, solve_flags);
  solve->add_option("--rule", solve_rule, "labeling rule")
      ->check(CLI::IsMember({"coloring", "mis"}));
  solve->add_option("--out", solve_out, "write the solution");

  CommonFlags bench_flags;
  std::vector<std::uint32_t> bench_sweep;
  std::string bench_algorithm = "cluster";
  std::string bench_csv;
  CLI::App* bench =
      app.add_subcommand("bench", "sweep n values and emit a metrics CSV");
  add_common_options(bench, bench_flags);
  bench->add_option("--sweep", bench_sweep, "n values to sweep")
      ->delimiter(',');
  bench->add_option("--algorithm", bench_algorithm, "what to run per point")
      ->check(CLI::IsMember(
          {"cluster", "solve-coloring", "solve-mis", "primitives"}));
  bench->add_option("--csv", bench_csv,
                    "write the CSV here instead of stdout");

  VerifyConfig verify_cfg;
  CLI::App* verify = app.add_subcommand(
      "verify", "re-run the validators on stored artifacts");
  verify->add_option("--graph", verify_cfg.graph_file, "edge-list graph file")
      ->required();
  verify->add_option("--clustering", verify_cfg.clustering_file,
                     "stored colored clustering json");
  verify->add_option("--solution", verify_cfg.solution_file,
                     "stored solution json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandOutcome outcome;
    if (cluster->parsed()) {
      ExperimentConfig cfg = build_config(cluster, cluster_flags);
      cfg.algorithm = "cluster";
      if (cluster->count("--out") > 0) cfg.out_clustering = cluster_out;
      outcome = cmd_cluster(cfg);
      std::cout << outcome.message;
    } else if (solve->parsed()) {
      ExperimentConfig cfg = build_config(solve, solve_flags);
      if (solve->count("--rule") > 0 || cfg.algorithm == "cluster") {
        cfg.algorithm =
            solve_rule == "mis" ? "solve-mis" : "solve-coloring";
      }
      if (solve->count("--out") > 0) cfg.out_solution = solve_out;
      outcome = cmd_solve(cfg);
      std::cout << outcome.message;
    } else if (bench->parsed()) {
      ExperimentConfig cfg = build_config(bench, bench_flags);
      if (bench->count("--sweep") > 0) cfg.sweep = bench_sweep;
      if (bench->count("--algorithm") > 0 || cfg.algorithm.empty()) {
        cfg.algorithm = bench_algorithm;
      }
      if (bench->count("--csv") > 0) cfg.out_csv = bench_csv;
      outcome = cmd_bench(cfg);
      if (cfg.out_csv.empty()) {
        std::cerr << outcome.message;
        std::cout << to_csv(outcome.rows);
      } else {
        std::cout << outcome.message;
      }
    } else {
      outcome = cmd_verify(verify_cfg);
      std::cout << outcome.report.dump(2) << "\n";
    }
    return outcome.exit_code;
  } catch (const EngineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.partial_metrics.has_value() ? kExitRoundCap
                                         : kExitValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
