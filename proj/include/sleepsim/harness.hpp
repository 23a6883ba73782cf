#pragma once

// Experiment driver behind the command-line tool: graph file I/O, run
// configuration, the four commands (cluster, solve, bench, verify), metric
// rows, and CSV output. Everything is deterministic in the config.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sleepsim/clustering.hpp"
#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"
#include "sleepsim/olocal.hpp"

namespace sleepsim {

// Iterated-log: times log2 must be applied to reach <= 1.
int log_star(double x);

// ---------------------------------------------------------------------------
// Graph file I/O. '#' starts a comment; blank lines are skipped. The first
// data line is "n m", followed by n lines each holding one distinct positive
// node id, followed by m lines "u v" naming two adjacent ids. Listing the
// ids explicitly keeps isolated vertices and arbitrary id spaces
// representable; write_edge_list emits ids in index order and edges sorted,
// so identical graphs serialize identically.
// ---------------------------------------------------------------------------
Graph read_edge_list(std::istream& in);
Graph read_edge_list_file(const std::string& path);
void write_edge_list(std::ostream& out, const Graph& g);
void write_edge_list_file(const std::string& path, const Graph& g);

// ---------------------------------------------------------------------------
// Configuration. A config plus the code version determines every output
// byte. The graph comes from a generator family or an edge-list file.
// ---------------------------------------------------------------------------
struct ExperimentConfig {
  GraphFamily family;      // used when graph_file is empty
  std::string graph_file;  // edge-list path; overrides the family
  std::string algorithm = "cluster";  // cluster | solve-coloring | solve-mis
                                      // | primitives
  std::int64_t threshold_override = 0;  // b; 0 = derive from n
  bool ids_as_distance2 = false;
  std::uint64_t event_cap = 0;  // 0 = engine default
  bool record_trace = false;
  int repetitions = 1;                 // reruns with seeds seed..seed+reps-1
  std::vector<std::uint32_t> sweep;    // bench: n values

  std::string out_clustering;  // artifact paths; empty = do not write
  std::string out_solution;
  std::string out_metrics;
  std::string out_trace;
  std::string out_csv;
  std::string out_graph;  // edge list of the (first) graph that was run

  Message to_json() const;
  static ExperimentConfig from_json(const Message& j);
};

// One CSV row per run. Header is fixed; see csv_header().
struct MetricsRow {
  std::uint32_t n = 0;
  std::uint64_t delta = 0;  // max degree
  std::string family;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::uint64_t max_awake = 0;
  double mean_awake = 0.0;
  Round max_round = 0;
  std::uint64_t distinct_colors = 0;  // distinct labels; 0 when not colored
  bool valid = false;

  static std::string csv_header();
  std::string csv_line() const;
};

std::string to_csv(const std::vector<MetricsRow>& rows);

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidationFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRoundCap = 3;

struct CommandOutcome {
  int exit_code = kExitOk;
  std::vector<MetricsRow> rows;  // one per run (bench: per sweep point)
  Message report;                // verify/validation report, when relevant
  std::string message;           // human-readable summary lines
};

// Runs the clustering pipeline, validates, writes artifacts, returns the row.
CommandOutcome cmd_cluster(const ExperimentConfig& cfg);

// Runs the end-to-end solver with the configured rule, validates, writes.
CommandOutcome cmd_solve(const ExperimentConfig& cfg);

// Sweeps n values, one row per (n, repetition); writes the CSV; the message
// reports max_awake / (sqrt(log2 n) * (log* n + 1)) per point.
CommandOutcome cmd_bench(const ExperimentConfig& cfg);

// Re-runs the validators on stored artifacts.
struct VerifyConfig {
  std::string graph_file;       // required
  std::string clustering_file;  // optional
  std::string solution_file;    // optional
};
CommandOutcome cmd_verify(const VerifyConfig& cfg);

// Effective wake-event cap: the SLEEPSIM_EVENT_CAP environment variable
// overrides the config, which overrides the engine default. Throws on an
// unparsable variable.
std::uint64_t effective_event_cap(const ExperimentConfig& cfg);

}  // namespace sleepsim
