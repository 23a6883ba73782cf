#pragma once

// Solvers for greedily decomposable labeling problems. A deterministic rule
// is applied along an acyclic edge orientation: by the sequential reference
// (sinks first), by a schedule-driven program over a proper coloring, by the
// same schedule lifted to a colored clustering, or end to end on top of the
// clustering pipeline.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sleepsim/clustering.hpp"
#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"

namespace sleepsim {

// ---------------------------------------------------------------------------
// Edge orientations.
// ---------------------------------------------------------------------------

// Parallel to g.edges(); forward[i] means edges()[i] points first -> second.
struct Orientation {
  std::vector<bool> forward;
};

// Directs every edge from the higher color to the lower. Throws if two
// adjacent nodes share a color.
Orientation orientation_from_coloring(const Graph& g,
                                      const std::vector<std::uint64_t>& colors);

// Composite orientation of a colored clustering: edges between clusters point
// from the higher cluster color to the lower; edges inside a cluster point
// from the lexicographically larger (delta, id) to the smaller, so each
// cluster drains toward its root.
Orientation orientation_from_clustering(const Graph& g,
                                        const ColoredClustering& c);

// Out-neighbor lists by node index.
std::vector<std::vector<NodeIndex>> out_adjacency(const Graph& g,
                                                  const Orientation& mu);

bool is_acyclic(const Graph& g, const Orientation& mu);

// ---------------------------------------------------------------------------
// Greedy rules.
//
// A rule decides one node's label from a directed view: the focus node, the
// nodes it can reach along out-edges, those edges, per-node problem inputs
// (null when absent), and the labels of every non-focus node in the view.
// Labels are bare json values. The distributed solvers hand the rule the
// focus plus its immediate out-neighbors; the sequential reference and the
// consistency checker hand it the full reachable subgraph. Rules that read
// only the out-neighbors' labels (both bundled rules do) are indifferent.
// ---------------------------------------------------------------------------
struct RuleView {
  NodeId focus = 0;
  std::vector<NodeId> nodes;                      // focus first, then others
  std::vector<std::pair<NodeId, NodeId>> edges;   // directed u -> w
  std::map<NodeId, Message> inputs;
  std::map<NodeId, Message> outputs;              // every node except focus
};

struct GreedyRule {
  std::string name;
  std::function<Message(const RuleView&)> apply;
  std::function<bool(const Message&)> label_ok;
  std::function<ValidationReport(const Graph&, const std::vector<Message>&)>
      validate;  // whole-solution check, outputs by node index
};

GreedyRule first_fit_coloring();  // labels: integers >= 1, at most deg+1
GreedyRule greedy_mis();          // labels: true iff the node joins the set

ValidationReport is_proper_coloring(const Graph& g,
                                    const std::vector<std::uint64_t>& colors,
                                    std::uint64_t palette_bound);
ValidationReport is_mis(const Graph& g, const std::vector<bool>& in_set);

// Sequential reference: processes nodes so that everything reachable from a
// node is decided first (sinks first, ties by id) and applies the rule to the
// full reachable subgraph. Throws on a cyclic orientation or a label the rule
// rejects. inputs may be empty (all null) or one json per node index.
std::vector<Message> sequential_greedy_oracle(
    const Graph& g, const Orientation& mu, const GreedyRule& rule,
    const std::vector<Message>& inputs = {});

// Re-applies the rule at every node against the final labels over the full
// reachable subgraph; disagreements become violations naming the node.
ValidationReport check_local_consistency(const Graph& g, const Orientation& mu,
                                         const GreedyRule& rule,
                                         const std::vector<Message>& outputs,
                                         const std::vector<Message>& inputs = {});

// ---------------------------------------------------------------------------
// Solving over a proper coloring.
//
// Node input: {"color": c}, 1 <= c <= palette. Colors are exchanged in round
// one; afterwards each node wakes only at the rounds of its color's binary
// tree schedule, decides at its own leaf round with every lower-colored
// neighbor's label in hand, and re-arms the decided label so that later
// schedule rounds deliver it to still-undecided neighbors. Awake rounds:
// log2(ceil_pow2(palette)) + 2. Output: the rule's bare label.
// ---------------------------------------------------------------------------
struct ColoringSolverParams {
  std::int64_t palette = 0;
  GreedyRule rule;
};

NodeProgram make_coloring_solver_program(const ColoringSolverParams& p);
Round coloring_solver_span(std::int64_t palette);  // 2 * ceil_pow2(palette)

struct SolveRun {
  std::vector<Message> outputs;  // bare labels by node index
  RunResult run;
};

SolveRun run_coloring_solver(const Graph& g,
                             const std::vector<std::uint64_t>& colors,
                             const ColoringSolverParams& p,
                             const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Solving over a colored clustering.
//
// Node input: {"color": gamma, "delta": delta}. Each cluster pools its
// members' local structure at the root, then the contracted graph runs the
// schedule-driven solver: a cluster deciding at its color's round labels its
// members in (delta, id) order, consuming the member labels of lower-colored
// neighboring clusters, and every member finishes with its own label.
// ---------------------------------------------------------------------------
struct ClusteringSolverParams {
  std::size_t n = 0;             // host graph order (tree bound)
  std::int64_t color_bound = 0;  // bound on cluster colors
  GreedyRule rule;
};

NodeProgram make_clustering_solver_program(const ClusteringSolverParams& p);
Round clustering_solver_span(std::size_t n, std::int64_t color_bound);

SolveRun run_clustering_solver(const Graph& g, const ColoredClustering& c,
                               const ClusteringSolverParams& p,
                               const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Full solver: cluster with the multi-phase pipeline, then solve on top of
// the resulting colored clustering. Nodes take no input.
// ---------------------------------------------------------------------------
struct FullSolverParams {
  std::size_t n = 0;
  std::int64_t id_bound = 0;
  bool ids_as_distance2 = false;
  GreedyRule rule;
  std::int64_t threshold_override = 0;  // pipeline b; 0 = derive from n

  PipelineParams pipeline() const;
  std::int64_t color_bound() const;  // phases * small_limit
};

NodeProgram make_full_solver_program(const FullSolverParams& p);
Round full_solver_span(const FullSolverParams& p);

SolveRun run_full_solver(const Graph& g, const FullSolverParams& p,
                         const RunOptions& opts = {});

// Map node id (as a decimal string key) -> bare output label.
Message solution_to_json(const Graph& g, const std::vector<Message>& outputs);

}  // namespace sleepsim
