#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"
#include "sleepsim/primitives.hpp"

namespace sleepsim {

// Terminal-palette factor of the iterated color reduction: starting from any
// palette, reduction_fixpoint(m, D) <= kPaletteFactor * D * D. Pinned once;
// changing it invalidates recorded bounds.
inline constexpr std::int64_t kPaletteFactor = 9;

// ---------------------------------------------------------------------------
// Clusterings.
//
// A uniquely-labeled clustering partitions the nodes into connected label
// classes, each with exactly one root (delta = 0) and delta equal to the BFS
// distance from the root inside the class's induced subgraph.
//
// A colored clustering relaxes label uniqueness: every connected component of
// a color class must satisfy the same root/distance conditions, so clusters
// sharing a color are never adjacent.
// ---------------------------------------------------------------------------
struct UniquelyLabeledClustering {
  std::vector<NodeId> label;        // by node index, >= 1
  std::vector<std::int64_t> delta;  // by node index, >= 0

  Message to_json(const Graph& g) const;  // id -> {"label", "delta"}
  static UniquelyLabeledClustering from_json(const Graph& g, const Message& j);
};

struct ColoredClustering {
  std::vector<std::uint64_t> color;  // by node index, >= 1
  std::vector<std::int64_t> delta;   // by node index, >= 0

  Message to_json(const Graph& g) const;  // id -> {"color", "delta"}
  static ColoredClustering from_json(const Graph& g, const Message& j);
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;

  Message to_json() const;  // {"ok": bool, "violations": [...]}
};

ValidationReport validate_uniquely_labeled(const Graph& g,
                                           const UniquelyLabeledClustering& c);
ValidationReport validate_colored(const Graph& g, const ColoredClustering& c);

// ---------------------------------------------------------------------------
// Virtual graph: one vertex per cluster, adjacent when some concrete edge
// joins the two clusters. Vertex ids are cluster labels (uniquely-labeled) or
// cluster root ids (colored). Throws std::runtime_error on an invalid
// clustering.
// ---------------------------------------------------------------------------
struct VirtualGraph {
  Graph graph;
  std::vector<std::vector<NodeId>> back_map;  // by virtual index, sorted ids
  std::vector<NodeId> root_of;                // by virtual index
  std::vector<NodeIndex> cluster_index;       // concrete index -> virtual index
};

VirtualGraph build_virtual_graph(const Graph& g,
                                 const UniquelyLabeledClustering& c);
VirtualGraph build_virtual_graph(const Graph& g, const ColoredClustering& c);

// ---------------------------------------------------------------------------
// Gather-scatter over rooted cluster trees.
//
// Round 1 exchanges hello messages carrying each node's tree label (plus any
// caller fields); the parent selector then fixes the tree. Payloads flow leaf
// to root along a convergecast schedule, and the pooled id-sorted list flows
// back root to leaf. Every node terminates with finish(pooled). bound must
// dominate every label; the whole protocol fits in tree_pool_span(bound)
// rounds with at most 5 awake rounds per node (3 at roots).
// ---------------------------------------------------------------------------
struct TreePoolItem {
  NodeId id = 0;
  Message payload;
};

struct TreePoolSpec {
  Round bound = 0;  // N >= every label
  // Tree label in {1..bound}, strictly larger than the parent's label.
  std::function<Round(const NodeContext&)> label;
  // Extra hello fields (json object); "label" is injected automatically.
  // Must not depend on ctx.degree: hellos are emitted by start().
  std::function<Message(const NodeContext&)> hello;
  // Parent id, or nullopt for roots. May consult the hello map (id -> hello).
  std::function<std::optional<NodeId>(const NodeContext&,
                                      const std::map<NodeId, Message>&)>
      parent;
  // This node's contribution to the pool.
  std::function<Message(const NodeContext&, const std::map<NodeId, Message>&)>
      payload;
  // Final output from the id-sorted pooled items.
  std::function<Message(const NodeContext&, const std::vector<TreePoolItem>&,
                        const std::map<NodeId, Message>&)>
      finish;
};

NodeProgram make_tree_pool_program(TreePoolSpec spec);
Round tree_pool_span(Round bound);  // 2*bound + 4

// ---------------------------------------------------------------------------
// Running a virtual-graph program on the concrete graph.
//
// Each virtual round occupies simulate_phase_rounds(n) concrete rounds. In a
// phase whose virtual node is awake, cluster members exchange buffered
// virtual messages with neighboring clusters, pool them at the root, rebroad-
// cast the pooled inbox, and advance a local replica of the virtual behavior;
// members of sleeping virtual nodes spend no awake rounds. Per-node awake
// rounds are at most 7 per active phase (so <= 7x the virtual node's awake
// count); the replica's start() must not depend on its degree, and virtual
// programs must take size bounds from their input (replica contexts carry the
// host graph's n).
//
// Node input: {"l": label, "d": delta, "h_input": per-cluster input}. The
// h_input must be identical across a cluster (error otherwise). Each node
// terminates with finish(ctx, virtual output), default the output itself.
// ---------------------------------------------------------------------------
struct SimulateConfig {
  NodeProgram h_program;
  Round h_rounds = 0;  // bound on the virtual run's termination round
  std::function<Message(const NodeContext&, const Message&)> finish;  // opt
};

Round simulate_phase_rounds(std::size_t n);          // 2n + 4
Round simulate_span(std::size_t n, Round h_rounds);  // phase_rounds * h_rounds
NodeProgram make_simulate_program(std::size_t n, SimulateConfig cfg);

std::vector<Message> simulate_inputs(const Graph& g,
                                     const UniquelyLabeledClustering& c,
                                     const std::map<NodeId, Message>& h_inputs);

// Reference run of the same virtual program directly on the virtual graph
// (inputs keyed by virtual vertex id).
RunResult run_virtual_reference(const VirtualGraph& h, const NodeProgram& p,
                                const std::map<NodeId, Message>& h_inputs,
                                const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Two-level merge.
//
// Given a uniquely-labeled clustering (l, d) of G and a uniquely-labeled
// clustering (l', d') of its virtual graph, relabels every node with
// l''(v) = l'(l(v)) and recomputes distances inside the merged clusters'
// induced subgraphs. Node input: {"l","d","lp","dp"} where lp = l'(l(v)) and
// dp = d'(l(v)). Output: {"label","dist"} (or extra_finish's result).
// Constant awake rounds per node; span merge_span(n).
// ---------------------------------------------------------------------------
using MergeFinish =
    std::function<Message(const NodeContext&, NodeId label, std::int64_t d)>;

Round merge_span(std::size_t n);
NodeProgram make_merge_program(std::size_t n, MergeFinish extra_finish = {});
std::vector<Message> merge_inputs(const Graph& g,
                                  const UniquelyLabeledClustering& first,
                                  const UniquelyLabeledClustering& second);
UniquelyLabeledClustering merge_oracle(const Graph& g,
                                       const UniquelyLabeledClustering& first,
                                       const UniquelyLabeledClustering& second);

struct MergeRun {
  UniquelyLabeledClustering clustering;
  RunResult run;
};
MergeRun run_merge_two_level(const Graph& g,
                             const UniquelyLabeledClustering& first,
                             const UniquelyLabeledClustering& second,
                             const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// One clustering phase.
//
// Computes a colored clustering in which every cluster is either a singleton
// carrying a color in {1..small_limit()} (these form a proper coloring of the
// subgraph they induce) or a tree-shaped cluster whose color is its root's id
// plus small_limit(); big-cluster roots have degree > threshold, are pairwise
// at distance >= 3, and there are at most n/threshold of them.
//
// Per-node output: {"gamma","delta","trace":{c0,c1,p1,bshift,c2,p2,root,
// rootdeg}}. No per-node input is required. ids_as_distance2 trusts node ids
// as the initial distance-2 coloring (palette id_bound) instead of running
// the square-view reduction.
// ---------------------------------------------------------------------------
struct OnestepParams {
  std::int64_t threshold = 0;   // b >= 1
  std::int64_t id_bound = 0;    // ids lie in {1..id_bound}
  std::int64_t size_bound = 0;  // vertex-count bound of the target graph
  bool ids_as_distance2 = false;

  LinialConfig square_stage() const;      // distance-2 coloring stage
  std::int64_t distance2_palette() const; // k
  LinialConfig singleton_stage() const;   // final recoloring of small nodes
  std::int64_t small_limit() const;       // kPaletteFactor * threshold^2
  Round span() const;
};

NodeProgram make_onestep_program(const OnestepParams& p);

struct OnestepRun {
  ColoredClustering clustering;
  RunResult run;
};
OnestepRun run_onestep(const Graph& g, const OnestepParams& p,
                       const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Full clustering pipeline.
//
// Runs phases of the one-step construction on successively contracted
// virtual graphs. Phase i finalizes every node whose cluster drew a small
// color c as gamma = (i-1)*small_limit() + c (keeping its current delta);
// big clusters are merged and carried into the next phase. The virtual graph
// must shrink by a factor of threshold each phase (error otherwise), so all
// nodes finalize within `phases` phases.
// ---------------------------------------------------------------------------
struct PipelineParams {
  std::size_t n = 0;
  std::int64_t id_bound = 0;   // concrete ids lie in {1..id_bound}
  int phases = 0;              // ceil(2*sqrt(log2 n)), >= 1
  std::int64_t threshold = 0;  // 2^ceil(sqrt(log2 n))
  bool ids_as_distance2 = false;

  static PipelineParams from_graph_order(std::size_t n, std::int64_t id_bound,
                                         bool ids_as_distance2);

  std::int64_t small_limit() const;
  std::int64_t phase_id_bound(int i) const;    // label bound entering phase i
  std::int64_t phase_size_bound(int i) const;  // virtual size bound, phase i
  OnestepParams phase_onestep(int i) const;    // i in {1..phases}
  Round phase_span(int i) const;
  Round span() const;
};

NodeProgram make_pipeline_program(const PipelineParams& p);

struct PipelineRun {
  ColoredClustering clustering;
  RunResult run;
  std::vector<std::size_t> phase_big_counts;  // big clusters after each phase
  std::vector<int> finalize_phase;            // by node index, 1-based
};
PipelineRun run_pipeline(const Graph& g, const PipelineParams& p,
                         const RunOptions& opts = {});

}  // namespace sleepsim
