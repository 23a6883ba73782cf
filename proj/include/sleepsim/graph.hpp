#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace sleepsim {

using NodeId = std::uint64_t;     // identifiers drawn from {1..n^s}
using NodeIndex = std::uint32_t;  // dense internal index in [0, n)

// Simple undirected graph. Nodes carry unique positive identifiers; internal
// storage is index-based with sorted adjacency lists. No self-loops, no
// parallel edges.
class Graph {
 public:
  Graph() = default;

  // ids must be distinct and positive. edges are pairs of indices into ids.
  Graph(std::vector<NodeId> ids,
        const std::vector<std::pair<NodeIndex, NodeIndex>>& edges);

  NodeIndex node_count() const { return static_cast<NodeIndex>(m_ids.size()); }
  std::size_t edge_count() const { return m_edge_count; }

  NodeId id_of(NodeIndex v) const { return m_ids[v]; }
  const std::vector<NodeId>& ids() const { return m_ids; }

  bool has_id(NodeId id) const { return m_index_of.count(id) != 0; }
  NodeIndex index_of(NodeId id) const;

  const std::vector<NodeIndex>& neighbors(NodeIndex v) const {
    return m_adj[v];
  }
  std::size_t degree(NodeIndex v) const { return m_adj[v].size(); }
  std::size_t max_degree() const;

  bool adjacent(NodeIndex u, NodeIndex v) const;

  // Undirected edges as index pairs with first < second, sorted.
  std::vector<std::pair<NodeIndex, NodeIndex>> edges() const;

  // Subgraph induced by `keep` (indices into this graph). Node ids are
  // preserved.
  Graph induced(const std::vector<NodeIndex>& keep) const;

  // BFS distances from source; unreachable nodes get -1.
  std::vector<std::int64_t> bfs_distances(NodeIndex source) const;

 private:
  std::vector<NodeId> m_ids;
  std::vector<std::vector<NodeIndex>> m_adj;
  std::unordered_map<NodeId, NodeIndex> m_index_of;
  std::size_t m_edge_count = 0;
};

enum class FamilyKind { path, cycle, star, grid, tree, gnp, regular };

FamilyKind family_from_string(const std::string& name);
std::string family_to_string(FamilyKind kind);

// Description of a generated instance. All generation is deterministic in
// (kind, params, seed).
struct GraphFamily {
  FamilyKind kind = FamilyKind::path;
  std::uint32_t n = 0;
  std::uint64_t seed = 0;
  std::uint32_t rows = 0;    // grid
  std::uint32_t cols = 0;    // grid
  double p = 0.0;            // gnp edge probability
  std::uint32_t degree = 0;  // regular
  std::uint32_t id_exponent = 1;  // ids drawn from {1..n^id_exponent}
};

Graph generate(const GraphFamily& family);

// Distance-<=2 closure: same nodes, edges between all pairs at distance 1
// or 2 in g.
Graph square(const Graph& g);

// Edge-list file format: first non-comment line "n m", then one "u v" line
// per edge using node ids. '#' starts a comment. Parse errors carry the line
// number.
Graph load_edge_list(std::istream& in);
Graph load_edge_list_file(const std::string& path);
void save_edge_list(const Graph& g, std::ostream& out);
void save_edge_list_file(const Graph& g, const std::string& path);

}  // namespace sleepsim
