#include "sleepsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sleepsim/rng.hpp"

namespace sleepsim {

Graph::Graph(std::vector<NodeId> ids,
             const std::vector<std::pair<NodeIndex, NodeIndex>>& edges)
    : m_ids(std::move(ids)) {
  const NodeIndex n = static_cast<NodeIndex>(m_ids.size());
  m_adj.resize(n);
  m_index_of.reserve(n);
  for (NodeIndex v = 0; v < n; ++v) {
    if (m_ids[v] == 0) throw std::runtime_error("node ids must be positive");
    if (!m_index_of.emplace(m_ids[v], v).second) {
      throw std::runtime_error("duplicate node id " + std::to_string(m_ids[v]));
    }
  }
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw std::runtime_error("edge endpoint out of range");
    if (u == v) throw std::runtime_error("self-loops are not allowed");
    auto key = std::minmax(u, v);
    if (!seen.insert({key.first, key.second}).second) continue;
    m_adj[u].push_back(v);
    m_adj[v].push_back(u);
  }
  m_edge_count = seen.size();
  for (auto& list : m_adj) std::sort(list.begin(), list.end());
}

NodeIndex Graph::index_of(NodeId id) const {
  auto it = m_index_of.find(id);
  if (it == m_index_of.end()) {
    throw std::runtime_error("unknown node id " + std::to_string(id));
  }
  return it->second;
}

std::size_t Graph::max_degree() const {
  std::size_t best = 0;
  for (const auto& list : m_adj) best = std::max(best, list.size());
  return best;
}

bool Graph::adjacent(NodeIndex u, NodeIndex v) const {
  const auto& list = m_adj[u];
  return std::binary_search(list.begin(), list.end(), v);
}

std::vector<std::pair<NodeIndex, NodeIndex>> Graph::edges() const {
  std::vector<std::pair<NodeIndex, NodeIndex>> out;
  out.reserve(m_edge_count);
  for (NodeIndex u = 0; u < node_count(); ++u) {
    for (NodeIndex v : m_adj[u]) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

Graph Graph::induced(const std::vector<NodeIndex>& keep) const {
  std::vector<NodeId> ids;
  ids.reserve(keep.size());
  std::unordered_map<NodeIndex, NodeIndex> remap;
  remap.reserve(keep.size());
  for (NodeIndex old : keep) {
    remap.emplace(old, static_cast<NodeIndex>(ids.size()));
    ids.push_back(m_ids[old]);
  }
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  for (NodeIndex old : keep) {
    for (NodeIndex w : m_adj[old]) {
      auto it = remap.find(w);
      if (it != remap.end() && old < w) {
        edges.emplace_back(remap[old], it->second);
      }
    }
  }
  return Graph(std::move(ids), edges);
}

std::vector<std::int64_t> Graph::bfs_distances(NodeIndex source) const {
  std::vector<std::int64_t> dist(node_count(), -1);
  std::deque<NodeIndex> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    NodeIndex v = queue.front();
    queue.pop_front();
    for (NodeIndex w : m_adj[v]) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

FamilyKind family_from_string(const std::string& name) {
  if (name == "path") return FamilyKind::path;
  if (name == "cycle") return FamilyKind::cycle;
  if (name == "star") return FamilyKind::star;
  if (name == "grid") return FamilyKind::grid;
  if (name == "tree") return FamilyKind::tree;
  if (name == "gnp") return FamilyKind::gnp;
  if (name == "regular") return FamilyKind::regular;
  throw std::runtime_error("unknown graph family '" + name + "'");
}

std::string family_to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::path: return "path";
    case FamilyKind::cycle: return "cycle";
    case FamilyKind::star: return "star";
    case FamilyKind::grid: return "grid";
    case FamilyKind::tree: return "tree";
    case FamilyKind::gnp: return "gnp";
    case FamilyKind::regular: return "regular";
  }
  throw std::runtime_error("unknown graph family kind");
}

namespace {

std::vector<NodeId> make_ids(std::uint32_t n, std::uint32_t id_exponent,
                             Rng& rng) {
  if (id_exponent < 1) throw std::runtime_error("id exponent must be >= 1");
  if (id_exponent == 1) {
    // Seeded permutation of {1..n}.
    std::vector<NodeId> ids(n);
    for (std::uint32_t i = 0; i < n; ++i) ids[i] = i + 1;
    rng.shuffle(ids);
    return ids;
  }
  long double bound_ld = std::pow(static_cast<long double>(n),
                                  static_cast<long double>(id_exponent));
  if (bound_ld > 1.0e18L) throw std::runtime_error("id range too large");
  std::uint64_t bound = static_cast<std::uint64_t>(bound_ld);
  std::set<NodeId> chosen;
  while (chosen.size() < n) chosen.insert(rng.range(1, bound));
  return std::vector<NodeId>(chosen.begin(), chosen.end());
}

std::vector<std::pair<NodeIndex, NodeIndex>> regular_edges(std::uint32_t n,
                                                           std::uint32_t d,
                                                           Rng& rng) {
  if (d >= n) throw std::runtime_error("regular degree must be < n");
  if ((static_cast<std::uint64_t>(n) * d) % 2 != 0) {
    throw std::runtime_error("regular graph requires n*degree even");
  }
  // Configuration model: pair up degree stubs, retry until simple.
  std::vector<NodeIndex> stubs;
  stubs.reserve(static_cast<std::size_t>(n) * d);
  for (std::uint32_t attempt = 0; attempt < 1000; ++attempt) {
    stubs.clear();
    for (NodeIndex v = 0; v < n; ++v) {
      for (std::uint32_t i = 0; i < d; ++i) stubs.push_back(v);
    }
    rng.shuffle(stubs);
    std::set<std::pair<NodeIndex, NodeIndex>> seen;
    bool ok = true;
    for (std::size_t i = 0; i < stubs.size() && ok; i += 2) {
      NodeIndex u = stubs[i];
      NodeIndex v = stubs[i + 1];
      if (u == v) ok = false;
      auto key = std::minmax(u, v);
      if (ok && !seen.insert({key.first, key.second}).second) ok = false;
    }
    if (ok) {
      return std::vector<std::pair<NodeIndex, NodeIndex>>(seen.begin(),
                                                          seen.end());
    }
  }
  throw std::runtime_error("failed to sample a simple regular graph");
}

}  // namespace

Graph generate(const GraphFamily& family) {
  const std::uint32_t n = family.n;
  if (n == 0) throw std::runtime_error("graph order must be positive");
  Rng rng(family.seed ^ 0x5eed0000u ^ (static_cast<std::uint64_t>(family.kind) << 56));
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  switch (family.kind) {
    case FamilyKind::path:
      for (NodeIndex v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
      break;
    case FamilyKind::cycle:
      if (n < 3) throw std::runtime_error("cycle requires n >= 3");
      for (NodeIndex v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
      edges.emplace_back(n - 1, 0);
      break;
    case FamilyKind::star:
      for (NodeIndex v = 1; v < n; ++v) edges.emplace_back(0, v);
      break;
    case FamilyKind::grid: {
      std::uint32_t rows = family.rows;
      std::uint32_t cols = family.cols;
      if (rows == 0 || cols == 0) {
        // Near-square layout covering n nodes.
        rows = static_cast<std::uint32_t>(std::sqrt(static_cast<double>(n)));
        if (rows == 0) rows = 1;
        cols = (n + rows - 1) / rows;
      }
      if (static_cast<std::uint64_t>(rows) * cols < n) {
        throw std::runtime_error("grid rows*cols smaller than n");
      }
      auto at = [&](std::uint32_t r, std::uint32_t c) {
        return static_cast<std::uint64_t>(r) * cols + c;
      };
      for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
          std::uint64_t v = at(r, c);
          if (v >= n) continue;
          if (c + 1 < cols && at(r, c + 1) < n) {
            edges.emplace_back(static_cast<NodeIndex>(v),
                               static_cast<NodeIndex>(at(r, c + 1)));
          }
          if (r + 1 < rows && at(r + 1, c) < n) {
            edges.emplace_back(static_cast<NodeIndex>(v),
                               static_cast<NodeIndex>(at(r + 1, c)));
          }
        }
      }
      break;
    }
    case FamilyKind::tree:
      // Random recursive tree: each node attaches to a uniform predecessor.
      for (NodeIndex v = 1; v < n; ++v) {
        edges.emplace_back(static_cast<NodeIndex>(rng.below(v)), v);
      }
      break;
    case FamilyKind::gnp: {
      if (family.p < 0.0 || family.p > 1.0) {
        throw std::runtime_error("gnp probability must be in [0,1]");
      }
      for (NodeIndex u = 0; u < n; ++u) {
        for (NodeIndex v = u + 1; v < n; ++v) {
          if (rng.chance(family.p)) edges.emplace_back(u, v);
        }
      }
      break;
    }
    case FamilyKind::regular:
      edges = regular_edges(n, family.degree, rng);
      break;
  }
  return Graph(make_ids(n, family.id_exponent, rng), edges);
}

Graph square(const Graph& g) {
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    for (NodeIndex u : g.neighbors(v)) {
      if (v < u) seen.insert({v, u});
      for (NodeIndex w : g.neighbors(u)) {
        if (w == v) continue;
        auto key = std::minmax(v, w);
        seen.insert({key.first, key.second});
      }
    }
  }
  edges.assign(seen.begin(), seen.end());
  return Graph(g.ids(), edges);
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("edge list parse error at line " +
                           std::to_string(line_no) + ": " + why);
}

}  // namespace

Graph load_edge_list(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t n = 0, m = 0;
  bool have_header = false;
  std::vector<std::pair<NodeId, NodeId>> id_edges;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    if (!have_header) {
      if (!(fields >> n)) continue;  // blank or comment-only line
      if (!(fields >> m)) parse_fail(line_no, "expected 'n m' header");
      std::string extra;
      if (fields >> extra) parse_fail(line_no, "trailing tokens after header");
      if (n == 0) parse_fail(line_no, "graph order must be positive");
      have_header = true;
      continue;
    }
    NodeId u, v;
    if (!(fields >> u)) continue;
    if (!(fields >> v)) parse_fail(line_no, "expected 'u v' edge line");
    std::string extra;
    if (fields >> extra) parse_fail(line_no, "trailing tokens after edge");
    if (u == 0 || v == 0) parse_fail(line_no, "node ids must be positive");
    if (u == v) parse_fail(line_no, "self-loop");
    id_edges.emplace_back(u, v);
  }
  if (!have_header) throw std::runtime_error("edge list has no 'n m' header");
  if (id_edges.size() != m) {
    throw std::runtime_error("edge list declares " + std::to_string(m) +
                             " edges but contains " +
                             std::to_string(id_edges.size()));
  }
  // Ids mentioned in edges are kept; isolated nodes fill up to n with the
  // smallest unused positive ids.
  std::set<NodeId> id_set;
  for (auto [u, v] : id_edges) {
    id_set.insert(u);
    id_set.insert(v);
  }
  if (id_set.size() > n) {
    throw std::runtime_error("edge list mentions more than n distinct nodes");
  }
  NodeId candidate = 1;
  while (id_set.size() < n) {
    while (id_set.count(candidate)) ++candidate;
    id_set.insert(candidate);
  }
  std::vector<NodeId> ids(id_set.begin(), id_set.end());
  std::unordered_map<NodeId, NodeIndex> index;
  for (NodeIndex i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  edges.reserve(id_edges.size());
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  for (auto [u, v] : id_edges) {
    auto key = std::minmax(index[u], index[v]);
    if (!seen.insert({key.first, key.second}).second) {
      throw std::runtime_error("duplicate edge " + std::to_string(u) + " " +
                               std::to_string(v));
    }
    edges.emplace_back(index[u], index[v]);
  }
  return Graph(std::move(ids), edges);
}

Graph load_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_edge_list(in);
}

void save_edge_list(const Graph& g, std::ostream& out) {
  out << g.node_count() << ' ' << g.edge_count() << '\n';
  std::vector<std::pair<NodeId, NodeId>> lines;
  lines.reserve(g.edge_count());
  for (auto [u, v] : g.edges()) {
    NodeId a = g.id_of(u);
    NodeId b = g.id_of(v);
    if (a > b) std::swap(a, b);
    lines.emplace_back(a, b);
  }
  std::sort(lines.begin(), lines.end());
  for (auto [a, b] : lines) out << a << ' ' << b << '\n';
}

void save_edge_list_file(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_edge_list(g, out);
  if (!out.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace sleepsim
