#include "sleepsim/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sleepsim {

namespace {

const Message& field(const Message& m, const char* key) {
  if (!m.is_object() || !m.contains(key)) {
    throw ProgramError(std::string("missing input field '") + key + "'");
  }
  return m.at(key);
}

std::int64_t int_field(const Message& m, const char* key) {
  const Message& v = field(m, key);
  if (!v.is_number_integer()) {
    throw ProgramError(std::string("input field '") + key +
                       "' is not an integer");
  }
  return v.get<std::int64_t>();
}

NodeId id_field(const Message& m, const char* key) {
  const Message& v = field(m, key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    throw ProgramError(std::string("input field '") + key +
                       "' is not an id");
  }
  return v.get<NodeId>();
}

// Wake exactly at `target` (> now).
Action sleep_to(Round now, Round target) {
  if (target <= now) throw ProgramError("schedule went backwards");
  if (target == now + 1) return Action::stay_awake();
  return Action::sleep(target - now - 1);
}

Message serialize_outbox(const std::vector<Outgoing>& out) {
  Message arr = Message::array();
  for (const Outgoing& o : out) arr.push_back({o.to, o.payload});
  return arr;
}

// BFS over an explicit id-level adjacency map.
std::map<NodeId, std::int64_t> bfs_ids(
    const std::map<NodeId, std::vector<NodeId>>& adj, NodeId source) {
  std::map<NodeId, std::int64_t> dist;
  if (adj.find(source) == adj.end()) return dist;
  dist[source] = 0;
  std::queue<NodeId> q;
  q.push(source);
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop();
    for (NodeId w : adj.at(u)) {
      if (dist.emplace(w, dist[u] + 1).second) q.push(w);
    }
  }
  return dist;
}

class TrivialBehavior : public NodeBehavior {
 public:
  explicit TrivialBehavior(Message out) : m_out(std::move(out)) {}
  Action on_wake(Round, const std::vector<Incoming>&,
                 std::vector<Outgoing>&) override {
    return Action::terminate(m_out);
  }

 private:
  Message m_out;
};

NodeProgram trivial_program(std::function<Message(const NodeContext&)> out) {
  return [out = std::move(out)](const NodeContext& ctx) {
    return std::make_unique<TrivialBehavior>(out(ctx));
  };
}

// Substitute the node input seen by an inner program.
NodeProgram with_input(NodeProgram inner,
                       std::function<Message(const NodeContext&)> make_input) {
  return [inner = std::move(inner),
          make_input = std::move(make_input)](const NodeContext& ctx) {
    NodeContext patched = ctx;
    patched.input = make_input(ctx);
    return inner(patched);
  };
}

// Delegates to an inner behavior, rewriting its termination output.
class RewrapBehavior : public NodeBehavior {
 public:
  RewrapBehavior(std::unique_ptr<NodeBehavior> inner,
                 std::function<Message(const Message&)> wrap)
      : m_inner(std::move(inner)), m_wrap(std::move(wrap)) {}

  std::vector<Outgoing> start() override { return m_inner->start(); }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    Action act = m_inner->on_wake(round, inbox, outbox);
    if (act.kind == Action::Kind::terminate) {
      return Action::terminate(m_wrap(act.output));
    }
    return act;
  }

 private:
  std::unique_ptr<NodeBehavior> m_inner;
  std::function<Message(const Message&)> m_wrap;
};

}  // namespace

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

Message UniquelyLabeledClustering::to_json(const Graph& g) const {
  Message out = Message::object();
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    out[std::to_string(g.id_of(v))] = {{"label", label[v]},
                                       {"delta", delta[v]}};
  }
  return out;
}

UniquelyLabeledClustering UniquelyLabeledClustering::from_json(
    const Graph& g, const Message& j) {
  UniquelyLabeledClustering c;
  c.label.resize(g.node_count());
  c.delta.resize(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    std::string key = std::to_string(g.id_of(v));
    if (!j.is_object() || !j.contains(key)) {
      throw std::runtime_error("clustering json misses node " + key);
    }
    c.label[v] = j.at(key).at("label").get<NodeId>();
    c.delta[v] = j.at(key).at("delta").get<std::int64_t>();
  }
  return c;
}

Message ColoredClustering::to_json(const Graph& g) const {
  Message out = Message::object();
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    out[std::to_string(g.id_of(v))] = {{"color", color[v]},
                                       {"delta", delta[v]}};
  }
  return out;
}

ColoredClustering ColoredClustering::from_json(const Graph& g,
                                               const Message& j) {
  ColoredClustering c;
  c.color.resize(g.node_count());
  c.delta.resize(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    std::string key = std::to_string(g.id_of(v));
    if (!j.is_object() || !j.contains(key)) {
      throw std::runtime_error("clustering json misses node " + key);
    }
    c.color[v] = j.at(key).at("color").get<std::uint64_t>();
    c.delta[v] = j.at(key).at("delta").get<std::int64_t>();
  }
  return c;
}

Message ValidationReport::to_json() const {
  return {{"ok", ok}, {"violations", violations}};
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

namespace {

// Checks one cluster: `members` must induce a connected subgraph with exactly
// one zero-delta root and BFS distances matching delta. `name` labels the
// cluster in violation messages.
void check_cluster(const Graph& g, const std::vector<NodeIndex>& members,
                   const std::vector<std::int64_t>& delta,
                   const std::string& name, ValidationReport& rep) {
  std::vector<NodeIndex> roots;
  for (NodeIndex v : members) {
    if (delta[v] < 0) {
      rep.violations.push_back(name + ": negative delta at node " +
                               std::to_string(g.id_of(v)));
    }
    if (delta[v] == 0) roots.push_back(v);
  }
  if (roots.size() != 1) {
    rep.violations.push_back(name + ": expected one root, found " +
                             std::to_string(roots.size()));
    return;
  }
  Graph sub = g.induced(members);
  std::vector<std::int64_t> dist =
      sub.bfs_distances(sub.index_of(g.id_of(roots[0])));
  for (NodeIndex v : members) {
    std::int64_t d = dist[sub.index_of(g.id_of(v))];
    if (d < 0) {
      rep.violations.push_back(name + ": node " +
                               std::to_string(g.id_of(v)) +
                               " unreachable from the root");
    } else if (d != delta[v]) {
      rep.violations.push_back(
          name + ": distance mismatch at node " + std::to_string(g.id_of(v)) +
          " (delta " + std::to_string(delta[v]) + ", BFS " +
          std::to_string(d) + ")");
    }
  }
}

}  // namespace

ValidationReport validate_uniquely_labeled(const Graph& g,
                                           const UniquelyLabeledClustering& c) {
  ValidationReport rep;
  if (c.label.size() != g.node_count() || c.delta.size() != g.node_count()) {
    rep.violations.push_back("clustering size does not match graph order");
    rep.ok = false;
    return rep;
  }
  std::map<NodeId, std::vector<NodeIndex>> classes;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (c.label[v] == 0) {
      rep.violations.push_back("label 0 at node " +
                               std::to_string(g.id_of(v)));
      continue;
    }
    classes[c.label[v]].push_back(v);
  }
  for (const auto& [label, members] : classes) {
    check_cluster(g, members, c.delta, "label " + std::to_string(label), rep);
  }
  rep.ok = rep.violations.empty();
  return rep;
}

ValidationReport validate_colored(const Graph& g, const ColoredClustering& c) {
  ValidationReport rep;
  if (c.color.size() != g.node_count() || c.delta.size() != g.node_count()) {
    rep.violations.push_back("clustering size does not match graph order");
    rep.ok = false;
    return rep;
  }
  std::map<std::uint64_t, std::vector<NodeIndex>> classes;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (c.color[v] == 0) {
      rep.violations.push_back("color 0 at node " +
                               std::to_string(g.id_of(v)));
      continue;
    }
    classes[c.color[v]].push_back(v);
  }
  for (const auto& [color, members] : classes) {
    // Split the color class into connected components of its induced
    // subgraph; each component forms one cluster.
    std::set<NodeIndex> in_class(members.begin(), members.end());
    std::set<NodeIndex> seen;
    for (NodeIndex s : members) {
      if (seen.count(s)) continue;
      std::vector<NodeIndex> comp;
      std::queue<NodeIndex> q;
      q.push(s);
      seen.insert(s);
      while (!q.empty()) {
        NodeIndex u = q.front();
        q.pop();
        comp.push_back(u);
        for (NodeIndex w : g.neighbors(u)) {
          if (in_class.count(w) && !seen.count(w)) {
            seen.insert(w);
            q.push(w);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      check_cluster(g, comp, c.delta,
                    "color " + std::to_string(color) + " component at node " +
                        std::to_string(g.id_of(comp[0])),
                    rep);
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// Virtual graph
// ---------------------------------------------------------------------------

namespace {

VirtualGraph contract(const Graph& g, const std::vector<NodeId>& cluster_id,
                      const std::map<NodeId, NodeId>& root_by_cluster) {
  std::map<NodeId, std::vector<NodeId>> members;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    members[cluster_id[v]].push_back(g.id_of(v));
  }
  std::vector<NodeId> vertex_ids;
  std::map<NodeId, NodeIndex> vindex;
  for (const auto& [cid, mem] : members) {
    vindex[cid] = static_cast<NodeIndex>(vertex_ids.size());
    vertex_ids.push_back(cid);
  }
  std::set<std::pair<NodeIndex, NodeIndex>> vedges;
  for (const auto& [u, w] : g.edges()) {
    NodeIndex a = vindex[cluster_id[u]];
    NodeIndex b = vindex[cluster_id[w]];
    if (a != b) vedges.insert({std::min(a, b), std::max(a, b)});
  }
  VirtualGraph h;
  h.graph = Graph(vertex_ids, std::vector<std::pair<NodeIndex, NodeIndex>>(
                                  vedges.begin(), vedges.end()));
  h.back_map.resize(vertex_ids.size());
  h.root_of.resize(vertex_ids.size());
  for (const auto& [cid, mem] : members) {
    std::vector<NodeId> sorted = mem;
    std::sort(sorted.begin(), sorted.end());
    h.back_map[vindex[cid]] = std::move(sorted);
    h.root_of[vindex[cid]] = root_by_cluster.at(cid);
  }
  h.cluster_index.resize(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    h.cluster_index[v] = vindex[cluster_id[v]];
  }
  return h;
}

}  // namespace

VirtualGraph build_virtual_graph(const Graph& g,
                                 const UniquelyLabeledClustering& c) {
  ValidationReport rep = validate_uniquely_labeled(g, c);
  if (!rep.ok) {
    throw std::runtime_error("invalid clustering: " + rep.violations[0]);
  }
  std::map<NodeId, NodeId> roots;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (c.delta[v] == 0) roots[c.label[v]] = g.id_of(v);
  }
  return contract(g, c.label, roots);
}

VirtualGraph build_virtual_graph(const Graph& g, const ColoredClustering& c) {
  ValidationReport rep = validate_colored(g, c);
  if (!rep.ok) {
    throw std::runtime_error("invalid clustering: " + rep.violations[0]);
  }
  // Identify each (color, component) cluster by its root's id.
  std::vector<NodeId> cluster_id(g.node_count(), 0);
  std::map<NodeId, NodeId> roots;
  std::set<NodeIndex> seen;
  for (NodeIndex s = 0; s < g.node_count(); ++s) {
    if (seen.count(s)) continue;
    std::vector<NodeIndex> comp;
    std::queue<NodeIndex> q;
    q.push(s);
    seen.insert(s);
    while (!q.empty()) {
      NodeIndex u = q.front();
      q.pop();
      comp.push_back(u);
      for (NodeIndex w : g.neighbors(u)) {
        if (c.color[w] == c.color[s] && !seen.count(w)) {
          seen.insert(w);
          q.push(w);
        }
      }
    }
    NodeId root = 0;
    for (NodeIndex v : comp) {
      if (c.delta[v] == 0) root = g.id_of(v);
    }
    for (NodeIndex v : comp) cluster_id[v] = root;
    roots[root] = root;
  }
  return contract(g, cluster_id, roots);
}

// ---------------------------------------------------------------------------
// Gather-scatter over rooted cluster trees
// ---------------------------------------------------------------------------

Round tree_pool_span(Round bound) { return 2 * bound + 4; }

namespace {

class TreePoolBehavior : public NodeBehavior {
 public:
  TreePoolBehavior(std::shared_ptr<const TreePoolSpec> spec,
                   const NodeContext& ctx)
      : m_spec(std::move(spec)), m_ctx(ctx) {
    m_label = m_spec->label(ctx);
    if (m_label < 1 || m_label > m_spec->bound) {
      throw ProgramError("tree label " + std::to_string(m_label) +
                         " outside {1.." + std::to_string(m_spec->bound) +
                         "}");
    }
  }

  std::vector<Outgoing> start() override {
    Message hello =
        m_spec->hello ? m_spec->hello(m_ctx) : Message::object();
    if (!hello.is_object()) {
      throw ProgramError("hello payload must be an object");
    }
    hello["t"] = "tph";
    hello["label"] = m_label;
    return {{kAllNeighbors, std::move(hello)}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    const Round bound = m_spec->bound;
    const Round rc = 2 + (bound - m_label);        // gather
    const Round send_back = bound + 2 + m_label;   // scatter
    if (round == 1) {
      for (const Incoming& msg : inbox) {
        if (msg.payload.is_object() && msg.payload.value("t", "") == "tph") {
          m_hellos[msg.from] = msg.payload;
        }
      }
      m_parent = m_spec->parent(m_ctx, m_hellos);
      if (m_parent) {
        auto it = m_hellos.find(*m_parent);
        if (it == m_hellos.end()) {
          throw ProgramError("selected parent " + std::to_string(*m_parent) +
                             " is not an awake neighbor");
        }
        m_parent_label = it->second.at("label").get<Round>();
        if (m_parent_label >= m_label) {
          throw ProgramError("parent label is not smaller than own label");
        }
      }
      return sleep_to(round, rc);
    }
    if (round == rc) {
      // Subtree items travel as one CBOR blob per item: relays concatenate
      // buffers instead of deep-copying JSON trees, which keeps the resident
      // and in-flight cost of large pools near the raw byte count.
      Message items = Message::array();
      for (const Incoming& msg : inbox) {
        if (msg.payload.is_object() && msg.payload.value("t", "") == "tpc") {
          for (const Message& item : msg.payload.at("items")) {
            items.push_back(item);
          }
        }
      }
      items.push_back(Message::binary(Message::to_cbor(
          Message{m_ctx.id, m_spec->payload(m_ctx, m_hellos)})));
      if (!m_parent) {
        // Root: pooling complete; broadcast the id-sorted pool as one blob.
        std::vector<Message> decoded;
        decoded.reserve(items.size());
        for (const Message& item : items) {
          decoded.push_back(Message::from_cbor(item.get_binary()));
        }
        std::sort(decoded.begin(), decoded.end(),
                  [](const Message& a, const Message& b) {
                    return a.at(0).get<NodeId>() < b.at(0).get<NodeId>();
                  });
        Message pool = Message::array();
        for (Message& item : decoded) pool.push_back(std::move(item));
        m_pool = Message::binary(Message::to_cbor(pool));
        outbox.push_back({kAllNeighbors, {{"t", "tpb"}, {"blob", m_pool}}});
        return sleep_to(round, send_back);
      }
      outbox.push_back({*m_parent, {{"t", "tpc"}, {"items", std::move(items)}}});
      return sleep_to(round, 2 + (bound - m_parent_label));
    }
    if (m_parent && round == 2 + (bound - m_parent_label)) {
      // Bundle handed upward at this round; wait for the pooled result.
      return sleep_to(round, bound + 2 + m_parent_label);
    }
    if (m_parent && round == bound + 2 + m_parent_label) {
      for (const Incoming& msg : inbox) {
        if (msg.from == *m_parent && msg.payload.is_object() &&
            msg.payload.value("t", "") == "tpb") {
          m_pool = msg.payload.at("blob");
        }
      }
      if (!m_pool.is_binary()) {
        throw ProgramError("pooled result not received from parent");
      }
      outbox.push_back({kAllNeighbors, {{"t", "tpb"}, {"blob", m_pool}}});
      return sleep_to(round, send_back);
    }
    if (round == send_back) {
      std::vector<TreePoolItem> pooled;
      for (const Message& item : Message::from_cbor(m_pool.get_binary())) {
        pooled.push_back({item.at(0).get<NodeId>(), item.at(1)});
      }
      return Action::terminate(m_spec->finish(m_ctx, pooled, m_hellos));
    }
    throw ProgramError("unexpected wake round " + std::to_string(round));
  }

 private:
  std::shared_ptr<const TreePoolSpec> m_spec;
  NodeContext m_ctx;
  Round m_label = 0;
  std::optional<NodeId> m_parent;
  Round m_parent_label = 0;
  std::map<NodeId, Message> m_hellos;
  Message m_pool;
};

}  // namespace

NodeProgram make_tree_pool_program(TreePoolSpec spec) {
  if (spec.bound < 1) throw std::runtime_error("tree pool bound must be >= 1");
  if (!spec.label || !spec.parent || !spec.payload || !spec.finish) {
    throw std::runtime_error("tree pool spec is incomplete");
  }
  auto shared = std::make_shared<const TreePoolSpec>(std::move(spec));
  return [shared](const NodeContext& ctx) {
    return std::make_unique<TreePoolBehavior>(shared, ctx);
  };
}

// ---------------------------------------------------------------------------
// Virtual-graph simulation
// ---------------------------------------------------------------------------

Round simulate_phase_rounds(std::size_t n) {
  return 2 * static_cast<Round>(n) + 4;
}

Round simulate_span(std::size_t n, Round h_rounds) {
  return simulate_phase_rounds(n) * h_rounds;
}

namespace {

struct SimulateShared {
  SimulateConfig cfg;
  std::size_t n = 0;
};

class SimulateBehavior : public NodeBehavior {
 public:
  SimulateBehavior(std::shared_ptr<const SimulateShared> s,
                   const NodeContext& ctx)
      : m_s(std::move(s)), m_ctx(ctx) {
    m_label = id_field(ctx.input, "l");
    m_delta = int_field(ctx.input, "d");
    if (m_label < 1) throw ProgramError("cluster label must be >= 1");
    const Round n = static_cast<Round>(m_s->n);
    if (m_delta < 0 || m_delta > n - 1) {
      throw ProgramError("cluster depth outside {0..n-1}");
    }
    if (ctx.input.contains("h_input")) m_hinput = ctx.input.at("h_input");
  }

  std::vector<Outgoing> start() override {
    NodeContext hctx{m_label, m_ctx.n, kUnknownDegree, m_hinput};
    std::unique_ptr<NodeBehavior> throwaway = m_s->cfg.h_program(hctx);
    if (!throwaway) throw ProgramError("virtual program returned null");
    m_initial = serialize_outbox(throwaway->start());
    return {{kAllNeighbors, exchange_message(m_initial)}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    const Round R = simulate_phase_rounds(m_s->n);
    const Round n = static_cast<Round>(m_s->n);
    const Round phase = (round - 1) / R + 1;
    const Round local = round - (phase - 1) * R;
    const Round base = (phase - 1) * R;
    const Round gather = n + 2 - m_delta;
    const Round scatter = n + 2 + m_delta;

    if (local == 1) {
      begin_phase(phase, inbox);
      return sleep_to(round, base + gather);
    }
    if (local == gather) {
      Message items = Message::array();
      for (const Incoming& msg : inbox) {
        if (msg.payload.is_object() && msg.payload.value("t", "") == "c") {
          for (const Message& item : msg.payload.at("items")) {
            items.push_back(item);
          }
        }
      }
      items.push_back(member_record(phase));
      if (m_delta == 0) {
        build_pool(phase, items);
        outbox.push_back({kAllNeighbors, m_pool});
        return sleep_to(round, base + n + 3);
      }
      outbox.push_back({m_parent, {{"t", "c"}, {"items", std::move(items)}}});
      return sleep_to(round, base + gather + 1);
    }
    if (m_delta > 0 && local == gather + 1) {
      // Bundle handed toward the root; sleep until the pool returns.
      return sleep_to(round, base + scatter);
    }
    if (m_delta > 0 && local == scatter) {
      m_pool = Message();
      for (const Incoming& msg : inbox) {
        if (msg.payload.is_object() && msg.payload.value("t", "") == "p" &&
            msg.payload.at("l").get<NodeId>() == m_label) {
          m_pool = msg.payload;
          break;
        }
      }
      if (!m_pool.is_object()) {
        throw ProgramError("pooled phase data not received");
      }
      outbox.push_back({kAllNeighbors, m_pool});
      return sleep_to(round, base + scatter + 1);
    }
    if (local == scatter + 1) {
      return advance(phase, round, outbox);
    }
    throw ProgramError("unexpected wake round " + std::to_string(round));
  }

 private:
  Message exchange_message(const Message& h_outbox) const {
    return {{"t", "x"}, {"l", m_label}, {"d", m_delta}, {"h", h_outbox}};
  }

  void begin_phase(Round phase, const std::vector<Incoming>& inbox) {
    m_boundary.clear();
    std::optional<NodeId> parent;
    for (const Incoming& msg : inbox) {
      if (!msg.payload.is_object() || msg.payload.value("t", "") != "x") {
        continue;
      }
      NodeId l = msg.payload.at("l").get<NodeId>();
      if (l == m_label) {
        if (phase == 1 && m_delta > 0 &&
            msg.payload.at("d").get<std::int64_t>() == m_delta - 1) {
          if (!parent || msg.from < *parent) parent = msg.from;
        }
        continue;
      }
      if (phase == 1) m_adjacent.insert(l);
      if (m_boundary.count(l)) continue;  // same transcript from each member
      Message payloads = Message::array();
      for (const Message& entry : msg.payload.at("h")) {
        NodeId to = entry.at(0).get<NodeId>();
        if (to == m_label || to == kAllNeighbors) {
          payloads.push_back(entry.at(1));
        }
      }
      if (!payloads.empty()) m_boundary[l] = std::move(payloads);
    }
    if (phase == 1 && m_delta > 0) {
      if (!parent) {
        throw ProgramError(
            "no same-cluster neighbor one step closer to the root");
      }
      m_parent = *parent;
    }
  }

  Message member_record(Round phase) const {
    Message rec = {{"id", m_ctx.id}, {"hin", m_hinput}};
    Message b = Message::array();
    for (const auto& [l, payloads] : m_boundary) b.push_back({l, payloads});
    rec["b"] = std::move(b);
    if (phase == 1) {
      rec["adj"] = std::vector<NodeId>(m_adjacent.begin(), m_adjacent.end());
    }
    return rec;
  }

  void build_pool(Round phase, const Message& items) {
    std::map<NodeId, Message> inbox_by_label;
    std::set<NodeId> adjacent;
    for (const Message& item : items) {
      if (item.at("hin") != m_hinput) {
        throw ProgramError("inconsistent per-cluster input");
      }
      for (const Message& pair : item.at("b")) {
        NodeId l = pair.at(0).get<NodeId>();
        auto [it, inserted] = inbox_by_label.emplace(l, pair.at(1));
        if (!inserted && it->second != pair.at(1)) {
          throw ProgramError("inconsistent boundary transcript for cluster " +
                             std::to_string(l));
        }
      }
      if (phase == 1) {
        for (const Message& l : item.at("adj")) adjacent.insert(l.get<NodeId>());
      }
    }
    Message inb = Message::array();
    for (const auto& [l, payloads] : inbox_by_label) {
      inb.push_back({l, payloads});
    }
    m_pool = {{"t", "p"}, {"l", m_label}, {"inb", std::move(inb)}};
    if (phase == 1) {
      m_pool["hn"] = std::vector<NodeId>(adjacent.begin(), adjacent.end());
    }
  }

  Action advance(Round phase, Round round, std::vector<Outgoing>& outbox) {
    if (phase == 1) {
      for (const Message& l : m_pool.at("hn")) {
        m_hneighbors.insert(l.get<NodeId>());
      }
      NodeContext hctx{m_label, m_ctx.n,
                       static_cast<std::int64_t>(m_hneighbors.size()),
                       m_hinput};
      m_replica = m_s->cfg.h_program(hctx);
      if (!m_replica) throw ProgramError("virtual program returned null");
      if (serialize_outbox(m_replica->start()) != m_initial) {
        throw ProgramError(
            "virtual start() output changed once the degree was known");
      }
      check_targets(m_initial);
    }
    std::vector<Incoming> h_inbox;
    for (const Message& pair : m_pool.at("inb")) {
      NodeId l = pair.at(0).get<NodeId>();
      for (const Message& payload : pair.at(1)) {
        h_inbox.push_back({l, payload});
      }
    }
    std::vector<Outgoing> h_outbox;
    Action act = m_replica->on_wake(phase, h_inbox, h_outbox);
    Message serialized = serialize_outbox(h_outbox);
    check_targets(serialized);
    if (act.kind == Action::Kind::terminate) {
      if (!h_outbox.empty()) {
        throw ProgramError("terminating virtual activation left messages");
      }
      Message out = m_s->cfg.finish ? m_s->cfg.finish(m_ctx, act.output)
                                    : act.output;
      return Action::terminate(std::move(out));
    }
    Round next = phase + 1;
    if (act.kind == Action::Kind::sleep) {
      if (act.duration < 1) {
        throw ProgramError("virtual sleep duration must be >= 1");
      }
      next = phase + act.duration + 1;
    }
    if (next > m_s->cfg.h_rounds) {
      throw ProgramError("virtual run exceeded its round bound");
    }
    outbox.push_back({kAllNeighbors, exchange_message(serialized)});
    const Round R = simulate_phase_rounds(m_s->n);
    return sleep_to(round, (next - 1) * R + 1);
  }

  void check_targets(const Message& serialized) const {
    for (const Message& entry : serialized) {
      NodeId to = entry.at(0).get<NodeId>();
      if (to != kAllNeighbors && !m_hneighbors.count(to)) {
        throw ProgramError("virtual message to non-neighbor " +
                           std::to_string(to));
      }
    }
  }

  std::shared_ptr<const SimulateShared> m_s;
  NodeContext m_ctx;
  NodeId m_label = 0;
  std::int64_t m_delta = 0;
  Message m_hinput;
  Message m_initial;
  NodeId m_parent = 0;
  std::map<NodeId, Message> m_boundary;
  std::set<NodeId> m_adjacent;
  std::set<NodeId> m_hneighbors;
  std::unique_ptr<NodeBehavior> m_replica;
  Message m_pool;
};

}  // namespace

NodeProgram make_simulate_program(std::size_t n, SimulateConfig cfg) {
  if (n == 0) throw std::runtime_error("graph order must be >= 1");
  if (!cfg.h_program) throw std::runtime_error("virtual program is required");
  if (cfg.h_rounds < 1) {
    throw std::runtime_error("virtual round bound must be >= 1");
  }
  auto shared = std::make_shared<SimulateShared>();
  shared->cfg = std::move(cfg);
  shared->n = n;
  return [shared](const NodeContext& ctx) {
    return std::make_unique<SimulateBehavior>(shared, ctx);
  };
}

std::vector<Message> simulate_inputs(
    const Graph& g, const UniquelyLabeledClustering& c,
    const std::map<NodeId, Message>& h_inputs) {
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    Message in = {{"l", c.label[v]}, {"d", c.delta[v]}};
    auto it = h_inputs.find(c.label[v]);
    in["h_input"] = it == h_inputs.end() ? Message() : it->second;
    inputs[v] = std::move(in);
  }
  return inputs;
}

RunResult run_virtual_reference(const VirtualGraph& h, const NodeProgram& p,
                                const std::map<NodeId, Message>& h_inputs,
                                const RunOptions& opts) {
  std::vector<Message> inputs(h.graph.node_count());
  for (NodeIndex v = 0; v < h.graph.node_count(); ++v) {
    auto it = h_inputs.find(h.graph.id_of(v));
    if (it != h_inputs.end()) inputs[v] = it->second;
  }
  return run(h.graph, p, inputs, opts);
}

// ---------------------------------------------------------------------------
// Two-level merge
// ---------------------------------------------------------------------------

Round merge_span(std::size_t n) {
  return tree_pool_span(static_cast<Round>(n)) +
         simulate_span(n, tree_pool_span(static_cast<Round>(n)));
}

namespace {

// First merge stage: pool every member's annotated neighborhood inside each
// cluster, and derive the (identical) virtual-program input for stage two.
NodeProgram make_merge_stage1(std::size_t n) {
  TreePoolSpec spec;
  spec.bound = static_cast<Round>(n);
  spec.label = [](const NodeContext& ctx) {
    return int_field(ctx.input, "d") + 1;
  };
  spec.hello = [](const NodeContext& ctx) {
    return Message{{"l", id_field(ctx.input, "l")},
                   {"d", int_field(ctx.input, "d")},
                   {"lp", id_field(ctx.input, "lp")},
                   {"dp", int_field(ctx.input, "dp")}};
  };
  spec.parent = [](const NodeContext& ctx,
                   const std::map<NodeId, Message>& hellos)
      -> std::optional<NodeId> {
    std::int64_t d = int_field(ctx.input, "d");
    if (d == 0) return std::nullopt;
    NodeId l = id_field(ctx.input, "l");
    std::optional<NodeId> best;
    for (const auto& [id, hello] : hellos) {
      if (hello.at("l").get<NodeId>() == l &&
          hello.at("d").get<std::int64_t>() == d - 1) {
        if (!best || id < *best) best = id;
      }
    }
    if (!best) {
      throw ProgramError(
          "no same-cluster neighbor one step closer to the root");
    }
    return best;
  };
  spec.payload = [](const NodeContext& ctx,
                    const std::map<NodeId, Message>& hellos) {
    Message nb = Message::array();
    for (const auto& [id, hello] : hellos) {
      nb.push_back({id, hello.at("l"), hello.at("lp"), hello.at("dp")});
    }
    return Message{{"id", ctx.id},
                   {"d", int_field(ctx.input, "d")},
                   {"nb", std::move(nb)}};
  };
  spec.finish = [](const NodeContext& ctx,
                   const std::vector<TreePoolItem>& pooled,
                   const std::map<NodeId, Message>&) {
    NodeId lp = id_field(ctx.input, "lp");
    std::int64_t dp = int_field(ctx.input, "dp");
    std::set<NodeId> members;
    for (const TreePoolItem& item : pooled) members.insert(item.id);
    NodeId root = 0;
    bool have_root = false;
    Message member_list = Message::array();
    for (const TreePoolItem& item : pooled) {
      if (item.payload.at("d").get<std::int64_t>() == 0) {
        root = item.id;
        have_root = true;
      }
      member_list.push_back(
          {item.id, item.payload.at("d"), item.payload.at("nb")});
    }
    if (!have_root) throw ProgramError("cluster has no root member");
    NodeId parent_cluster = 0;
    if (dp > 0) {
      // Lexicographically smallest boundary edge into a cluster one virtual
      // step closer to the merged root decides the gather tree.
      bool found = false;
      for (const TreePoolItem& item : pooled) {
        for (const Message& nb : item.payload.at("nb")) {
          NodeId w = nb.at(0).get<NodeId>();
          if (members.count(w)) continue;
          if (nb.at(2).get<NodeId>() == lp &&
              nb.at(3).get<std::int64_t>() == dp - 1) {
            parent_cluster = nb.at(1).get<NodeId>();
            found = true;
            break;
          }
        }
        if (found) break;
      }
      if (!found) {
        throw ProgramError(
            "no neighboring cluster one virtual step closer to the root");
      }
    }
    // Every member keeps this bundle for the whole second stage, so the
    // member list is stored as one CBOR blob rather than a JSON tree.
    Message h_input = {{"parent", parent_cluster},
                       {"label", dp + 1},
                       {"payload",
                        {{"isroot", dp == 0},
                         {"rootid", root},
                         {"members",
                          Message::binary(Message::to_cbor(member_list))}}}};
    Message out = ctx.input;
    out["h_input"] = std::move(h_input);
    return out;
  };
  return make_tree_pool_program(std::move(spec));
}

// Stage-two virtual program: pool every member cluster's structure across
// the merged cluster's gather tree.
NodeProgram make_merge_stage2_virtual(std::size_t n) {
  TreePoolSpec spec;
  spec.bound = static_cast<Round>(n);
  spec.label = [](const NodeContext& ctx) {
    return int_field(ctx.input, "label");
  };
  spec.hello = [](const NodeContext&) { return Message::object(); };
  spec.parent = [](const NodeContext& ctx,
                   const std::map<NodeId, Message>& hellos)
      -> std::optional<NodeId> {
    NodeId parent = id_field(ctx.input, "parent");
    if (parent == 0) return std::nullopt;
    if (!hellos.count(parent)) {
      throw ProgramError("parent cluster is not a virtual neighbor");
    }
    return parent;
  };
  spec.payload = [](const NodeContext& ctx, const std::map<NodeId, Message>&) {
    return field(ctx.input, "payload");
  };
  spec.finish = [](const NodeContext&, const std::vector<TreePoolItem>& pooled,
                   const std::map<NodeId, Message>&) {
    Message items = Message::array();
    for (const TreePoolItem& item : pooled) {
      items.push_back({item.id, item.payload});
    }
    return Message{{"items", std::move(items)}};
  };
  return make_tree_pool_program(std::move(spec));
}

Message merge_finish(const NodeContext& ctx, const Message& h_output,
                     const MergeFinish& extra) {
  std::set<NodeId> nodes;
  NodeId root = 0;
  int roots = 0;
  std::vector<Message> member_lists;
  for (const Message& item : h_output.at("items")) {
    const Message& bundle = item.at(1);
    member_lists.push_back(
        Message::from_cbor(bundle.at("members").get_binary()));
    for (const Message& member : member_lists.back()) {
      nodes.insert(member.at(0).get<NodeId>());
    }
    if (bundle.at("isroot").get<bool>()) {
      root = bundle.at("rootid").get<NodeId>();
      ++roots;
    }
  }
  if (roots != 1) {
    throw ProgramError("merged cluster must contain exactly one root cluster");
  }
  std::map<NodeId, std::vector<NodeId>> adj;
  for (NodeId id : nodes) adj[id];
  for (const Message& members : member_lists) {
    for (const Message& member : members) {
      NodeId u = member.at(0).get<NodeId>();
      for (const Message& nb : member.at(2)) {
        NodeId w = nb.at(0).get<NodeId>();
        if (nodes.count(w)) adj[u].push_back(w);
      }
    }
  }
  std::map<NodeId, std::int64_t> dist = bfs_ids(adj, root);
  auto it = dist.find(ctx.id);
  if (it == dist.end()) {
    throw ProgramError("merged cluster is disconnected at node " +
                       std::to_string(ctx.id));
  }
  NodeId label = id_field(ctx.input, "lp");
  if (extra) return extra(ctx, label, it->second);
  return Message{{"label", label}, {"dist", it->second}};
}

}  // namespace

NodeProgram make_merge_program(std::size_t n, MergeFinish extra_finish) {
  if (n == 0) throw std::runtime_error("graph order must be >= 1");
  SimulateConfig cfg;
  cfg.h_program = make_merge_stage2_virtual(n);
  cfg.h_rounds = tree_pool_span(static_cast<Round>(n));
  cfg.finish = [extra_finish](const NodeContext& ctx, const Message& h_out) {
    return merge_finish(ctx, h_out, extra_finish);
  };
  return concatenate(make_merge_stage1(n),
                     tree_pool_span(static_cast<Round>(n)),
                     make_simulate_program(n, std::move(cfg)));
}

std::vector<Message> merge_inputs(const Graph& g,
                                  const UniquelyLabeledClustering& first,
                                  const UniquelyLabeledClustering& second) {
  VirtualGraph h = build_virtual_graph(g, first);
  if (second.label.size() != h.graph.node_count() ||
      second.delta.size() != h.graph.node_count()) {
    throw std::runtime_error(
        "second-level clustering does not match the virtual graph");
  }
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    NodeIndex hv = h.cluster_index[v];
    inputs[v] = {{"l", first.label[v]},
                 {"d", first.delta[v]},
                 {"lp", second.label[hv]},
                 {"dp", second.delta[hv]}};
  }
  return inputs;
}

UniquelyLabeledClustering merge_oracle(const Graph& g,
                                       const UniquelyLabeledClustering& first,
                                       const UniquelyLabeledClustering& second) {
  VirtualGraph h = build_virtual_graph(g, first);
  ValidationReport rep = validate_uniquely_labeled(h.graph, second);
  if (!rep.ok) {
    throw std::runtime_error("invalid second-level clustering: " +
                             rep.violations[0]);
  }
  UniquelyLabeledClustering out;
  out.label.resize(g.node_count());
  out.delta.assign(g.node_count(), -1);
  std::map<NodeId, std::vector<NodeIndex>> classes;
  std::map<NodeId, NodeIndex> root_of;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    NodeIndex hv = h.cluster_index[v];
    out.label[v] = second.label[hv];
    classes[out.label[v]].push_back(v);
    if (first.delta[v] == 0 && second.delta[hv] == 0) root_of[out.label[v]] = v;
  }
  for (const auto& [label, members] : classes) {
    auto rit = root_of.find(label);
    if (rit == root_of.end()) {
      throw std::runtime_error("merged cluster lost its root");
    }
    Graph sub = g.induced(members);
    std::vector<std::int64_t> dist =
        sub.bfs_distances(sub.index_of(g.id_of(rit->second)));
    for (NodeIndex v : members) {
      std::int64_t d = dist[sub.index_of(g.id_of(v))];
      if (d < 0) throw std::runtime_error("merged cluster is disconnected");
      out.delta[v] = d;
    }
  }
  return out;
}

MergeRun run_merge_two_level(const Graph& g,
                             const UniquelyLabeledClustering& first,
                             const UniquelyLabeledClustering& second,
                             const RunOptions& opts) {
  std::vector<Message> inputs = merge_inputs(g, first, second);
  RunResult res = run(g, make_merge_program(g.node_count()), inputs, opts);
  MergeRun out;
  out.clustering.label.resize(g.node_count());
  out.clustering.delta.resize(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    out.clustering.label[v] = res.outputs[v].at("label").get<NodeId>();
    out.clustering.delta[v] = res.outputs[v].at("dist").get<std::int64_t>();
  }
  out.run = std::move(res);
  return out;
}

// ---------------------------------------------------------------------------
// One clustering phase
// ---------------------------------------------------------------------------

LinialConfig OnestepParams::square_stage() const {
  return {id_bound, std::max<std::int64_t>(1, size_bound - 1), true};
}

std::int64_t OnestepParams::distance2_palette() const {
  if (ids_as_distance2) return id_bound;
  return linial_final_palette(square_stage());
}

LinialConfig OnestepParams::singleton_stage() const {
  return {distance2_palette(), threshold, false};
}

std::int64_t OnestepParams::small_limit() const {
  return kPaletteFactor * threshold * threshold;
}

Round OnestepParams::span() const {
  Round t1 = ids_as_distance2 ? 1 : linial_rounds(square_stage());
  Round ne = 4 * distance2_palette() + 2;
  return t1 + 2 + tree_pool_span(ne) + linial_rounds(singleton_stage());
}

namespace {

struct OnestepShared {
  OnestepParams params;
  std::int64_t k = 0;  // distance-2 palette
};

// Two-round exchange after the distance-2 coloring: learn the shifted colors
// of everything within two hops, then pick the forest parent.
class ParentChoiceBehavior : public NodeBehavior {
 public:
  ParentChoiceBehavior(std::shared_ptr<const OnestepShared> s,
                       const NodeContext& ctx)
      : m_s(std::move(s)), m_ctx(ctx) {
    m_c0 = int_field(ctx.input, "color");
    if (m_c0 < 1 || m_c0 > m_s->k) {
      throw ProgramError("distance-2 color outside its palette");
    }
    if (ctx.degree == kUnknownDegree) {
      throw ProgramError("degree unknown at parent choice");
    }
    m_c1 = m_c0 + (ctx.degree <= m_s->params.threshold ? m_s->k : 0);
  }

  std::vector<Outgoing> start() override {
    return {{kAllNeighbors, {{"t", "nc"}, {"c", m_c1}}}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    if (round == 1) {
      Message items = Message::array();
      for (const Incoming& msg : inbox) {
        if (msg.payload.is_object() && msg.payload.value("t", "") == "nc") {
          m_nbr[msg.from] = msg.payload.at("c").get<std::int64_t>();
          items.push_back({msg.from, m_nbr[msg.from]});
        }
      }
      outbox.push_back({kAllNeighbors, {{"t", "rel"}, {"items", items}}});
      return Action::stay_awake();
    }
    if (round == 2) return decide(inbox);
    throw ProgramError("unexpected wake round " + std::to_string(round));
  }

 private:
  Action decide(const std::vector<Incoming>& inbox) {
    // Colors seen two hops out, and which neighbors vouch for each node.
    std::map<NodeId, std::int64_t> two_hop;
    std::map<NodeId, std::vector<NodeId>> via;
    for (const Incoming& msg : inbox) {
      if (!msg.payload.is_object() || msg.payload.value("t", "") != "rel") {
        continue;
      }
      for (const Message& item : msg.payload.at("items")) {
        NodeId w = item.at(0).get<NodeId>();
        std::int64_t c = item.at(1).get<std::int64_t>();
        if (w == m_ctx.id) continue;
        auto [it, inserted] = two_hop.emplace(w, c);
        if (!inserted && it->second != c) {
          throw ProgramError("inconsistent relayed colors for node " +
                             std::to_string(w));
        }
        via[w].push_back(msg.from);
      }
    }
    std::optional<std::pair<std::int64_t, NodeId>> nbr_min;
    for (const auto& [id, c] : m_nbr) {
      std::pair<std::int64_t, NodeId> cand{c, id};
      if (!nbr_min || cand < *nbr_min) nbr_min = cand;
    }
    std::optional<std::pair<std::int64_t, NodeId>> far_min;
    for (const auto& [id, c] : two_hop) {
      if (m_nbr.count(id)) continue;
      std::pair<std::int64_t, NodeId> cand{c, id};
      if (!far_min || cand < *far_min) far_min = cand;
    }
    Message out = {{"c0", m_c0}, {"c1", m_c1}};
    bool nbr_smaller = nbr_min && nbr_min->first < m_c1;
    bool far_smaller = far_min && far_min->first < m_c1;
    if (!nbr_smaller && !far_smaller) {
      out["c2"] = 0;
      out["p1"] = nullptr;
      out["bshift"] = nullptr;
      out["p2"] = nullptr;
    } else if (nbr_smaller) {
      out["c2"] = 2 * nbr_min->first;
      out["p1"] = nbr_min->second;
      out["bshift"] = 0;
      out["p2"] = nbr_min->second;
    } else {
      NodeId w = far_min->second;
      std::vector<NodeId>& cands = via[w];
      if (cands.empty()) {
        throw ProgramError("two-hop parent without a common neighbor");
      }
      out["c2"] = 2 * far_min->first + 1;
      out["p1"] = w;
      out["bshift"] = 1;
      out["p2"] = *std::min_element(cands.begin(), cands.end());
    }
    return Action::terminate(std::move(out));
  }

  std::shared_ptr<const OnestepShared> m_s;
  NodeContext m_ctx;
  std::int64_t m_c0 = 0;
  std::int64_t m_c1 = 0;
  std::map<NodeId, std::int64_t> m_nbr;
};

// Pool (id, degree, colors, adjacency) across each forest tree, so every
// member learns the cluster's structure, root and root degree.
NodeProgram make_onestep_pool(std::shared_ptr<const OnestepShared> s) {
  TreePoolSpec spec;
  spec.bound = 4 * s->k + 2;
  spec.label = [](const NodeContext& ctx) {
    return int_field(ctx.input, "c2") + 1;
  };
  spec.hello = [](const NodeContext&) { return Message::object(); };
  spec.parent = [](const NodeContext& ctx,
                   const std::map<NodeId, Message>& hellos)
      -> std::optional<NodeId> {
    const Message& p2 = field(ctx.input, "p2");
    if (p2.is_null()) return std::nullopt;
    NodeId parent = p2.get<NodeId>();
    if (!hellos.count(parent)) {
      throw ProgramError("forest parent is not an awake neighbor");
    }
    return parent;
  };
  spec.payload = [](const NodeContext& ctx,
                    const std::map<NodeId, Message>& hellos) {
    std::vector<NodeId> nb;
    for (const auto& [id, hello] : hellos) {
      (void)hello;
      nb.push_back(id);
    }
    return Message{{"id", ctx.id},
                   {"deg", ctx.degree},
                   {"c0", int_field(ctx.input, "c0")},
                   {"c2", int_field(ctx.input, "c2")},
                   {"nb", nb}};
  };
  spec.finish = [s](const NodeContext& ctx,
                    const std::vector<TreePoolItem>& pooled,
                    const std::map<NodeId, Message>&) {
    std::set<NodeId> members;
    for (const TreePoolItem& item : pooled) members.insert(item.id);
    NodeId root = 0;
    std::int64_t root_deg = 0;
    int roots = 0;
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const TreePoolItem& item : pooled) {
      if (item.payload.at("c2").get<std::int64_t>() == 0) {
        root = item.id;
        root_deg = item.payload.at("deg").get<std::int64_t>();
        ++roots;
      }
      auto& list = adj[item.id];
      for (const Message& w : item.payload.at("nb")) {
        if (members.count(w.get<NodeId>())) list.push_back(w.get<NodeId>());
      }
    }
    if (roots != 1) {
      throw ProgramError("cluster must contain exactly one root");
    }
    std::map<NodeId, std::int64_t> dist = bfs_ids(adj, root);
    auto it = dist.find(ctx.id);
    if (it == dist.end()) {
      throw ProgramError("cluster tree is disconnected");
    }
    Message out = ctx.input;
    out["u"] = root_deg <= s->params.threshold;
    out["ell"] = root;
    out["rootdeg"] = root_deg;
    out["dl"] = it->second;
    return out;
  };
  return make_tree_pool_program(std::move(spec));
}

Message onestep_output(std::uint64_t gamma, std::int64_t delta,
                       const Message& st) {
  return Message{{"gamma", gamma},
                 {"delta", delta},
                 {"trace",
                  {{"c0", st.at("c0")},
                   {"c1", st.at("c1")},
                   {"c2", st.at("c2")},
                   {"p1", st.at("p1")},
                   {"bshift", st.at("bshift")},
                   {"p2", st.at("p2")},
                   {"root", st.at("ell")},
                   {"rootdeg", st.at("rootdeg")}}}};
}

// Final stage: nodes in low-degree-rooted clusters recolor themselves into
// the singleton palette; everyone else adopts the root id as cluster color.
NodeProgram make_onestep_finish(std::shared_ptr<const OnestepShared> s) {
  NodeProgram linial = make_linial_program(s->params.singleton_stage());
  return [s, linial](const NodeContext& ctx) -> std::unique_ptr<NodeBehavior> {
    const Message& st = ctx.input;
    if (!field(st, "u").get<bool>()) {
      NodeId root = id_field(st, "ell");
      std::uint64_t gamma =
          root + static_cast<std::uint64_t>(s->params.small_limit());
      return std::make_unique<TrivialBehavior>(
          onestep_output(gamma, int_field(st, "dl"), st));
    }
    NodeContext patched = ctx;
    patched.input = Message{{"color", st.at("c0")}};
    Message saved = st;
    return std::make_unique<RewrapBehavior>(
        linial(patched), [saved](const Message& linial_out) {
          return onestep_output(linial_out.at("color").get<std::uint64_t>(), 0,
                                saved);
        });
  };
}

}  // namespace

NodeProgram make_onestep_program(const OnestepParams& p) {
  if (p.threshold < 1) throw std::runtime_error("threshold must be >= 1");
  if (p.id_bound < 1) throw std::runtime_error("id bound must be >= 1");
  if (p.size_bound < 1) throw std::runtime_error("size bound must be >= 1");
  auto shared = std::make_shared<OnestepShared>();
  shared->params = p;
  shared->k = p.distance2_palette();

  NodeProgram stage1;
  Round t1 = 0;
  if (p.ids_as_distance2) {
    std::int64_t bound = p.id_bound;
    stage1 = trivial_program([bound](const NodeContext& ctx) {
      if (ctx.id > static_cast<NodeId>(bound)) {
        throw ProgramError("node id exceeds the configured bound");
      }
      return Message{{"color", ctx.id}};
    });
    t1 = 1;
  } else {
    stage1 = with_input(make_linial_program(p.square_stage()),
                        [](const NodeContext& ctx) {
                          return Message{{"color", ctx.id}};
                        });
    t1 = linial_rounds(p.square_stage());
  }

  NodeProgram choice = [shared](const NodeContext& ctx) {
    return std::make_unique<ParentChoiceBehavior>(shared, ctx);
  };
  Round ne = 4 * shared->k + 2;
  return concatenate(
      std::move(stage1), t1,
      concatenate(std::move(choice), 2,
                  concatenate(make_onestep_pool(shared), tree_pool_span(ne),
                              make_onestep_finish(shared))));
}

OnestepRun run_onestep(const Graph& g, const OnestepParams& p,
                       const RunOptions& opts) {
  std::vector<Message> inputs(g.node_count());
  RunResult res = run(g, make_onestep_program(p), inputs, opts);
  OnestepRun out;
  out.clustering.color.resize(g.node_count());
  out.clustering.delta.resize(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    out.clustering.color[v] = res.outputs[v].at("gamma").get<std::uint64_t>();
    out.clustering.delta[v] = res.outputs[v].at("delta").get<std::int64_t>();
  }
  out.run = std::move(res);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

PipelineParams PipelineParams::from_graph_order(std::size_t n,
                                                std::int64_t id_bound,
                                                bool ids_as_distance2) {
  PipelineParams p;
  p.n = n;
  p.id_bound = id_bound;
  p.ids_as_distance2 = ids_as_distance2;
  if (n <= 1) {
    p.phases = 1;
    p.threshold = 1;
  } else {
    double lg = std::log2(static_cast<double>(n));
    p.phases = std::max<int>(
        1, static_cast<int>(std::ceil(2.0 * std::sqrt(lg))));
    p.threshold = std::int64_t{1}
                  << static_cast<int>(std::ceil(std::sqrt(lg)));
  }
  return p;
}

std::int64_t PipelineParams::small_limit() const {
  return kPaletteFactor * threshold * threshold;
}

std::int64_t PipelineParams::phase_id_bound(int i) const {
  return id_bound + static_cast<std::int64_t>(i - 1) * small_limit();
}

std::int64_t PipelineParams::phase_size_bound(int i) const {
  std::int64_t m = static_cast<std::int64_t>(n);
  for (int j = 1; j < i; ++j) m /= threshold;
  return std::max<std::int64_t>(1, m);
}

OnestepParams PipelineParams::phase_onestep(int i) const {
  return {threshold, phase_id_bound(i), phase_size_bound(i), ids_as_distance2};
}

Round PipelineParams::phase_span(int i) const {
  return simulate_span(n, phase_onestep(i).span()) + merge_span(n);
}

Round PipelineParams::span() const {
  Round total = 0;
  for (int i = 1; i <= phases; ++i) total += phase_span(i);
  return total;
}

namespace {

Message pipeline_final(int phase, std::int64_t small,
                       const Message& st) {
  std::uint64_t gamma = st.at("os").at("gamma").get<std::uint64_t>() +
                        static_cast<std::uint64_t>(phase - 1) *
                            static_cast<std::uint64_t>(small);
  return Message{{"final", true},
                 {"gamma", gamma},
                 {"delta", st.at("d")},
                 {"phase", phase},
                 {"hist", st.at("hist")}};
}

}  // namespace

NodeProgram make_pipeline_program(const PipelineParams& p) {
  if (p.n == 0) throw std::runtime_error("graph order must be >= 1");
  if (p.phases < 1) throw std::runtime_error("phase count must be >= 1");
  if (p.threshold < 1) throw std::runtime_error("threshold must be >= 1");
  const std::int64_t small = p.small_limit();

  std::vector<std::pair<NodeProgram, Round>> stages;
  for (int i = 1; i <= p.phases; ++i) {
    OnestepParams op = p.phase_onestep(i);
    SimulateConfig cfg;
    cfg.h_program = make_onestep_program(op);
    cfg.h_rounds = op.span();
    cfg.finish = [](const NodeContext& ctx, const Message& h_out) {
      Message out = ctx.input;
      out["os"] = h_out;
      return out;
    };
    NodeProgram sim = make_simulate_program(p.n, std::move(cfg));
    NodeProgram contracted = [sim, i](const NodeContext& ctx)
        -> std::unique_ptr<NodeBehavior> {
      Message st = i == 1 ? Message{{"l", ctx.id},
                                    {"d", 0},
                                    {"hist", Message::array()}}
                          : ctx.input;
      if (st.value("final", false)) {
        return std::make_unique<TrivialBehavior>(st);
      }
      NodeContext patched = ctx;
      patched.input = std::move(st);
      return sim(patched);
    };
    stages.push_back({std::move(contracted), simulate_span(p.n, op.span())});

    MergeFinish relabel = [i](const NodeContext& ctx, NodeId label,
                              std::int64_t dist) {
      Message hist = field(ctx.input, "hist");
      hist.push_back({i, label});
      return Message{{"l", label}, {"d", dist}, {"hist", std::move(hist)}};
    };
    NodeProgram merge = make_merge_program(p.n, std::move(relabel));
    NodeProgram settle = [merge, i, small](const NodeContext& ctx)
        -> std::unique_ptr<NodeBehavior> {
      const Message& st = ctx.input;
      if (st.value("final", false)) {
        return std::make_unique<TrivialBehavior>(st);
      }
      std::int64_t gamma = st.at("os").at("gamma").get<std::int64_t>();
      if (gamma <= small) {
        return std::make_unique<TrivialBehavior>(
            pipeline_final(i, small, st));
      }
      NodeContext patched = ctx;
      patched.input = Message{{"l", st.at("l")},
                              {"d", st.at("d")},
                              {"lp", gamma},
                              {"dp", st.at("os").at("delta")},
                              {"hist", st.at("hist")}};
      return merge(patched);
    };
    stages.push_back({std::move(settle), merge_span(p.n)});
  }

  NodeProgram prog = stages.back().first;
  for (std::size_t j = stages.size() - 1; j-- > 0;) {
    prog = concatenate(stages[j].first, stages[j].second, std::move(prog));
  }
  return prog;
}

PipelineRun run_pipeline(const Graph& g, const PipelineParams& p,
                         const RunOptions& opts) {
  std::vector<Message> inputs(g.node_count());
  RunResult res = run(g, make_pipeline_program(p), inputs, opts);
  PipelineRun out;
  out.clustering.color.resize(g.node_count());
  out.clustering.delta.resize(g.node_count());
  out.finalize_phase.resize(g.node_count());
  std::vector<std::set<NodeId>> big(p.phases + 1);
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    const Message& o = res.outputs[v];
    if (!o.is_object() || !o.value("final", false)) {
      throw std::runtime_error(
          "node " + std::to_string(g.id_of(v)) +
          " failed to finalize within the configured phases");
    }
    out.clustering.color[v] = o.at("gamma").get<std::uint64_t>();
    out.clustering.delta[v] = o.at("delta").get<std::int64_t>();
    out.finalize_phase[v] = o.at("phase").get<int>();
    for (const Message& entry : o.at("hist")) {
      big[entry.at(0).get<int>()].insert(entry.at(1).get<NodeId>());
    }
  }
  std::size_t prev = g.node_count();
  for (int i = 1; i <= p.phases; ++i) {
    std::size_t count = big[i].size();
    if (count * static_cast<std::size_t>(p.threshold) > prev) {
      throw std::runtime_error("phase " + std::to_string(i) +
                               " failed to shrink the virtual graph by the "
                               "threshold factor");
    }
    out.phase_big_counts.push_back(count);
    prev = count;
  }
  out.run = std::move(res);
  return out;
}

}  // namespace sleepsim
