#include "sleepsim/olocal.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sleepsim/primitives.hpp"

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
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ProgramError(std::string("input field '") + key +
                       "' is not an integer");
  }
  return v.get<std::int64_t>();
}

NodeId id_field(const Message& m, const char* key) {
  const Message& v = field(m, key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    throw ProgramError(std::string("input field '") + key + "' is not an id");
  }
  return v.get<NodeId>();
}

// Wake exactly at `target` (> now).
Action sleep_to(Round now, Round target) {
  if (target <= now) throw ProgramError("schedule went backwards");
  if (target == now + 1) return Action::stay_awake();
  return Action::sleep(target - now - 1);
}

void check_label(const GreedyRule& rule, const Message& label, NodeId node) {
  if (rule.label_ok && !rule.label_ok(label)) {
    throw std::runtime_error("rule '" + rule.name +
                             "' returned an invalid label at node " +
                             std::to_string(node));
  }
}

// Indices reachable from v along out-edges (v included), ascending.
std::vector<NodeIndex> reachable_from(
    const std::vector<std::vector<NodeIndex>>& out, NodeIndex v) {
  std::vector<char> seen(out.size(), 0);
  std::vector<NodeIndex> stack{v};
  std::vector<NodeIndex> found;
  seen[v] = 1;
  while (!stack.empty()) {
    NodeIndex u = stack.back();
    stack.pop_back();
    found.push_back(u);
    for (NodeIndex w : out[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  std::sort(found.begin(), found.end());
  return found;
}

// The full reachable view of v: everything a sequential pass has already
// decided when v's turn comes.
RuleView full_view(const Graph& g, const std::vector<std::vector<NodeIndex>>& out,
                   NodeIndex v, const std::vector<Message>& outputs,
                   const std::vector<Message>& inputs) {
  RuleView view;
  view.focus = g.id_of(v);
  view.nodes.push_back(view.focus);
  std::vector<NodeId> others;
  for (NodeIndex u : reachable_from(out, v)) {
    NodeId uid = g.id_of(u);
    if (u != v) {
      others.push_back(uid);
      view.outputs[uid] = outputs[u];
    }
    view.inputs[uid] = inputs.empty() ? Message() : inputs[u];
    for (NodeIndex w : out[u]) view.edges.push_back({uid, g.id_of(w)});
  }
  std::sort(others.begin(), others.end());
  view.nodes.insert(view.nodes.end(), others.begin(), others.end());
  std::sort(view.edges.begin(), view.edges.end());
  return view;
}

}  // namespace

// ---------------------------------------------------------------------------
// Orientations.
// ---------------------------------------------------------------------------

Orientation orientation_from_coloring(const Graph& g,
                                      const std::vector<std::uint64_t>& colors) {
  if (colors.size() != g.node_count()) {
    throw std::runtime_error("coloring size does not match the graph");
  }
  Orientation mu;
  for (const auto& [a, b] : g.edges()) {
    if (colors[a] == colors[b]) {
      throw std::runtime_error(
          "improper coloring: nodes " + std::to_string(g.id_of(a)) + " and " +
          std::to_string(g.id_of(b)) + " share color " +
          std::to_string(colors[a]));
    }
    mu.forward.push_back(colors[a] > colors[b]);
  }
  return mu;
}

Orientation orientation_from_clustering(const Graph& g,
                                        const ColoredClustering& c) {
  if (c.color.size() != g.node_count() || c.delta.size() != g.node_count()) {
    throw std::runtime_error("clustering size does not match the graph");
  }
  Orientation mu;
  for (const auto& [a, b] : g.edges()) {
    if (c.color[a] != c.color[b]) {
      mu.forward.push_back(c.color[a] > c.color[b]);
    } else {
      // Same color on an edge means same cluster: drain toward the root.
      auto ka = std::make_pair(c.delta[a], g.id_of(a));
      auto kb = std::make_pair(c.delta[b], g.id_of(b));
      mu.forward.push_back(ka > kb);
    }
  }
  return mu;
}

std::vector<std::vector<NodeIndex>> out_adjacency(const Graph& g,
                                                  const Orientation& mu) {
  const auto edges = g.edges();
  if (mu.forward.size() != edges.size()) {
    throw std::runtime_error("orientation size does not match the graph");
  }
  std::vector<std::vector<NodeIndex>> out(g.node_count());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (mu.forward[i]) {
      out[edges[i].first].push_back(edges[i].second);
    } else {
      out[edges[i].second].push_back(edges[i].first);
    }
  }
  for (auto& lst : out) std::sort(lst.begin(), lst.end());
  return out;
}

bool is_acyclic(const Graph& g, const Orientation& mu) {
  const auto out = out_adjacency(g, mu);
  std::vector<std::size_t> indeg(out.size(), 0);
  for (const auto& lst : out) {
    for (NodeIndex w : lst) ++indeg[w];
  }
  std::queue<NodeIndex> q;
  for (NodeIndex v = 0; v < out.size(); ++v) {
    if (indeg[v] == 0) q.push(v);
  }
  std::size_t seen = 0;
  while (!q.empty()) {
    NodeIndex v = q.front();
    q.pop();
    ++seen;
    for (NodeIndex w : out[v]) {
      if (--indeg[w] == 0) q.push(w);
    }
  }
  return seen == out.size();
}

// ---------------------------------------------------------------------------
// Sequential reference and consistency check.
// ---------------------------------------------------------------------------

std::vector<Message> sequential_greedy_oracle(const Graph& g,
                                              const Orientation& mu,
                                              const GreedyRule& rule,
                                              const std::vector<Message>& inputs) {
  if (!inputs.empty() && inputs.size() != g.node_count()) {
    throw std::runtime_error("inputs size does not match the graph");
  }
  const auto out = out_adjacency(g, mu);
  const NodeIndex n = g.node_count();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<NodeIndex>> rin(n);
  for (NodeIndex v = 0; v < n; ++v) {
    pending[v] = out[v].size();
    for (NodeIndex w : out[v]) rin[w].push_back(v);
  }
  std::priority_queue<std::pair<NodeId, NodeIndex>,
                      std::vector<std::pair<NodeId, NodeIndex>>,
                      std::greater<>>
      ready;
  for (NodeIndex v = 0; v < n; ++v) {
    if (pending[v] == 0) ready.push({g.id_of(v), v});
  }
  std::vector<Message> outputs(n);
  std::size_t decided = 0;
  while (!ready.empty()) {
    auto [id, v] = ready.top();
    ready.pop();
    Message label = rule.apply(full_view(g, out, v, outputs, inputs));
    check_label(rule, label, id);
    outputs[v] = std::move(label);
    ++decided;
    for (NodeIndex u : rin[v]) {
      if (--pending[u] == 0) ready.push({g.id_of(u), u});
    }
  }
  if (decided != n) {
    throw std::runtime_error("orientation contains a directed cycle");
  }
  return outputs;
}

ValidationReport check_local_consistency(const Graph& g, const Orientation& mu,
                                         const GreedyRule& rule,
                                         const std::vector<Message>& outputs,
                                         const std::vector<Message>& inputs) {
  if (outputs.size() != g.node_count()) {
    throw std::runtime_error("outputs size does not match the graph");
  }
  if (!inputs.empty() && inputs.size() != g.node_count()) {
    throw std::runtime_error("inputs size does not match the graph");
  }
  const auto out = out_adjacency(g, mu);
  ValidationReport rep;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    Message expect = rule.apply(full_view(g, out, v, outputs, inputs));
    if (expect != outputs[v]) {
      rep.violations.push_back("node " + std::to_string(g.id_of(v)) +
                               ": label " + outputs[v].dump() +
                               " differs from the rule's decision " +
                               expect.dump());
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

// ---------------------------------------------------------------------------
// Bundled rules and validators.
// ---------------------------------------------------------------------------

ValidationReport is_proper_coloring(const Graph& g,
                                    const std::vector<std::uint64_t>& colors,
                                    std::uint64_t palette_bound) {
  ValidationReport rep;
  if (colors.size() != g.node_count()) {
    rep.ok = false;
    rep.violations.push_back("coloring size does not match the graph");
    return rep;
  }
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (colors[v] < 1 || colors[v] > palette_bound) {
      rep.violations.push_back(
          "node " + std::to_string(g.id_of(v)) + ": color " +
          std::to_string(colors[v]) + " outside the palette 1.." +
          std::to_string(palette_bound));
    }
  }
  for (const auto& [a, b] : g.edges()) {
    if (colors[a] == colors[b]) {
      rep.violations.push_back("nodes " + std::to_string(g.id_of(a)) +
                               " and " + std::to_string(g.id_of(b)) +
                               " share color " + std::to_string(colors[a]));
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

ValidationReport is_mis(const Graph& g, const std::vector<bool>& in_set) {
  ValidationReport rep;
  if (in_set.size() != g.node_count()) {
    rep.ok = false;
    rep.violations.push_back("membership size does not match the graph");
    return rep;
  }
  for (const auto& [a, b] : g.edges()) {
    if (in_set[a] && in_set[b]) {
      rep.violations.push_back("nodes " + std::to_string(g.id_of(a)) +
                               " and " + std::to_string(g.id_of(b)) +
                               " are both in the set");
    }
  }
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (in_set[v]) continue;
    bool dominated = false;
    for (NodeIndex w : g.neighbors(v)) {
      if (in_set[w]) {
        dominated = true;
        break;
      }
    }
    if (!dominated) {
      rep.violations.push_back("node " + std::to_string(g.id_of(v)) +
                               " has no neighbor in the set");
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

GreedyRule first_fit_coloring() {
  GreedyRule r;
  r.name = "first-fit-coloring";
  r.apply = [](const RuleView& view) {
    std::set<std::int64_t> used;
    for (const auto& [u, w] : view.edges) {
      if (u != view.focus) continue;
      auto it = view.outputs.find(w);
      if (it == view.outputs.end()) {
        throw std::runtime_error("out-neighbor " + std::to_string(w) +
                                 " has no label yet");
      }
      used.insert(it->second.get<std::int64_t>());
    }
    std::int64_t c = 1;
    while (used.count(c) != 0) ++c;
    return Message(c);
  };
  r.label_ok = [](const Message& m) {
    return (m.is_number_integer() || m.is_number_unsigned()) &&
           m.get<std::int64_t>() >= 1;
  };
  r.validate = [](const Graph& g, const std::vector<Message>& outputs) {
    std::vector<std::uint64_t> colors(outputs.size(), 0);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (outputs[i].is_number_integer() || outputs[i].is_number_unsigned()) {
        std::int64_t c = outputs[i].get<std::int64_t>();
        colors[i] = c >= 1 ? static_cast<std::uint64_t>(c) : 0;
      }
    }
    return is_proper_coloring(g, colors, g.max_degree() + 1);
  };
  return r;
}

GreedyRule greedy_mis() {
  GreedyRule r;
  r.name = "greedy-mis";
  r.apply = [](const RuleView& view) {
    for (const auto& [u, w] : view.edges) {
      if (u != view.focus) continue;
      auto it = view.outputs.find(w);
      if (it == view.outputs.end()) {
        throw std::runtime_error("out-neighbor " + std::to_string(w) +
                                 " has no label yet");
      }
      if (it->second.get<bool>()) return Message(false);
    }
    return Message(true);
  };
  r.label_ok = [](const Message& m) { return m.is_boolean(); };
  r.validate = [](const Graph& g, const std::vector<Message>& outputs) {
    std::vector<bool> in_set(outputs.size(), false);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (outputs[i].is_boolean()) in_set[i] = outputs[i].get<bool>();
    }
    return is_mis(g, in_set);
  };
  return r;
}

// ---------------------------------------------------------------------------
// Schedule-driven solving.
//
// Every node broadcasts its color in round one, then follows the binary tree
// schedule of its color: wake at label x means round x + 1. A node decides at
// its leaf round phi(c) = 2c - 1 and afterwards keeps its label armed, so
// each later schedule round re-delivers it. For two adjacent colors c' < c
// the lowest common ancestor f of their leaves satisfies phi(c') < f <
// phi(c), lies on both paths, and the c'-node's transmission at round f + 1
// lands strictly before the c-node decides.
// ---------------------------------------------------------------------------

namespace {

struct ScheduleShared {
  std::int64_t palette = 0;
  ColorSchedule sched;
  std::function<std::int64_t(const NodeContext&)> color_of;
  // Final output plus the payload broadcast to later deciders, given the
  // round-one neighbor colors and the payloads received so far (by sender).
  std::function<std::pair<Message, Message>(
      const NodeContext&, const std::map<NodeId, std::int64_t>&,
      const std::map<NodeId, Message>&)>
      decide;
};

class ScheduledSolveBehavior : public NodeBehavior {
 public:
  ScheduledSolveBehavior(std::shared_ptr<const ScheduleShared> shared,
                         const NodeContext& ctx)
      : m_shared(std::move(shared)), m_ctx(ctx) {}

  std::vector<Outgoing> start() override {
    m_color = m_shared->color_of(m_ctx);
    if (m_color < 1 || m_color > m_shared->palette) {
      throw ProgramError("color " + std::to_string(m_color) +
                         " outside the palette 1.." +
                         std::to_string(m_shared->palette));
    }
    return {{kAllNeighbors, Message{{"t", "sc"}, {"c", m_color}}}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    for (const Incoming& msg : inbox) take(msg);
    const auto& rounds = m_shared->sched.rounds(m_color);
    if (round == 1) return sleep_to(round, rounds.front() + 1);
    if (m_step >= rounds.size() ||
        round != static_cast<Round>(rounds[m_step]) + 1) {
      throw ProgramError("woke outside the schedule");
    }
    if (rounds[m_step] == m_shared->sched.decide_round(m_color)) {
      auto [fin, arm] = m_shared->decide(m_ctx, m_neighbor_colors, m_received);
      m_final = std::move(fin);
      m_arm = Message{{"t", "out"}, {"p", std::move(arm)}};
      m_decided = true;
    }
    ++m_step;
    if (m_step == rounds.size()) {
      if (!m_decided) throw ProgramError("schedule ended before deciding");
      return Action::terminate(m_final);
    }
    if (m_decided) outbox.push_back({kAllNeighbors, m_arm});
    return sleep_to(round, rounds[m_step] + 1);
  }

 private:
  void take(const Incoming& msg) {
    const Message& t = field(msg.payload, "t");
    if (t == "sc") {
      std::int64_t c = int_field(msg.payload, "c");
      if (c == m_color) {
        throw ProgramError("input coloring is improper: neighbor " +
                           std::to_string(msg.from) + " shares color " +
                           std::to_string(c));
      }
      m_neighbor_colors[msg.from] = c;
    } else if (t == "out") {
      m_received[msg.from] = field(msg.payload, "p");
    } else {
      throw ProgramError("unexpected message tag");
    }
  }

  std::shared_ptr<const ScheduleShared> m_shared;
  NodeContext m_ctx;
  std::int64_t m_color = 0;
  std::size_t m_step = 0;  // index of the next schedule round
  bool m_decided = false;
  Message m_final;
  Message m_arm;
  std::map<NodeId, std::int64_t> m_neighbor_colors;
  std::map<NodeId, Message> m_received;
};

// Decide one plain node: the rule sees the focus and its lower-colored
// neighbors, whose labels must all have arrived.
Message single_node_decide(const GreedyRule& rule, std::int64_t my_color,
                           const NodeContext& ctx,
                           const std::map<NodeId, std::int64_t>& neighbor_colors,
                           const std::map<NodeId, Message>& received) {
  RuleView view;
  view.focus = ctx.id;
  view.nodes.push_back(ctx.id);
  view.inputs[ctx.id] = Message();
  for (const auto& [w, c] : neighbor_colors) {
    if (c >= my_color) continue;
    auto it = received.find(w);
    if (it == received.end()) {
      throw ProgramError("label from node " + std::to_string(w) +
                         " never arrived");
    }
    view.nodes.push_back(w);
    view.edges.push_back({ctx.id, w});
    view.outputs[w] = it->second;
    view.inputs[w] = Message();
  }
  Message label = rule.apply(view);
  if (rule.label_ok && !rule.label_ok(label)) {
    throw ProgramError("rule '" + rule.name + "' returned an invalid label");
  }
  return label;
}

}  // namespace

// ---------------------------------------------------------------------------
// Solving over a proper coloring.
// ---------------------------------------------------------------------------

NodeProgram make_coloring_solver_program(const ColoringSolverParams& p) {
  if (p.palette < 1) throw std::runtime_error("palette bound must be positive");
  if (!p.rule.apply) throw std::runtime_error("rule has no apply function");
  auto shared = std::make_shared<ScheduleShared>();
  shared->palette = p.palette;
  shared->sched = ColorSchedule::build(ceil_pow2(p.palette));
  shared->color_of = [](const NodeContext& ctx) {
    return int_field(ctx.input, "color");
  };
  GreedyRule rule = p.rule;
  shared->decide = [rule](const NodeContext& ctx,
                          const std::map<NodeId, std::int64_t>& nbc,
                          const std::map<NodeId, Message>& received) {
    std::int64_t mine = int_field(ctx.input, "color");
    Message label = single_node_decide(rule, mine, ctx, nbc, received);
    return std::make_pair(label, label);
  };
  return [shared](const NodeContext& ctx) {
    return std::make_unique<ScheduledSolveBehavior>(shared, ctx);
  };
}

Round coloring_solver_span(std::int64_t palette) {
  return 2 * ceil_pow2(palette);
}

SolveRun run_coloring_solver(const Graph& g,
                             const std::vector<std::uint64_t>& colors,
                             const ColoringSolverParams& p,
                             const RunOptions& opts) {
  if (colors.size() != g.node_count()) {
    throw std::runtime_error("coloring size does not match the graph");
  }
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    inputs[v] = Message{{"color", colors[v]}};
  }
  RunResult res = run(g, make_coloring_solver_program(p), inputs, opts);
  SolveRun out;
  out.outputs = res.outputs;
  out.run = std::move(res);
  return out;
}

// ---------------------------------------------------------------------------
// Solving over a colored clustering.
// ---------------------------------------------------------------------------

namespace {

// Pools, per cluster: each member's id, depth, and annotated neighbor list
// [[w, color(w), delta(w)]...]. Every member learns the root id (the cluster
// label for the contracted run) and the member table.
NodeProgram make_cluster_pool_stage(std::size_t n) {
  TreePoolSpec spec;
  spec.bound = static_cast<Round>(n);
  spec.label = [](const NodeContext& ctx) {
    return static_cast<Round>(int_field(ctx.input, "delta") + 1);
  };
  spec.hello = [](const NodeContext& ctx) {
    return Message{{"c", int_field(ctx.input, "color")},
                   {"d", int_field(ctx.input, "delta")}};
  };
  spec.parent = [](const NodeContext& ctx,
                   const std::map<NodeId, Message>& hello)
      -> std::optional<NodeId> {
    std::int64_t d = int_field(ctx.input, "delta");
    if (d == 0) return std::nullopt;
    std::int64_t c = int_field(ctx.input, "color");
    for (const auto& [w, h] : hello) {
      if (int_field(h, "c") == c && int_field(h, "d") == d - 1) return w;
    }
    throw ProgramError("no in-cluster neighbor one step closer to the root");
  };
  spec.payload = [](const NodeContext& ctx,
                    const std::map<NodeId, Message>& hello) {
    Message nb = Message::array();
    for (const auto& [w, h] : hello) {
      nb.push_back({w, int_field(h, "c"), int_field(h, "d")});
    }
    return Message{{"id", ctx.id},
                   {"d", int_field(ctx.input, "delta")},
                   {"nb", std::move(nb)}};
  };
  spec.finish = [](const NodeContext& ctx, const std::vector<TreePoolItem>& pool,
                   const std::map<NodeId, Message>&) {
    NodeId root = 0;
    Message members = Message::array();
    for (const TreePoolItem& item : pool) {
      if (int_field(item.payload, "d") == 0) {
        if (root != 0) throw ProgramError("cluster has two roots");
        root = item.id;
      }
      members.push_back(item.payload);
    }
    if (root == 0) throw ProgramError("cluster has no root");
    return Message{
        {"l", root},
        {"d", int_field(ctx.input, "delta")},
        {"h_input",
         Message{{"color", int_field(ctx.input, "color")},
                 {"members", std::move(members)}}}};
  };
  return make_tree_pool_program(std::move(spec));
}

// Decide a whole cluster: label the members in (delta, id) order. A member's
// out-edges go to same-cluster members with smaller (delta, id) — labeled
// earlier in this very pass — and to all members of lower-colored neighboring
// clusters, whose labels arrived over the contracted graph.
std::pair<Message, Message> cluster_decide(
    const GreedyRule& rule, const NodeContext& ctx,
    const std::map<NodeId, Message>& received) {
  std::int64_t my_color = int_field(ctx.input, "color");
  std::map<NodeId, Message> external;
  for (const auto& [h, payload] : received) {
    for (const auto& row : field(payload, "outs")) {
      external[row.at(0).get<NodeId>()] = row.at(1);
    }
  }
  struct Member {
    std::int64_t d = 0;
    NodeId id = 0;
    const Message* nb = nullptr;
  };
  std::vector<Member> order;
  for (const Message& m : field(ctx.input, "members")) {
    order.push_back({int_field(m, "d"), id_field(m, "id"), &field(m, "nb")});
  }
  std::sort(order.begin(), order.end(), [](const Member& a, const Member& b) {
    return std::tie(a.d, a.id) < std::tie(b.d, b.id);
  });
  std::map<NodeId, Message> local;
  for (const Member& u : order) {
    RuleView view;
    view.focus = u.id;
    view.nodes.push_back(u.id);
    view.inputs[u.id] = Message();
    for (const Message& row : *u.nb) {
      NodeId w = row.at(0).get<NodeId>();
      std::int64_t cw = row.at(1).get<std::int64_t>();
      std::int64_t dw = row.at(2).get<std::int64_t>();
      Message label;
      if (cw == my_color) {
        if (std::make_pair(dw, w) >= std::make_pair(u.d, u.id)) continue;
        auto it = local.find(w);
        if (it == local.end()) {
          throw ProgramError("member " + std::to_string(w) +
                             " missing from its own cluster");
        }
        label = it->second;
      } else if (cw < my_color) {
        auto it = external.find(w);
        if (it == external.end()) {
          throw ProgramError("label from node " + std::to_string(w) +
                             " in a neighboring cluster never arrived");
        }
        label = it->second;
      } else {
        continue;
      }
      view.nodes.push_back(w);
      view.edges.push_back({u.id, w});
      view.outputs[w] = std::move(label);
      view.inputs[w] = Message();
    }
    Message lbl = rule.apply(view);
    if (rule.label_ok && !rule.label_ok(lbl)) {
      throw ProgramError("rule '" + rule.name +
                         "' returned an invalid label for node " +
                         std::to_string(u.id));
    }
    local[u.id] = std::move(lbl);
  }
  Message outs = Message::array();
  for (const auto& [id, lbl] : local) outs.push_back({id, lbl});
  Message payload = Message{{"outs", std::move(outs)}};
  return {payload, payload};
}

}  // namespace

NodeProgram make_clustering_solver_program(const ClusteringSolverParams& p) {
  if (p.n < 1) throw std::runtime_error("graph order bound must be positive");
  if (p.color_bound < 1) {
    throw std::runtime_error("color bound must be positive");
  }
  if (!p.rule.apply) throw std::runtime_error("rule has no apply function");
  auto shared = std::make_shared<ScheduleShared>();
  shared->palette = p.color_bound;
  shared->sched = ColorSchedule::build(ceil_pow2(p.color_bound));
  shared->color_of = [](const NodeContext& ctx) {
    return int_field(ctx.input, "color");
  };
  GreedyRule rule = p.rule;
  shared->decide = [rule](const NodeContext& ctx,
                          const std::map<NodeId, std::int64_t>&,
                          const std::map<NodeId, Message>& received) {
    return cluster_decide(rule, ctx, received);
  };
  SimulateConfig cfg;
  cfg.h_program = [shared](const NodeContext& ctx) {
    return std::make_unique<ScheduledSolveBehavior>(shared, ctx);
  };
  cfg.h_rounds = 2 * ceil_pow2(p.color_bound);
  cfg.finish = [](const NodeContext& ctx, const Message& h_out) -> Message {
    for (const auto& row : field(h_out, "outs")) {
      if (row.at(0).get<NodeId>() == ctx.id) return row.at(1);
    }
    throw ProgramError("cluster labeling is missing this node");
  };
  return concatenate(make_cluster_pool_stage(p.n),
                     tree_pool_span(static_cast<Round>(p.n)),
                     make_simulate_program(p.n, std::move(cfg)));
}

Round clustering_solver_span(std::size_t n, std::int64_t color_bound) {
  return tree_pool_span(static_cast<Round>(n)) +
         simulate_span(n, 2 * ceil_pow2(color_bound));
}

SolveRun run_clustering_solver(const Graph& g, const ColoredClustering& c,
                               const ClusteringSolverParams& p,
                               const RunOptions& opts) {
  ValidationReport v = validate_colored(g, c);
  if (!v.ok) {
    throw std::runtime_error("invalid clustering: " + v.violations.front());
  }
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    inputs[i] = Message{{"color", c.color[i]}, {"delta", c.delta[i]}};
  }
  RunResult res = run(g, make_clustering_solver_program(p), inputs, opts);
  SolveRun out;
  out.outputs = res.outputs;
  out.run = std::move(res);
  return out;
}

// ---------------------------------------------------------------------------
// Full solver.
// ---------------------------------------------------------------------------

PipelineParams FullSolverParams::pipeline() const {
  PipelineParams pp =
      PipelineParams::from_graph_order(n, id_bound, ids_as_distance2);
  if (threshold_override > 0) pp.threshold = threshold_override;
  return pp;
}

std::int64_t FullSolverParams::color_bound() const {
  PipelineParams pp = pipeline();
  return pp.phases * pp.small_limit();
}

NodeProgram make_full_solver_program(const FullSolverParams& p) {
  PipelineParams pp = p.pipeline();
  ClusteringSolverParams cp;
  cp.n = p.n;
  cp.color_bound = p.color_bound();
  cp.rule = p.rule;
  NodeProgram solver = make_clustering_solver_program(cp);
  NodeProgram adapted = [solver](const NodeContext& ctx) {
    NodeContext inner = ctx;
    inner.input = Message{{"color", int_field(ctx.input, "gamma")},
                          {"delta", int_field(ctx.input, "delta")}};
    return solver(inner);
  };
  return concatenate(make_pipeline_program(pp), pp.span(), std::move(adapted));
}

Round full_solver_span(const FullSolverParams& p) {
  return p.pipeline().span() + clustering_solver_span(p.n, p.color_bound());
}

SolveRun run_full_solver(const Graph& g, const FullSolverParams& p,
                         const RunOptions& opts) {
  if (p.n != g.node_count()) {
    throw std::runtime_error("solver order does not match the graph");
  }
  std::vector<Message> inputs(g.node_count());
  RunResult res = run(g, make_full_solver_program(p), inputs, opts);
  SolveRun out;
  out.outputs = res.outputs;
  out.run = std::move(res);
  return out;
}

Message solution_to_json(const Graph& g, const std::vector<Message>& outputs) {
  if (outputs.size() != g.node_count()) {
    throw std::runtime_error("outputs size does not match the graph");
  }
  Message obj = Message::object();
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    obj[std::to_string(g.id_of(v))] = outputs[v];
  }
  return obj;
}

}  // namespace sleepsim
