#include "sleepsim/engine.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace sleepsim {

nlohmann::json RunMetrics::to_json(const Graph& g) const {
  nlohmann::json per_node = nlohmann::json::object();
  for (NodeIndex v = 0; v < node.size(); ++v) {
    per_node[std::to_string(g.id_of(v))] = {
        {"awake_rounds", node[v].awake_rounds},
        {"termination_round", node[v].termination_round},
        {"dropped_messages", node[v].dropped_messages},
    };
  }
  return {
      {"max_round", max_round},
      {"max_awake", max_awake},
      {"mean_awake", mean_awake},
      {"total_activations", total_activations},
      {"total_messages", total_messages},
      {"total_dropped", total_dropped},
      {"per_node", std::move(per_node)},
  };
}

std::string ExecutionTrace::to_json_lines() const {
  std::ostringstream out;
  for (const TraceRecord& rec : records) {
    nlohmann::json inbox = nlohmann::json::array();
    for (const Incoming& msg : rec.inbox) {
      inbox.push_back({{"from", msg.from}, {"payload", msg.payload}});
    }
    nlohmann::json outbox = nlohmann::json::array();
    for (const Outgoing& msg : rec.outbox) {
      outbox.push_back({{"to", msg.to}, {"payload", msg.payload}});
    }
    nlohmann::json line = {
        {"round", rec.round},
        {"node", rec.node},
        {"inbox", std::move(inbox)},
        {"outbox", std::move(outbox)},
        {"action", rec.action},
    };
    out << line.dump() << '\n';
  }
  return out.str();
}

namespace {

struct NodeState {
  std::unique_ptr<NodeBehavior> behavior;
  std::vector<Outgoing> pending;  // transmitted at the next awake round
  std::vector<Incoming> inbox;
  Round next_wake = 1;
  bool terminated = false;
  Message output;
};

struct Runner {
  const Graph& g;
  const RunOptions& options;
  std::vector<NodeState> state;
  RunResult result;

  Runner(const Graph& graph, const NodeProgram& program,
         const std::vector<Message>& inputs, const RunOptions& opts)
      : g(graph), options(opts) {
    const NodeIndex n = g.node_count();
    if (!inputs.empty() && inputs.size() != n) {
      throw std::runtime_error("input vector size does not match graph order");
    }
    state.resize(n);
    result.metrics.node.resize(n);
    result.outputs.resize(n);
    for (NodeIndex v = 0; v < n; ++v) {
      NodeContext ctx;
      ctx.id = g.id_of(v);
      ctx.n = n;
      ctx.degree = static_cast<std::int64_t>(g.degree(v));
      if (!inputs.empty()) ctx.input = inputs[v];
      state[v].behavior = program(ctx);
      if (!state[v].behavior) {
        throw std::runtime_error("program factory returned null behavior");
      }
      try {
        state[v].pending = state[v].behavior->start();
      } catch (const ProgramError& err) {
        throw EngineError(std::string("program fault at start: ") + err.what(),
                          ctx.id, 0);
      }
      validate_outbox(v, 0, state[v].pending);
    }
  }

  void validate_outbox(NodeIndex v, Round round,
                       const std::vector<Outgoing>& outbox) const {
    for (const Outgoing& msg : outbox) {
      if (msg.to == kAllNeighbors) continue;
      if (!g.has_id(msg.to) || !g.adjacent(v, g.index_of(msg.to))) {
        throw EngineError("node " + std::to_string(g.id_of(v)) +
                              " emitted a message to non-neighbor " +
                              std::to_string(msg.to) + " at round " +
                              std::to_string(round),
                          g.id_of(v), round);
      }
    }
  }

  // Runs one round over the given awake set (indices, any order).
  void step_round(Round round, std::vector<NodeIndex>& awake) {
    std::sort(awake.begin(), awake.end());
    auto awake_now = [&](NodeIndex u) {
      return !state[u].terminated && state[u].next_wake == round;
    };
    // Transmit: pending messages cross their edges during this round and
    // reach exactly the neighbors awake right now.
    for (NodeIndex v : awake) {
      NodeState& s = state[v];
      for (Outgoing& msg : s.pending) {
        if (msg.to == kAllNeighbors) {
          const auto& nbrs = g.neighbors(v);
          result.metrics.total_messages += nbrs.size();
          for (NodeIndex u : nbrs) {
            if (awake_now(u)) {
              state[u].inbox.push_back({g.id_of(v), msg.payload});
            } else {
              ++result.metrics.node[u].dropped_messages;
              ++result.metrics.total_dropped;
            }
          }
        } else {
          NodeIndex u = g.index_of(msg.to);
          ++result.metrics.total_messages;
          if (awake_now(u)) {
            state[u].inbox.push_back({g.id_of(v), std::move(msg.payload)});
          } else {
            ++result.metrics.node[u].dropped_messages;
            ++result.metrics.total_dropped;
          }
        }
      }
      s.pending.clear();
    }
    // Activate: consume inboxes, collect fresh outboxes and actions.
    for (NodeIndex v : awake) {
      NodeState& s = state[v];
      std::stable_sort(
          s.inbox.begin(), s.inbox.end(),
          [](const Incoming& a, const Incoming& b) { return a.from < b.from; });
      ++result.metrics.total_activations;
      ++result.metrics.node[v].awake_rounds;
      if (result.metrics.total_activations > options.event_cap) {
        finalize_metrics();
        EngineError err("wake-event cap of " +
                            std::to_string(options.event_cap) +
                            " exceeded at round " + std::to_string(round),
                        g.id_of(v), round);
        err.partial_metrics = result.metrics;
        throw err;
      }
      std::vector<Outgoing> outbox;
      Action action;
      try {
        action = s.behavior->on_wake(round, s.inbox, outbox);
      } catch (const ProgramError& fault) {
        throw EngineError("program fault at node " +
                              std::to_string(g.id_of(v)) + ", round " +
                              std::to_string(round) + ": " + fault.what(),
                          g.id_of(v), round);
      }
      validate_outbox(v, round, outbox);
      if (options.record_trace) {
        TraceRecord rec;
        rec.round = round;
        rec.node = g.id_of(v);
        rec.inbox = s.inbox;
        rec.outbox = outbox;
        switch (action.kind) {
          case Action::Kind::stay_awake: rec.action = "stay"; break;
          case Action::Kind::sleep:
            rec.action = "sleep:" + std::to_string(action.duration);
            break;
          case Action::Kind::terminate: rec.action = "terminate"; break;
        }
        result.trace.records.push_back(std::move(rec));
      }
      s.inbox.clear();
      switch (action.kind) {
        case Action::Kind::stay_awake:
          s.next_wake = round + 1;
          break;
        case Action::Kind::sleep:
          if (action.duration < 1) {
            throw EngineError("node " + std::to_string(g.id_of(v)) +
                                  " requested sleep duration < 1 at round " +
                                  std::to_string(round),
                              g.id_of(v), round);
          }
          s.next_wake = round + action.duration + 1;
          break;
        case Action::Kind::terminate:
          if (!outbox.empty()) {
            throw EngineError(
                "node " + std::to_string(g.id_of(v)) +
                    " terminated with a nonempty outbox at round " +
                    std::to_string(round) +
                    " (messages would never be transmitted)",
                g.id_of(v), round);
          }
          s.terminated = true;
          result.outputs[v] = std::move(action.output);
          result.metrics.node[v].termination_round = round;
          break;
      }
      s.pending = std::move(outbox);
    }
  }

  void finalize_metrics() {
    RunMetrics& m = result.metrics;
    m.max_round = 0;
    m.max_awake = 0;
    std::uint64_t sum = 0;
    for (const NodeMetrics& nm : m.node) {
      m.max_round = std::max(m.max_round, nm.termination_round);
      m.max_awake = std::max(m.max_awake, nm.awake_rounds);
      sum += nm.awake_rounds;
    }
    m.mean_awake = m.node.empty()
                       ? 0.0
                       : static_cast<double>(sum) /
                             static_cast<double>(m.node.size());
  }
};

}  // namespace

RunResult run(const Graph& g, const NodeProgram& program,
              const std::vector<Message>& inputs, const RunOptions& options) {
  Runner runner(g, program, inputs, options);
  using Entry = std::pair<Round, NodeIndex>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  for (NodeIndex v = 0; v < g.node_count(); ++v) queue.push({1, v});
  std::vector<NodeIndex> awake;
  while (!queue.empty()) {
    Round round = queue.top().first;
    awake.clear();
    while (!queue.empty() && queue.top().first == round) {
      awake.push_back(queue.top().second);
      queue.pop();
    }
    runner.step_round(round, awake);
    for (NodeIndex v : awake) {
      if (!runner.state[v].terminated) {
        queue.push({runner.state[v].next_wake, v});
      }
    }
  }
  runner.finalize_metrics();
  return std::move(runner.result);
}

RunResult run_naive(const Graph& g, const NodeProgram& program,
                    const std::vector<Message>& inputs,
                    const RunOptions& options) {
  Runner runner(g, program, inputs, options);
  NodeIndex alive = g.node_count();
  std::vector<NodeIndex> awake;
  for (Round round = 1; alive > 0; ++round) {
    awake.clear();
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      if (!runner.state[v].terminated && runner.state[v].next_wake == round) {
        awake.push_back(v);
      }
    }
    if (awake.empty()) continue;
    runner.step_round(round, awake);
    for (NodeIndex v : awake) {
      if (runner.state[v].terminated) --alive;
    }
  }
  runner.finalize_metrics();
  return std::move(runner.result);
}

namespace {

class ConcatBehavior : public NodeBehavior {
 public:
  ConcatBehavior(std::unique_ptr<NodeBehavior> first, NodeContext ctx,
                 Round first_bound, NodeProgram second_program)
      : m_first(std::move(first)),
        m_ctx(std::move(ctx)),
        m_bound(first_bound),
        m_second_program(std::move(second_program)) {}

  std::vector<Outgoing> start() override { return m_first->start(); }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    if (!m_second) {
      if (round > m_bound) {
        throw ProgramError(
            "first program still running past its round bound " +
            std::to_string(m_bound));
      }
      Action action = m_first->on_wake(round, inbox, outbox);
      if (action.kind != Action::Kind::terminate) return action;
      if (!outbox.empty()) {
        throw ProgramError(
            "first program terminated with a nonempty outbox");
      }
      NodeContext ctx = m_ctx;
      ctx.input = std::move(action.output);
      m_second = m_second_program(ctx);
      // The second program's first transmission happens at round bound+1,
      // which is also this node's next awake round.
      outbox = m_second->start();
      if (round == m_bound) return Action::stay_awake();
      return Action::sleep(m_bound - round);
    }
    return m_second->on_wake(round - m_bound, inbox, outbox);
  }

 private:
  std::unique_ptr<NodeBehavior> m_first;
  NodeContext m_ctx;
  Round m_bound;
  NodeProgram m_second_program;
  std::unique_ptr<NodeBehavior> m_second;
};

}  // namespace

NodeProgram concatenate(NodeProgram first, Round first_bound,
                        NodeProgram second) {
  if (first_bound < 1) {
    throw std::runtime_error("concatenate requires a positive round bound");
  }
  return [first = std::move(first), first_bound,
          second = std::move(second)](const NodeContext& ctx) {
    return std::make_unique<ConcatBehavior>(first(ctx), ctx, first_bound,
                                            second);
  };
}

}  // namespace sleepsim
