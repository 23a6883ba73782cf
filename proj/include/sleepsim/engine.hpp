#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleepsim/graph.hpp"

namespace sleepsim {

using Message = nlohmann::json;
using Round = std::int64_t;

// Sentinel recipient: deliver to every neighbor.
inline constexpr NodeId kAllNeighbors = 0;

// Marker for an unknown degree in a node context. Used when a behavior is
// instantiated before its degree can be known; such a behavior's start()
// messages must not depend on the degree.
inline constexpr std::int64_t kUnknownDegree = -1;

struct Outgoing {
  NodeId to = kAllNeighbors;
  Message payload;
};

struct Incoming {
  NodeId from = 0;
  Message payload;
};

struct Action {
  enum class Kind { stay_awake, sleep, terminate };
  Kind kind = Kind::stay_awake;
  Round duration = 0;  // sleep only, >= 1
  Message output;      // terminate only

  static Action stay_awake() { return {}; }
  static Action sleep(Round t) { return {Kind::sleep, t, {}}; }
  static Action terminate(Message output) {
    return {Kind::terminate, 0, std::move(output)};
  }
};

struct NodeContext {
  NodeId id = 0;
  std::uint32_t n = 0;
  std::int64_t degree = 0;  // kUnknownDegree when not yet known
  Message input;
};

// Per-node state machine. The engine drives it as follows:
//   - start() runs before round 1; its messages are transmitted at round 1.
//   - on_wake(r, inbox, outbox) runs at every awake round r. The inbox holds
//     the messages transmitted at round r by awake neighbors, sorted by
//     sender id. Messages appended to outbox are transmitted at this node's
//     next awake round. A terminating activation must leave outbox empty.
class NodeBehavior {
 public:
  virtual ~NodeBehavior() = default;
  virtual std::vector<Outgoing> start() { return {}; }
  virtual Action on_wake(Round round, const std::vector<Incoming>& inbox,
                         std::vector<Outgoing>& outbox) = 0;
};

// A program is a factory producing one behavior per node.
using NodeProgram =
    std::function<std::unique_ptr<NodeBehavior>(const NodeContext&)>;

struct NodeMetrics {
  std::uint64_t awake_rounds = 0;
  Round termination_round = 0;
  std::uint64_t dropped_messages = 0;  // addressed to this node while asleep
};

struct RunMetrics {
  std::vector<NodeMetrics> node;  // by node index
  Round max_round = 0;            // max termination round
  std::uint64_t max_awake = 0;
  double mean_awake = 0.0;
  std::uint64_t total_activations = 0;
  std::uint64_t total_messages = 0;
  std::uint64_t total_dropped = 0;

  nlohmann::json to_json(const Graph& g) const;
};

struct TraceRecord {
  Round round = 0;
  NodeId node = 0;
  std::vector<Incoming> inbox;
  std::vector<Outgoing> outbox;
  std::string action;  // "stay" | "sleep:<t>" | "terminate"
};

struct ExecutionTrace {
  std::vector<TraceRecord> records;

  // JSON-lines, one record per activation. Byte-identical across identical
  // runs.
  std::string to_json_lines() const;
};

struct RunOptions {
  std::uint64_t event_cap = 10'000'000;  // activations before aborting
  bool record_trace = false;
};

struct RunResult {
  std::vector<Message> outputs;  // by node index
  RunMetrics metrics;
  ExecutionTrace trace;  // populated when record_trace
};

// Raised when the engine or a program detects a fault. Carries the blamed
// node (0 when global) and round, plus partial metrics where applicable.
class EngineError : public std::runtime_error {
 public:
  EngineError(std::string what, NodeId node, Round round)
      : std::runtime_error(std::move(what)), m_node(node), m_round(round) {}

  NodeId node() const { return m_node; }
  Round round() const { return m_round; }

  std::optional<RunMetrics> partial_metrics;

 private:
  NodeId m_node;
  Round m_round;
};

// Programs may throw this from on_wake/start; the engine rethrows it as an
// EngineError naming the node and round.
class ProgramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Event-driven execution: rounds where every node sleeps cost no work.
RunResult run(const Graph& g, const NodeProgram& program,
              const std::vector<Message>& inputs, const RunOptions& options = {});

// Reference stepper: advances one round at a time. Same observable behavior
// as run(); kept simple for differential testing.
RunResult run_naive(const Graph& g, const NodeProgram& program,
                    const std::vector<Message>& inputs,
                    const RunOptions& options = {});

// Sequential composition. Runs `first` until each node terminates (all must
// terminate by round `first_bound`), then every node starts `second` at round
// first_bound + 1 with its first-program output as input. Awake rounds add;
// no extra awake round is spent on the hand-off.
NodeProgram concatenate(NodeProgram first, Round first_bound,
                        NodeProgram second);

}  // namespace sleepsim
