#include "sleepsim/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace sleepsim {

// --------------------------------------------------------------------------
// ColorSchedule
// --------------------------------------------------------------------------

std::int64_t ceil_pow2(std::int64_t k) {
  if (k < 1) throw std::runtime_error("palette size must be positive");
  std::int64_t q = 1;
  while (q < k) q <<= 1;
  return q;
}

ColorSchedule ColorSchedule::build(std::int64_t q) {
  if (q < 1 || (q & (q - 1)) != 0) {
    throw std::runtime_error("schedule palette must be a power of two");
  }
  ColorSchedule s;
  s.m_q = q;
  s.m_rounds.resize(static_cast<std::size_t>(q));
  for (std::int64_t c = 1; c <= q; ++c) {
    std::int64_t target = 2 * c - 1;  // in-order label of the c-th leaf
    std::vector<std::int64_t> path;
    std::int64_t lo = 1, hi = 2 * q - 1;
    for (;;) {
      std::int64_t mid = (lo + hi) / 2;
      path.push_back(mid);
      if (mid == target) break;
      if (target < mid) {
        hi = mid - 1;
      } else {
        lo = mid + 1;
      }
    }
    std::sort(path.begin(), path.end());
    s.m_rounds[static_cast<std::size_t>(c - 1)] = std::move(path);
  }
  return s;
}

std::int64_t ColorSchedule::decide_round(std::int64_t c) const {
  if (c < 1 || c > m_q) throw std::runtime_error("color out of range");
  return 2 * c - 1;
}

const std::vector<std::int64_t>& ColorSchedule::rounds(std::int64_t c) const {
  if (c < 1 || c > m_q) throw std::runtime_error("color out of range");
  return m_rounds[static_cast<std::size_t>(c - 1)];
}

std::vector<std::int64_t> ColorSchedule::rounds_before_decide(
    std::int64_t c) const {
  std::vector<std::int64_t> out;
  for (std::int64_t x : rounds(c)) {
    if (x < decide_round(c)) out.push_back(x);
  }
  return out;
}

std::vector<std::int64_t> ColorSchedule::rounds_after_decide(
    std::int64_t c) const {
  std::vector<std::int64_t> out;
  for (std::int64_t x : rounds(c)) {
    if (x > decide_round(c)) out.push_back(x);
  }
  return out;
}

std::int64_t ColorSchedule::fork_label(std::int64_t c1, std::int64_t c2) const {
  std::int64_t a = decide_round(c1);
  std::int64_t b = decide_round(c2);
  std::int64_t lo = 1, hi = 2 * m_q - 1;
  for (;;) {
    std::int64_t mid = (lo + hi) / 2;
    if (a < mid && b < mid) {
      hi = mid - 1;
    } else if (a > mid && b > mid) {
      lo = mid + 1;
    } else {
      return mid;  // the paths to a and b separate here
    }
  }
}

// --------------------------------------------------------------------------
// Tree labelings, broadcast, convergecast
// --------------------------------------------------------------------------

void TreeLabeling::validate(const Graph& g) const {
  const NodeIndex n = g.node_count();
  if (parent.size() != n || label.size() != n) {
    throw std::runtime_error("labeling size does not match graph order");
  }
  for (NodeIndex v = 0; v < n; ++v) {
    if (label[v] < 1 || label[v] > bound) {
      throw std::runtime_error("label out of range at node " +
                               std::to_string(g.id_of(v)));
    }
    if (parent[v] == 0) continue;
    NodeIndex p = g.index_of(parent[v]);
    if (!g.adjacent(v, p)) {
      throw std::runtime_error("parent is not a neighbor of node " +
                               std::to_string(g.id_of(v)));
    }
    if (label[v] <= label[p]) {
      throw std::runtime_error("label does not exceed parent label at node " +
                               std::to_string(g.id_of(v)));
    }
  }
}

std::vector<Message> broadcast_inputs(const Graph& g, const TreeLabeling& t,
                                      const Message& payload) {
  t.validate(g);
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    inputs[v] = {{"parent", t.parent[v]},
                 {"label", t.label[v]},
                 {"bound", t.bound}};
    if (t.parent[v] == 0) inputs[v]["payload"] = payload;
  }
  return inputs;
}

namespace {

class BroadcastBehavior : public NodeBehavior {
 public:
  explicit BroadcastBehavior(const NodeContext& ctx) {
    m_parent = ctx.input.at("parent").get<NodeId>();
    m_label = ctx.input.at("label").get<std::int64_t>();
    if (m_parent == 0) m_payload = ctx.input.at("payload");
  }

  std::vector<Outgoing> start() override {
    return {{kAllNeighbors, Message{{"t", "label"}, {"v", m_label}}}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    if (round == 1) {
      if (m_parent == 0) {
        outbox.push_back({kAllNeighbors,
                          Message{{"t", "payload"}, {"v", m_payload}}});
        return sleep_until(2 + m_label, round);  // own send round
      }
      for (const Incoming& msg : inbox) {
        if (msg.from == m_parent && msg.payload.at("t") == "label") {
          m_parent_label = msg.payload.at("v").get<std::int64_t>();
        }
      }
      if (m_parent_label < 0) {
        throw ProgramError("no label heard from parent at round 1");
      }
      return sleep_until(2 + m_parent_label, round);  // receive round
    }
    if (m_parent != 0 && round == 2 + m_parent_label) {
      for (const Incoming& msg : inbox) {
        if (msg.payload.at("t") == "payload") {
          m_payload = msg.payload.at("v");
          m_got_payload = true;
          break;
        }
      }
      if (!m_got_payload) {
        throw ProgramError("no payload arrived at the receive round");
      }
      outbox.push_back({kAllNeighbors,
                        Message{{"t", "payload"}, {"v", m_payload}}});
      return sleep_until(2 + m_label, round);
    }
    // Own send round: the payload went out during this round.
    return Action::terminate(m_payload);
  }

 private:
  static Action sleep_until(Round target, Round now) {
    if (target <= now) throw ProgramError("wake schedule went backwards");
    if (target == now + 1) return Action::stay_awake();
    return Action::sleep(target - now - 1);
  }

  NodeId m_parent = 0;
  std::int64_t m_label = 0;
  std::int64_t m_parent_label = -1;
  Message m_payload;
  bool m_got_payload = false;
};

class ConvergecastBehavior : public NodeBehavior {
 public:
  explicit ConvergecastBehavior(const NodeContext& ctx) {
    m_id = ctx.id;
    m_parent = ctx.input.at("parent").get<NodeId>();
    m_label = ctx.input.at("label").get<std::int64_t>();
    m_bound = ctx.input.at("bound").get<std::int64_t>();
    m_payload = ctx.input.at("payload");
  }

  std::vector<Outgoing> start() override {
    return {{kAllNeighbors, Message{{"t", "label"}, {"v", m_label}}}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    const Round receive_round = 2 + (m_bound - m_label);
    if (round == 1) {
      if (m_parent != 0) {
        for (const Incoming& msg : inbox) {
          if (msg.from == m_parent && msg.payload.at("t") == "label") {
            m_parent_label = msg.payload.at("v").get<std::int64_t>();
          }
        }
        if (m_parent_label < 0) {
          throw ProgramError("no label heard from parent at round 1");
        }
      }
      if (receive_round == 1) {
        throw ProgramError("label bound leaves no room for the schedule");
      }
      return sleep_until(receive_round, round);
    }
    if (round == receive_round) {
      // Children address their bundles to this node, so the whole inbox
      // belongs to this tree.
      Message items = Message::array();
      items.push_back({{"id", m_id}, {"payload", m_payload}});
      for (const Incoming& msg : inbox) {
        if (msg.payload.at("t") != "bundle") continue;
        for (const Message& item : msg.payload.at("items")) {
          items.push_back(item);
        }
      }
      if (m_parent == 0) {
        std::sort(items.begin(), items.end(),
                  [](const Message& a, const Message& b) {
                    return a.at("id").get<NodeId>() < b.at("id").get<NodeId>();
                  });
        return Action::terminate(items);
      }
      outbox.push_back(
          {m_parent, Message{{"t", "bundle"}, {"items", std::move(items)}}});
      return sleep_until(2 + (m_bound - m_parent_label), round);
    }
    // Own send round: the bundle left for the parent during this round.
    return Action::terminate(Message());
  }

 private:
  static Action sleep_until(Round target, Round now) {
    if (target <= now) throw ProgramError("wake schedule went backwards");
    if (target == now + 1) return Action::stay_awake();
    return Action::sleep(target - now - 1);
  }

  NodeId m_id = 0;
  NodeId m_parent = 0;
  std::int64_t m_label = 0;
  std::int64_t m_parent_label = -1;
  std::int64_t m_bound = 0;
  Message m_payload;
};

}  // namespace

NodeProgram make_broadcast_program() {
  return [](const NodeContext& ctx) {
    return std::make_unique<BroadcastBehavior>(ctx);
  };
}

std::vector<Message> convergecast_inputs(const Graph& g, const TreeLabeling& t,
                                         const std::vector<Message>& payloads) {
  t.validate(g);
  if (payloads.size() != g.node_count()) {
    throw std::runtime_error("payload vector size does not match graph order");
  }
  std::vector<Message> inputs(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    inputs[v] = {{"parent", t.parent[v]},
                 {"label", t.label[v]},
                 {"bound", t.bound},
                 {"payload", payloads[v]}};
  }
  return inputs;
}

NodeProgram make_convergecast_program() {
  return [](const NodeContext& ctx) {
    return std::make_unique<ConvergecastBehavior>(ctx);
  };
}

// --------------------------------------------------------------------------
// Color reduction
// --------------------------------------------------------------------------

namespace {

bool is_prime(std::int64_t x) {
  if (x < 2) return false;
  if (x < 4) return true;
  if (x % 2 == 0 || x % 3 == 0) return false;
  for (std::int64_t f = 5; f * f <= x; f += 6) {
    if (x % f == 0 || x % (f + 2) == 0) return false;
  }
  return true;
}

std::int64_t next_prime_at_least(std::int64_t x) {
  if (x < 2) x = 2;
  while (!is_prime(x)) ++x;
  return x;
}

constexpr std::int64_t kPowCap = std::int64_t{4} << 60;

// min(base^exp, kPowCap), never overflowing.
std::int64_t pow_capped(std::int64_t base, std::int64_t exp) {
  std::int64_t result = 1;
  for (std::int64_t i = 0; i < exp; ++i) {
    if (base != 0 && result > kPowCap / base) return kPowCap;
    result *= base;
  }
  return result;
}

// Smallest r with r^k >= m.
std::int64_t nth_root_ceil(std::int64_t m, std::int64_t k) {
  std::int64_t r = static_cast<std::int64_t>(
      std::pow(static_cast<double>(m), 1.0 / static_cast<double>(k)));
  while (r > 1 && pow_capped(r - 1, k) >= m) --r;
  while (pow_capped(r, k) < m) ++r;
  return r;
}

}  // namespace

std::optional<ReductionStep> reduction_step(std::int64_t palette,
                                            std::int64_t degree_bound) {
  if (palette < 2) return std::nullopt;
  if (degree_bound < 1) degree_bound = 1;
  std::optional<ReductionStep> best;
  for (std::int64_t d = 1; d < 64; ++d) {
    std::int64_t lo = std::max<std::int64_t>(degree_bound * d + 1,
                                             nth_root_ceil(palette, d + 1));
    if (best && lo * lo >= best->palette()) {
      // lo only grows with d once the degree term dominates.
      if (degree_bound * d + 1 >= lo) break;
      continue;
    }
    std::int64_t p = next_prime_at_least(lo);
    if (p >= (std::int64_t{1} << 31)) continue;  // keep arithmetic in int64
    if (pow_capped(p, d + 1) < palette) continue;
    if (!best || p * p < best->palette()) best = ReductionStep{d, p};
  }
  if (!best || best->palette() >= palette) return std::nullopt;
  return best;
}

std::vector<std::int64_t> reduction_palettes(std::int64_t palette,
                                             std::int64_t degree_bound) {
  std::vector<std::int64_t> out;
  for (;;) {
    auto step = reduction_step(palette, degree_bound);
    if (!step) break;
    palette = step->palette();
    out.push_back(palette);
  }
  return out;
}

std::int64_t reduction_fixpoint(std::int64_t palette,
                                std::int64_t degree_bound) {
  auto seq = reduction_palettes(palette, degree_bound);
  return seq.empty() ? palette : seq.back();
}

namespace {

struct ReductionPlan {
  std::vector<ReductionStep> steps;
  std::int64_t initial_palette = 0;
  std::int64_t degree_bound = 0;
  bool square_view = false;
};

std::shared_ptr<const ReductionPlan> build_plan(const LinialConfig& cfg) {
  if (cfg.initial_palette < 1) {
    throw std::runtime_error("initial palette must be positive");
  }
  auto plan = std::make_shared<ReductionPlan>();
  plan->initial_palette = cfg.initial_palette;
  plan->degree_bound = std::max<std::int64_t>(1, cfg.degree_bound);
  plan->square_view = cfg.square_view;
  std::int64_t m = cfg.initial_palette;
  for (;;) {
    auto step = reduction_step(m, plan->degree_bound);
    if (!step) break;
    plan->steps.push_back(*step);
    m = step->palette();
  }
  return plan;
}

// Evaluates the polynomial encoding of `color` at point i over GF(p).
std::int64_t poly_eval(std::int64_t color, const ReductionStep& step,
                       std::int64_t i) {
  // Coefficients are the base-p digits of color-1, degree d downwards.
  std::int64_t x = color - 1;
  std::int64_t coeffs[64];
  for (std::int64_t j = 0; j <= step.poly_degree; ++j) {
    coeffs[j] = x % step.prime;
    x /= step.prime;
  }
  std::int64_t acc = 0;
  for (std::int64_t j = step.poly_degree; j >= 0; --j) {
    acc = (acc * i + coeffs[j]) % step.prime;
  }
  return acc;
}

std::int64_t reduce_color(std::int64_t mine,
                          const std::vector<std::int64_t>& others,
                          const ReductionStep& step) {
  // Pick the first sample point of my polynomial that no conflicting
  // polynomial passes through.
  for (std::int64_t i = 0; i < step.prime; ++i) {
    std::int64_t j = poly_eval(mine, step, i);
    bool covered = false;
    for (std::int64_t other : others) {
      if (poly_eval(other, step, i) == j) {
        covered = true;
        break;
      }
    }
    if (!covered) return i * step.prime + j + 1;
  }
  throw ProgramError("no free sample point; constraint degree exceeds bound");
}

class LinialBehavior : public NodeBehavior {
 public:
  LinialBehavior(const NodeContext& ctx,
                 std::shared_ptr<const ReductionPlan> plan)
      : m_id(ctx.id), m_plan(std::move(plan)) {
    m_color = ctx.input.at("color").get<std::int64_t>();
    if (m_color < 1 || m_color > m_plan->initial_palette) {
      throw ProgramError("initial color out of range");
    }
  }

  std::vector<Outgoing> start() override {
    if (m_plan->steps.empty()) return {};
    return {{kAllNeighbors, Message{{"t", "c"}, {"v", m_color}}}};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    const std::int64_t total = static_cast<std::int64_t>(m_plan->steps.size());
    if (total == 0) return Action::terminate(Message{{"color", m_color}});
    if (m_plan->square_view && round % 2 == 1) {
      // Relay hop: forward the colors heard from direct neighbors.
      Message items = Message::array();
      for (const Incoming& msg : inbox) {
        collect(msg.from, msg.payload.at("v").get<std::int64_t>());
        items.push_back({msg.from, msg.payload.at("v").get<std::int64_t>()});
      }
      outbox.push_back(
          {kAllNeighbors, Message{{"t", "relay"}, {"items", std::move(items)}}});
      return Action::stay_awake();
    }
    // Reduction hop.
    for (const Incoming& msg : inbox) {
      if (msg.payload.at("t") == "c") {
        collect(msg.from, msg.payload.at("v").get<std::int64_t>());
      } else {
        for (const Message& item : msg.payload.at("items")) {
          collect(item.at(0).get<NodeId>(), item.at(1).get<std::int64_t>());
        }
      }
    }
    std::int64_t iteration =
        m_plan->square_view ? round / 2 : round;  // 1-based
    std::vector<std::int64_t> others;
    others.reserve(m_conflicts.size());
    for (const auto& [id, color] : m_conflicts) {
      if (id == m_id) continue;
      if (color == m_color) {
        throw ProgramError("input coloring is improper: node " +
                           std::to_string(id) + " shares color " +
                           std::to_string(m_color));
      }
      others.push_back(color);
    }
    if (static_cast<std::int64_t>(others.size()) > m_plan->degree_bound) {
      throw ProgramError("constraint degree exceeds the configured bound");
    }
    const ReductionStep& step =
        m_plan->steps[static_cast<std::size_t>(iteration - 1)];
    m_color = reduce_color(m_color, others, step);
    m_conflicts.clear();
    if (iteration == total) return Action::terminate(Message{{"color", m_color}});
    outbox.push_back({kAllNeighbors, Message{{"t", "c"}, {"v", m_color}}});
    return Action::stay_awake();
  }

 private:
  void collect(NodeId id, std::int64_t color) {
    if (id != m_id) m_conflicts.emplace(id, color);
  }

  NodeId m_id;
  std::shared_ptr<const ReductionPlan> m_plan;
  std::int64_t m_color = 0;
  std::map<NodeId, std::int64_t> m_conflicts;
};

}  // namespace

NodeProgram make_linial_program(const LinialConfig& cfg) {
  auto plan = build_plan(cfg);
  return [plan](const NodeContext& ctx) {
    return std::make_unique<LinialBehavior>(ctx, plan);
  };
}

Round linial_rounds(const LinialConfig& cfg) {
  auto plan = build_plan(cfg);
  if (plan->steps.empty()) return 1;
  auto t = static_cast<Round>(plan->steps.size());
  return cfg.square_view ? 2 * t : t;
}

std::int64_t linial_final_palette(const LinialConfig& cfg) {
  auto plan = build_plan(cfg);
  return plan->steps.empty() ? cfg.initial_palette
                             : plan->steps.back().palette();
}

}  // namespace sleepsim
