#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"

namespace sleepsim {

// ---------------------------------------------------------------------------
// Wake-schedule mapping for color classes.
//
// For a power of two q, colors {1..q} are mapped onto the leaves of the
// complete binary tree whose 2q-1 vertices are labeled by in-order traversal.
// phi(c) is the label of the c-th leaf; rounds(c) is the set of labels on the
// root-to-leaf path. Guarantees, for any c1 != c2:
//   - |rounds(c)| = 1 + log2(q), phi(c) in rounds(c)
//   - some x in rounds(c1) & rounds(c2) has min(phi) < x < max(phi)
// ---------------------------------------------------------------------------
class ColorSchedule {
 public:
  static ColorSchedule build(std::int64_t q);

  std::int64_t palette() const { return m_q; }
  std::int64_t decide_round(std::int64_t c) const;  // phi(c) = 2c-1
  // Full path labels, ascending.
  const std::vector<std::int64_t>& rounds(std::int64_t c) const;
  // Path labels strictly below / above phi(c).
  std::vector<std::int64_t> rounds_before_decide(std::int64_t c) const;
  std::vector<std::int64_t> rounds_after_decide(std::int64_t c) const;

  // In-order label of the lowest common ancestor of the leaves of c1 and c2.
  // Used as the independent witness oracle in tests.
  std::int64_t fork_label(std::int64_t c1, std::int64_t c2) const;

 private:
  std::int64_t m_q = 0;
  std::vector<std::vector<std::int64_t>> m_rounds;  // by color, ascending
};

// Smallest power of two >= k.
std::int64_t ceil_pow2(std::int64_t k);

// ---------------------------------------------------------------------------
// Tree labelings and the broadcast / convergecast programs.
//
// A labeling assigns every node a label in {1..bound} strictly larger than
// its parent's label. Forests are allowed; parent 0 marks a root.
// ---------------------------------------------------------------------------
struct TreeLabeling {
  std::vector<NodeId> parent;       // by node index, 0 for roots
  std::vector<std::int64_t> label;  // by node index, in {1..bound}
  std::int64_t bound = 0;           // N

  void validate(const Graph& g) const;  // throws on violation
};

// Per-node inputs for the broadcast program. The root's payload is the
// message to disseminate; every node terminates holding it.
// Awake rounds: root 2, others 3. Termination by round bound+2.
std::vector<Message> broadcast_inputs(const Graph& g, const TreeLabeling& t,
                                      const Message& payload);
NodeProgram make_broadcast_program();

// Per-node inputs for the convergecast program. Every node contributes its
// payload; each root terminates holding the id-sorted list of (id, payload)
// pairs of its tree, other nodes output null.
// Awake rounds: root 2, others 3. Termination by round bound+2.
std::vector<Message> convergecast_inputs(const Graph& g, const TreeLabeling& t,
                                         const std::vector<Message>& payloads);
NodeProgram make_convergecast_program();

// ---------------------------------------------------------------------------
// Iterated one-round color reduction.
//
// One round maps a proper m-coloring of the constraint graph to a proper
// p*p-coloring, where p is the smallest viable prime for a degree-d
// polynomial family over GF(p) with p > degree_bound*d and p^(d+1) >= m.
// Rounds repeat until no parameter choice shrinks the palette.
// ---------------------------------------------------------------------------
struct ReductionStep {
  std::int64_t poly_degree = 0;  // d
  std::int64_t prime = 0;        // p
  std::int64_t palette() const { return prime * prime; }
};

// Best single-round step, or nullopt when m is already at the fixpoint.
std::optional<ReductionStep> reduction_step(std::int64_t palette,
                                            std::int64_t degree_bound);
// Palette after each round, ending at the fixpoint.
std::vector<std::int64_t> reduction_palettes(std::int64_t palette,
                                             std::int64_t degree_bound);
std::int64_t reduction_fixpoint(std::int64_t palette,
                                std::int64_t degree_bound);

struct LinialConfig {
  std::int64_t initial_palette = 0;  // m; inputs carry colors in {1..m}
  std::int64_t degree_bound = 0;     // max degree of the constraint graph
  bool square_view = false;  // constrain against two-hop neighborhoods
};

// Node input: {"color": c}. Output: {"color": c'}. All nodes stay awake for
// linial_rounds(cfg) rounds and terminate together.
NodeProgram make_linial_program(const LinialConfig& cfg);
Round linial_rounds(const LinialConfig& cfg);
std::int64_t linial_final_palette(const LinialConfig& cfg);

}  // namespace sleepsim
