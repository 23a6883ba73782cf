#pragma once

// Shared helpers for the test binaries.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"
#include "sleepsim/rng.hpp"

namespace sleepsim::testutil {

// Behavior assembled from plain functions, for small ad-hoc programs.
class FnBehavior : public NodeBehavior {
 public:
  using StartFn = std::function<std::vector<Outgoing>(const NodeContext&)>;
  using WakeFn = std::function<Action(const NodeContext&, Round,
                                      const std::vector<Incoming>&,
                                      std::vector<Outgoing>&)>;

  FnBehavior(NodeContext ctx, StartFn start, WakeFn wake)
      : m_ctx(std::move(ctx)), m_start(std::move(start)),
        m_wake(std::move(wake)) {}

  std::vector<Outgoing> start() override {
    return m_start ? m_start(m_ctx) : std::vector<Outgoing>{};
  }

  Action on_wake(Round round, const std::vector<Incoming>& inbox,
                 std::vector<Outgoing>& outbox) override {
    return m_wake(m_ctx, round, inbox, outbox);
  }

 private:
  NodeContext m_ctx;
  StartFn m_start;
  WakeFn m_wake;
};

inline NodeProgram make_program(FnBehavior::StartFn start,
                                FnBehavior::WakeFn wake) {
  return [start = std::move(start), wake = std::move(wake)](
             const NodeContext& ctx) {
    return std::make_unique<FnBehavior>(ctx, start, wake);
  };
}

// Seeded pseudo-random program for differential engine testing. Every
// decision is a pure function of (seed, node id, wake count), so repeated
// runs are identical.
inline NodeProgram random_program(std::uint64_t seed) {
  auto wake = [seed](const NodeContext& ctx, Round round,
                     const std::vector<Incoming>& inbox,
                     std::vector<Outgoing>& outbox) -> Action {
    // Per-node running digest lives in the payloads themselves, so behaviors
    // can stay stateless here: fold the inbox into a digest value.
    static thread_local std::uint64_t scratch;  // unused, silences lints
    (void)scratch;
    std::uint64_t mix = seed ^ (ctx.id * 0x9e3779b97f4a7c15ULL) ^
                        (static_cast<std::uint64_t>(round) << 32);
    Rng rng(mix);
    std::uint64_t digest = 0;
    for (const Incoming& msg : inbox) {
      digest = digest * 31 + msg.from * 7 +
               msg.payload.value("v", std::uint64_t{0});
    }
    std::uint64_t wakes_cap = 3 + (seed ^ ctx.id) % 5;
    // Without per-behavior state, use the round as a proxy for progress.
    if (static_cast<std::uint64_t>(round) >= wakes_cap * 3 + ctx.id % 3) {
      return Action::terminate({{"digest", digest}, {"round", round}});
    }
    std::uint64_t roll = rng.below(10);
    if (roll < 6) {
      outbox.push_back({kAllNeighbors, {{"v", rng.below(1000)}}});
    } else if (roll < 8 && !inbox.empty()) {
      const Incoming& pick = inbox[rng.below(inbox.size())];
      outbox.push_back({pick.from, {{"v", digest % 997}}});
    }
    std::uint64_t act = rng.below(4);
    if (act == 0) return Action::stay_awake();
    return Action::sleep(1 + static_cast<Round>(rng.below(4)));
  };
  auto start = [](const NodeContext& ctx) {
    return std::vector<Outgoing>{{kAllNeighbors, {{"v", ctx.id % 100}}}};
  };
  return make_program(start, wake);
}

}  // namespace sleepsim::testutil
