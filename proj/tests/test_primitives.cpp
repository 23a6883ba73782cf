#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "sleepsim/engine.hpp"
#include "sleepsim/graph.hpp"
#include "sleepsim/primitives.hpp"
#include "sleepsim/rng.hpp"
#include "util.hpp"

using namespace sleepsim;

TEST_CASE("ceil_pow2") {
  CHECK(ceil_pow2(1) == 1);
  CHECK(ceil_pow2(2) == 2);
  CHECK(ceil_pow2(3) == 4);
  CHECK(ceil_pow2(5) == 8);
  CHECK(ceil_pow2(8) == 8);
  CHECK(ceil_pow2(1000) == 1024);
  CHECK_THROWS(ceil_pow2(0));
}

TEST_CASE("color schedule matches the worked q=8 example") {
  auto s = ColorSchedule::build(8);
  CHECK(s.palette() == 8);
  CHECK(s.decide_round(2) == 3);
  CHECK(s.rounds(2) == std::vector<std::int64_t>{2, 3, 4, 8});
  CHECK(s.decide_round(4) == 7);
  CHECK(s.rounds(4) == std::vector<std::int64_t>{4, 6, 7, 8});
  CHECK(s.rounds_before_decide(4) == std::vector<std::int64_t>{4, 6});
  CHECK(s.rounds_after_decide(4) == std::vector<std::int64_t>{8});
  CHECK(s.rounds(1) == std::vector<std::int64_t>{1, 2, 4, 8});
  CHECK(s.rounds(8) == std::vector<std::int64_t>{8, 12, 14, 15});
}

TEST_CASE("color schedule invariants for all powers of two up to 1024") {
  for (std::int64_t q = 1; q <= 1024; q *= 2) {
    auto s = ColorSchedule::build(q);
    std::int64_t expected_len = 1;
    for (std::int64_t x = q; x > 1; x /= 2) ++expected_len;
    for (std::int64_t c = 1; c <= q; ++c) {
      const auto& r = s.rounds(c);
      // Wake list is sorted, contains the decision round, has length 1+log2 q.
      REQUIRE(std::is_sorted(r.begin(), r.end()));
      REQUIRE(static_cast<std::int64_t>(r.size()) == expected_len);
      REQUIRE(std::count(r.begin(), r.end(), s.decide_round(c)) == 1);
      REQUIRE(r.front() >= 1);
      REQUIRE(r.back() <= 2 * q - 1);
    }
    // Any two colors share a round where the earlier-deciding one has already
    // decided: the fork label sits on both wake lists, at or after min
    // decision and at or before... exactly the meet of the two wake paths.
    for (std::int64_t c1 = 1; c1 <= q; ++c1) {
      for (std::int64_t c2 = c1 + 1; c2 <= q; ++c2) {
        std::int64_t w = s.fork_label(c1, c2);
        const auto& r1 = s.rounds(c1);
        const auto& r2 = s.rounds(c2);
        REQUIRE(std::count(r1.begin(), r1.end(), w) == 1);
        REQUIRE(std::count(r2.begin(), r2.end(), w) == 1);
        REQUIRE(w >= s.decide_round(c1));  // c1 < c2 decides first
        REQUIRE(w <= s.decide_round(c2));
      }
    }
  }
}

TEST_CASE("schedule listening suffices: lower colors are heard before deciding") {
  // For c1 < c2, the fork round is one of c1's post-decision send rounds and
  // one of c2's pre-decision listen rounds (or c2's own decision round).
  auto s = ColorSchedule::build(64);
  for (std::int64_t c1 = 1; c1 <= 64; ++c1) {
    for (std::int64_t c2 = c1 + 1; c2 <= 64; ++c2) {
      std::int64_t w = s.fork_label(c1, c2);
      auto after1 = s.rounds_after_decide(c1);
      auto before2 = s.rounds_before_decide(c2);
      bool sent = w == s.decide_round(c1) ||
                  std::count(after1.begin(), after1.end(), w) == 1;
      bool heard = w == s.decide_round(c2) ||
                   std::count(before2.begin(), before2.end(), w) == 1;
      REQUIRE(sent);
      REQUIRE(heard);
    }
  }
}

namespace {

// Random labeled spanning forest over g: BFS trees from random roots, with
// labels assigned so that every child label exceeds its parent label.
TreeLabeling random_forest(const Graph& g, Rng& rng, std::int64_t bound_slack) {
  TreeLabeling t;
  const NodeIndex n = g.node_count();
  t.parent.assign(n, 0);
  t.label.assign(n, 0);
  std::vector<NodeIndex> order(n);
  for (NodeIndex v = 0; v < n; ++v) order[v] = v;
  rng.shuffle(order);
  std::vector<char> seen(n, 0);
  std::int64_t next_label = 1;
  for (NodeIndex root : order) {
    if (seen[root]) continue;
    seen[root] = 1;
    t.label[root] = next_label;
    next_label += 1 + rng.below(static_cast<std::uint64_t>(bound_slack) + 1);
    std::vector<NodeIndex> frontier{root};
    while (!frontier.empty()) {
      std::vector<NodeIndex> next;
      for (NodeIndex u : frontier) {
        for (NodeIndex w : g.neighbors(u)) {
          if (seen[w]) continue;
          seen[w] = 1;
          t.parent[w] = g.id_of(u);
          t.label[w] = next_label;
          next_label += 1 + rng.below(static_cast<std::uint64_t>(bound_slack) + 1);
          next.push_back(w);
        }
      }
      frontier = std::move(next);
    }
  }
  t.bound = next_label - 1 + static_cast<std::int64_t>(rng.below(3));
  return t;
}

}  // namespace

TEST_CASE("broadcast delivers the payload with three awake rounds") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(seed * 77);
    GraphFamily fam;
    fam.kind = seed % 2 ? FamilyKind::tree : FamilyKind::gnp;
    fam.n = 20 + seed * 7;
    fam.seed = seed;
    fam.p = 0.15;
    Graph g = generate(fam);
    auto t = random_forest(g, rng, seed % 3);
    Message payload = {{"msg", "hello"}, {"k", seed}};
    auto res = run(g, make_broadcast_program(), broadcast_inputs(g, t, payload),
                   RunOptions{});
    CHECK(res.metrics.max_round <= t.bound + 2);
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      CHECK(res.outputs[v] == payload);
      if (t.parent[v] == 0) {
        CHECK(res.metrics.node[v].awake_rounds == 2);
      } else {
        CHECK(res.metrics.node[v].awake_rounds == 3);
      }
      CHECK(res.metrics.node[v].termination_round == 2 + t.label[v]);
    }
  }
}

TEST_CASE("broadcast on a three-node path matches the worked schedule") {
  // r(1) - a(2) - b(3): r awake {1,3}, a awake {1,3,4}, b awake {1,4,5}.
  Graph g({1, 2, 3}, {{0, 1}, {1, 2}});
  TreeLabeling t;
  t.parent = {0, 1, 2};
  t.label = {1, 2, 3};
  t.bound = 3;
  auto res = run(g, make_broadcast_program(),
                 broadcast_inputs(g, t, Message("x")), RunOptions{});
  CHECK(res.metrics.max_round == 5);
  CHECK(res.metrics.node[0].awake_rounds == 2);
  CHECK(res.metrics.node[1].awake_rounds == 3);
  CHECK(res.metrics.node[2].awake_rounds == 3);
  CHECK(res.metrics.node[0].termination_round == 3);
  CHECK(res.metrics.node[1].termination_round == 4);
  CHECK(res.metrics.node[2].termination_round == 5);
}

TEST_CASE("convergecast gathers every payload at the root") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    Rng rng(seed * 131);
    GraphFamily fam;
    fam.kind = seed % 2 ? FamilyKind::tree : FamilyKind::gnp;
    fam.n = 15 + seed * 5;
    fam.seed = seed + 50;
    fam.p = 0.2;
    Graph g = generate(fam);
    auto t = random_forest(g, rng, seed % 2);
    std::vector<Message> payloads(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      payloads[v] = Message{{"v", g.id_of(v) * 10}};
    }
    auto res = run(g, make_convergecast_program(),
                   convergecast_inputs(g, t, payloads), RunOptions{});
    CHECK(res.metrics.max_round <= t.bound + 2);

    // Identify each node's root by walking parents.
    std::vector<NodeIndex> root(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      NodeIndex cur = v;
      while (t.parent[cur] != 0) cur = g.index_of(t.parent[cur]);
      root[v] = cur;
    }
    std::map<NodeIndex, std::set<NodeId>> members;
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      members[root[v]].insert(g.id_of(v));
    }
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      if (t.parent[v] != 0) {
        CHECK(res.outputs[v].is_null());
        CHECK(res.metrics.node[v].awake_rounds == 3);
        continue;
      }
      CHECK(res.metrics.node[v].awake_rounds == 2);
      const Message& items = res.outputs[v];
      REQUIRE(items.is_array());
      REQUIRE(items.size() == members[v].size());
      NodeId prev = 0;
      for (const auto& item : items) {
        NodeId id = item.at("id").get<NodeId>();
        CHECK(id > prev);  // sorted ascending by id
        prev = id;
        CHECK(members[v].count(id) == 1);
        CHECK(item.at("payload") == Message{{"v", id * 10}});
      }
    }
  }
}

TEST_CASE("labeling validation rejects bad inputs") {
  Graph g({1, 2, 3}, {{0, 1}, {1, 2}});
  TreeLabeling t;
  t.parent = {0, 1, 2};
  t.label = {1, 2, 3};
  t.bound = 3;
  CHECK_NOTHROW(t.validate(g));
  auto bad = t;
  bad.label = {2, 2, 3};  // child label equals parent label
  CHECK_THROWS(bad.validate(g));
  bad = t;
  bad.parent = {0, 3, 2};  // node 2's parent is not a neighbor
  CHECK_THROWS(bad.validate(g));
  bad = t;
  bad.bound = 2;  // label 3 exceeds the bound
  CHECK_THROWS(bad.validate(g));
}

TEST_CASE("reduction steps shrink the palette and respect the degree bound") {
  for (std::int64_t deg = 1; deg <= 12; ++deg) {
    std::int64_t limit = 9 * deg * deg;
    for (std::int64_t m : {10, 100, 1000, 100000, 10000000}) {
      if (m <= limit) continue;
      auto seq = reduction_palettes(m, deg);
      REQUIRE(!seq.empty());
      std::int64_t prev = m;
      for (std::int64_t pal : seq) {
        REQUIRE(pal < prev);
        prev = pal;
      }
      // Fixpoint within the pinned factor of 9.
      REQUIRE(seq.back() <= limit);
      // Iterated-logarithm style convergence: the chain is short.
      REQUIRE(seq.size() <= 12);
    }
  }
  // A single step from a huge palette already lands near the degree bound:
  // the map m -> O((deg * log m / log(deg * log m))^2) collapses fast.
  auto one = reduction_step(std::int64_t{1} << 40, 4);
  REQUIRE(one.has_value());
  CHECK(one->palette() < 10000);
}

TEST_CASE("reduction fixpoints stay within nine times the squared degree") {
  for (std::int64_t deg = 1; deg <= 40; ++deg) {
    std::int64_t fp = reduction_fixpoint(std::int64_t{1} << 40, deg);
    CHECK(fp <= 9 * deg * deg);
  }
}

namespace {

std::vector<Message> color_inputs(const std::vector<std::int64_t>& colors) {
  std::vector<Message> inputs(colors.size());
  for (std::size_t i = 0; i < colors.size(); ++i) {
    inputs[i] = {{"color", colors[i]}};
  }
  return inputs;
}

bool proper(const Graph& g, const std::vector<std::int64_t>& colors) {
  for (const auto& [u, v] : g.edges()) {
    if (colors[u] == colors[v]) return false;
  }
  return true;
}

bool proper_at_distance_two(const Graph& g,
                            const std::vector<std::int64_t>& colors) {
  Graph sq = square(g);
  for (const auto& [u, v] : sq.edges()) {
    NodeIndex a = g.index_of(sq.id_of(u));
    NodeIndex b = g.index_of(sq.id_of(v));
    if (colors[a] == colors[b]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("direct-view recoloring produces a small proper coloring") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    GraphFamily fam;
    fam.kind = seed % 2 ? FamilyKind::gnp : FamilyKind::regular;
    fam.n = 60;
    fam.seed = seed;
    fam.p = 0.08;
    fam.degree = 4;
    fam.id_exponent = 2;  // ids sampled from {1..n^2}
    Graph g = generate(fam);
    std::int64_t degree_bound = std::max<std::int64_t>(1, g.max_degree());

    LinialConfig cfg;
    cfg.initial_palette = 60 * 60;
    cfg.degree_bound = degree_bound;
    cfg.square_view = false;

    std::vector<std::int64_t> initial(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      initial[v] = static_cast<std::int64_t>(g.id_of(v));
    }
    REQUIRE(proper(g, initial));

    auto res = run(g, make_linial_program(cfg), color_inputs(initial),
                   RunOptions{});
    std::vector<std::int64_t> out(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      out[v] = res.outputs[v].at("color").get<std::int64_t>();
      CHECK(out[v] >= 1);
      CHECK(out[v] <= linial_final_palette(cfg));
    }
    CHECK(proper(g, out));
    CHECK(linial_final_palette(cfg) <= 9 * degree_bound * degree_bound);
    CHECK(res.metrics.max_round == linial_rounds(cfg));
    for (const auto& nm : res.metrics.node) {
      CHECK(nm.awake_rounds == linial_rounds(cfg));
    }
  }
}

TEST_CASE("path recoloring lands within the pinned factor") {
  GraphFamily fam;
  fam.kind = FamilyKind::path;
  fam.n = 100;
  fam.seed = 3;
  Graph g = generate(fam);
  LinialConfig cfg;
  cfg.initial_palette = 100;
  cfg.degree_bound = 2;
  std::vector<std::int64_t> initial(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    initial[v] = static_cast<std::int64_t>(g.id_of(v));
  }
  auto res = run(g, make_linial_program(cfg), color_inputs(initial),
                 RunOptions{});
  std::vector<std::int64_t> out(g.node_count());
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    out[v] = res.outputs[v].at("color").get<std::int64_t>();
  }
  CHECK(proper(g, out));
  std::set<std::int64_t> distinct(out.begin(), out.end());
  CHECK(static_cast<std::int64_t>(distinct.size()) <= 9 * 2 * 2);
}

TEST_CASE("square-view recoloring separates nodes at distance two") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    GraphFamily fam;
    fam.kind = FamilyKind::gnp;
    fam.n = 40;
    fam.seed = seed + 9;
    fam.p = 0.07;
    Graph g = generate(fam);
    Graph sq = square(g);
    std::int64_t sq_degree = 0;
    for (NodeIndex v = 0; v < sq.node_count(); ++v) {
      sq_degree = std::max<std::int64_t>(
          sq_degree, static_cast<std::int64_t>(sq.neighbors(v).size()));
    }
    LinialConfig cfg;
    cfg.initial_palette = 40;
    cfg.degree_bound = std::max<std::int64_t>(1, sq_degree);
    cfg.square_view = true;

    std::vector<std::int64_t> initial(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      initial[v] = static_cast<std::int64_t>(g.id_of(v));
    }
    auto res = run(g, make_linial_program(cfg), color_inputs(initial),
                   RunOptions{});
    std::vector<std::int64_t> out(g.node_count());
    for (NodeIndex v = 0; v < g.node_count(); ++v) {
      out[v] = res.outputs[v].at("color").get<std::int64_t>();
      CHECK(out[v] <= linial_final_palette(cfg));
    }
    CHECK(proper_at_distance_two(g, out));
    CHECK(res.metrics.max_round == linial_rounds(cfg));
  }
}

TEST_CASE("recoloring rejects an improper input coloring") {
  Graph g({1, 2}, {{0, 1}});
  LinialConfig cfg;
  cfg.initial_palette = 50;
  cfg.degree_bound = 1;
  CHECK_THROWS_AS(run(g, make_linial_program(cfg), color_inputs({7, 7}),
                      RunOptions{}),
                  EngineError);
}

TEST_CASE("recoloring rejects a coloring that violates the degree bound") {
  Graph g({1, 2, 3, 4}, {{0, 1}, {0, 2}, {0, 3}});
  LinialConfig cfg;
  cfg.initial_palette = 50;
  cfg.degree_bound = 1;  // the star center hears three distinct colors
  CHECK_THROWS_AS(run(g, make_linial_program(cfg), color_inputs({1, 2, 3, 4}),
                      RunOptions{}),
                  EngineError);
}

TEST_CASE("trivial palette terminates immediately") {
  Graph g({1, 2}, {});
  LinialConfig cfg;
  cfg.initial_palette = 1;
  cfg.degree_bound = 1;
  CHECK(linial_rounds(cfg) == 1);
  auto res = run(g, make_linial_program(cfg), color_inputs({1, 1}),
                 RunOptions{});
  CHECK(res.outputs[0].at("color") == 1);
  CHECK(res.metrics.max_round == 1);
}
