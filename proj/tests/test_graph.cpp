#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "sleepsim/graph.hpp"

using namespace sleepsim;

namespace {

// Distance oracle used to cross-check square(): plain BFS on the original
// graph.
bool within_two_hops(const Graph& g, NodeIndex u, NodeIndex v) {
  auto dist = g.bfs_distances(u);
  return dist[v] >= 1 && dist[v] <= 2;
}

}  // namespace

TEST_CASE("path and cycle shapes") {
  Graph p = generate({FamilyKind::path, 5, 7});
  CHECK(p.node_count() == 5);
  CHECK(p.edge_count() == 4);
  CHECK(p.max_degree() == 2);

  Graph c = generate({FamilyKind::cycle, 6, 7});
  CHECK(c.edge_count() == 6);
  for (NodeIndex v = 0; v < 6; ++v) CHECK(c.degree(v) == 2);

  Graph s = generate({FamilyKind::star, 9, 7});
  CHECK(s.edge_count() == 8);
  CHECK(s.max_degree() == 8);
}

TEST_CASE("grid shape") {
  GraphFamily fam{FamilyKind::grid, 12, 0};
  fam.rows = 3;
  fam.cols = 4;
  Graph g = generate(fam);
  CHECK(g.node_count() == 12);
  // 3x4 grid: 3*3 + 2*4 = 17 edges.
  CHECK(g.edge_count() == 17);
}

TEST_CASE("tree shape is connected and acyclic") {
  Graph g = generate({FamilyKind::tree, 64, 11});
  CHECK(g.edge_count() == 63);
  auto dist = g.bfs_distances(0);
  for (NodeIndex v = 0; v < g.node_count(); ++v) CHECK(dist[v] >= 0);
}

TEST_CASE("regular family") {
  GraphFamily fam{FamilyKind::regular, 20, 3};
  fam.degree = 4;
  Graph g = generate(fam);
  for (NodeIndex v = 0; v < g.node_count(); ++v) CHECK(g.degree(v) == 4);
}

TEST_CASE("generation is deterministic in (kind, params, seed)") {
  GraphFamily fam{FamilyKind::gnp, 40, 123};
  fam.p = 0.15;
  Graph a = generate(fam);
  Graph b = generate(fam);
  std::ostringstream sa, sb;
  save_edge_list(a, sa);
  save_edge_list(b, sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.ids() == b.ids());

  fam.seed = 124;
  Graph c = generate(fam);
  std::ostringstream sc;
  save_edge_list(c, sc);
  CHECK(sa.str() != sc.str());
}

TEST_CASE("ids are a permutation of 1..n by default") {
  Graph g = generate({FamilyKind::tree, 30, 2});
  std::set<NodeId> ids(g.ids().begin(), g.ids().end());
  CHECK(ids.size() == 30);
  CHECK(*ids.begin() == 1);
  CHECK(*ids.rbegin() == 30);
}

TEST_CASE("ids can be sampled from a wider range") {
  GraphFamily fam{FamilyKind::path, 25, 5};
  fam.id_exponent = 2;
  Graph g = generate(fam);
  std::set<NodeId> ids(g.ids().begin(), g.ids().end());
  CHECK(ids.size() == 25);
  for (NodeId id : ids) {
    CHECK(id >= 1);
    CHECK(id <= 625);
  }
}

TEST_CASE("square of a path pentagon") {
  // P5 square: each node additionally reaches its distance-2 neighbors.
  Graph p = generate({FamilyKind::path, 5, 1});
  Graph sq = square(p);
  CHECK(sq.edge_count() == 7);  // 4 original + 3 distance-2 pairs
}

TEST_CASE("square matches the BFS distance oracle") {
  std::vector<GraphFamily> fams;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    GraphFamily gnp{FamilyKind::gnp, 60, seed};
    gnp.p = 0.06;
    fams.push_back(gnp);
    fams.push_back({FamilyKind::tree, 50, seed});
  }
  for (const auto& fam : fams) {
    Graph g = generate(fam);
    Graph sq = square(g);
    REQUIRE(sq.ids() == g.ids());
    for (NodeIndex u = 0; u < g.node_count(); ++u) {
      for (NodeIndex v = u + 1; v < g.node_count(); ++v) {
        CHECK(sq.adjacent(u, v) == within_two_hops(g, u, v));
      }
    }
  }
}

TEST_CASE("edge list round-trip") {
  GraphFamily fam{FamilyKind::gnp, 30, 9};
  fam.p = 0.2;
  Graph g = generate(fam);
  std::ostringstream out;
  save_edge_list(g, out);
  std::istringstream in(out.str());
  Graph back = load_edge_list(in);
  CHECK(back.node_count() == g.node_count());
  CHECK(back.edge_count() == g.edge_count());
  std::ostringstream out2;
  save_edge_list(back, out2);
  CHECK(out.str() == out2.str());
}

TEST_CASE("edge list accepts comments and blank lines") {
  std::istringstream in(
      "# a comment\n"
      "\n"
      "3 2  # header\n"
      "1 2\n"
      "# middle comment\n"
      "2 3\n");
  Graph g = load_edge_list(in);
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
}

TEST_CASE("edge list parse errors carry line numbers") {
  std::istringstream bad_edge("2 1\n1\n");
  CHECK_THROWS_WITH_AS(load_edge_list(bad_edge),
                       doctest::Contains("line 2"), std::runtime_error);

  std::istringstream self_loop("2 1\n1 1\n");
  CHECK_THROWS_WITH_AS(load_edge_list(self_loop),
                       doctest::Contains("self-loop"), std::runtime_error);

  std::istringstream wrong_count("3 2\n1 2\n");
  CHECK_THROWS_AS(load_edge_list(wrong_count), std::runtime_error);

  std::istringstream dup("2 2\n1 2\n2 1\n");
  CHECK_THROWS_WITH_AS(load_edge_list(dup), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("induced subgraph keeps ids") {
  Graph g = generate({FamilyKind::cycle, 8, 4});
  std::vector<NodeIndex> keep{0, 1, 2, 5};
  Graph sub = g.induced(keep);
  CHECK(sub.node_count() == 4);
  CHECK(sub.id_of(0) == g.id_of(0));
  // Only the 0-1 and 1-2 cycle edges survive.
  CHECK(sub.edge_count() == 2);
}
