#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sleepsim/clustering.hpp"
#include "sleepsim/graph.hpp"
#include "sleepsim/harness.hpp"
#include "sleepsim/olocal.hpp"

using namespace sleepsim;

namespace {

std::string temp_path(const std::string& name) {
  return "/tmp/sleepsim_harness_" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out);
  out << text;
}

Graph parse(const std::string& text) {
  std::istringstream in(text);
  return read_edge_list(in);
}

// gnp family sized for fast end-to-end runs.
GraphFamily small_gnp(std::uint32_t n, std::uint64_t seed, double p) {
  return {FamilyKind::gnp, n, seed, 0, 0, p, 0, 1};
}

// Keeps SLEEPSIM_EVENT_CAP out of the process environment for the scope.
struct EnvGuard {
  EnvGuard() { unsetenv("SLEEPSIM_EVENT_CAP"); }
  ~EnvGuard() { unsetenv("SLEEPSIM_EVENT_CAP"); }
};

}  // namespace

TEST_CASE("log_star counts log2 iterations to reach one") {
  CHECK(log_star(0.5) == 0);
  CHECK(log_star(1.0) == 0);
  CHECK(log_star(2.0) == 1);
  CHECK(log_star(4.0) == 2);
  CHECK(log_star(16.0) == 3);
  CHECK(log_star(65536.0) == 4);
  CHECK(log_star(4096.0) == 4);
}

TEST_CASE("edge list round-trips graphs with gaps and isolated nodes") {
  // Node 50 is isolated; ids are sparse and unordered.
  Graph g({7, 50, 3, 19}, {{0, 2}, {0, 3}, {2, 3}});
  std::ostringstream out;
  write_edge_list(out, g);
  Graph back = parse(out.str());
  CHECK(back.node_count() == 4);
  CHECK(back.ids() == g.ids());
  CHECK(back.edges() == g.edges());
  CHECK(back.degree(back.index_of(50)) == 0);

  // Serialization is canonical: writing the parsed graph reproduces the
  // bytes.
  std::ostringstream again;
  write_edge_list(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("edge list reader accepts comments and blank lines") {
  Graph g = parse(
      "# a triangle plus a spare node\n"
      "\n"
      "4 3   # counts\n"
      "10\n20\n30\n40\n"
      "10 20\n"
      "20 30  # last two\n"
      "30 10\n");
  CHECK(g.node_count() == 4);
  CHECK(g.edges().size() == 3);
  CHECK(g.adjacent(g.index_of(10), g.index_of(20)));
  CHECK(g.degree(g.index_of(40)) == 0);
}

TEST_CASE("edge list reader rejects malformed input") {
  CHECK_THROWS_WITH_AS(parse("2 1\n5\n5\n5 5\n"),
                       doctest::Contains("duplicate node id 5"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("2 1\n1\n2\n1 9\n"),
                       doctest::Contains("unlisted node id"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("3 1\n1\n2\n"),
                       doctest::Contains("ended early"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("1 0\n1\n7\n"),
                       doctest::Contains("trailing tokens"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("1 0\n0\n"),
                       doctest::Contains("ids must be positive"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("x 0\n"), doctest::Contains("cannot parse"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse("1 0\n-3\n"), doctest::Contains("cannot parse"),
                       std::runtime_error);
  // Self-loops fail in the graph constructor; a repeated edge collapses.
  CHECK_THROWS_AS(parse("2 1\n1\n2\n1 1\n"), std::runtime_error);
  CHECK(parse("2 2\n1\n2\n1 2\n2 1\n").edges().size() == 1);
}

TEST_CASE("experiment config round-trips through json") {
  ExperimentConfig cfg;
  cfg.family = {FamilyKind::grid, 12, 9, 3, 4, 0.0, 0, 2};
  cfg.algorithm = "solve-mis";
  cfg.threshold_override = 4;
  cfg.ids_as_distance2 = true;
  cfg.event_cap = 1234;
  cfg.record_trace = true;
  cfg.repetitions = 3;
  cfg.sweep = {8, 16, 32};
  cfg.out_clustering = "c.json";
  cfg.out_solution = "s.json";
  cfg.out_metrics = "m.json";
  cfg.out_trace = "t.jsonl";
  cfg.out_csv = "rows.csv";
  cfg.out_graph = "g.el";

  ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.family.kind == FamilyKind::grid);
  CHECK(back.family.rows == 3);
  CHECK(back.family.id_exponent == 2);
  CHECK(back.sweep == cfg.sweep);
  CHECK(back.out_graph == "g.el");
}

TEST_CASE("experiment config rejects unknown keys") {
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(Message{{"algoritm", "cluster"}}),
      doctest::Contains("unknown config key 'algoritm'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(
          Message{{"family", Message{{"size", 10}}}}),
      doctest::Contains("unknown config key 'family.size'"),
      std::runtime_error);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(Message::array()),
                       doctest::Contains("must be a json object"),
                       std::runtime_error);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json(Message{{"family", Message{{"kind", "blob"}}}}),
      std::runtime_error);
}

TEST_CASE("metrics rows format exactly") {
  CHECK(MetricsRow::csv_header() ==
        "n,delta,family,seed,algorithm,max_awake,mean_awake,max_round,"
        "distinct_colors,valid");
  MetricsRow row;
  row.n = 64;
  row.delta = 7;
  row.family = "gnp";
  row.seed = 3;
  row.algorithm = "cluster";
  row.max_awake = 36;
  row.mean_awake = 12.5;
  row.max_round = 480745;
  row.distinct_colors = 9;
  row.valid = true;
  CHECK(row.csv_line() == "64,7,gnp,3,cluster,36,12.500000,480745,9,1");
  row.valid = false;
  row.mean_awake = 1.0 / 3.0;
  CHECK(row.csv_line() == "64,7,gnp,3,cluster,36,0.333333,480745,9,0");
  CHECK(to_csv({}) == MetricsRow::csv_header() + "\n");
  CHECK(to_csv({row}) == MetricsRow::csv_header() + "\n" + row.csv_line() + "\n");
}

TEST_CASE("effective event cap prefers the environment variable") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.event_cap = 500;
  CHECK(effective_event_cap(cfg) == 500);
  setenv("SLEEPSIM_EVENT_CAP", "77", 1);
  CHECK(effective_event_cap(cfg) == 77);
  setenv("SLEEPSIM_EVENT_CAP", "", 1);
  CHECK(effective_event_cap(cfg) == 500);
  setenv("SLEEPSIM_EVENT_CAP", "lots", 1);
  CHECK_THROWS_WITH_AS(effective_event_cap(cfg),
                       doctest::Contains("SLEEPSIM_EVENT_CAP"),
                       std::runtime_error);
}

TEST_CASE("cluster command runs, validates, and writes artifacts") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = small_gnp(40, 11, 0.08);
  cfg.algorithm = "cluster";
  cfg.repetitions = 2;
  cfg.out_clustering = temp_path("c.json");
  cfg.out_metrics = temp_path("m.json");
  cfg.out_graph = temp_path("g.el");

  CommandOutcome out = cmd_cluster(cfg);
  CHECK(out.exit_code == kExitOk);
  REQUIRE(out.rows.size() == 2);
  CHECK(out.rows[0].seed == 11);
  CHECK(out.rows[1].seed == 12);
  for (const MetricsRow& row : out.rows) {
    CHECK(row.n == 40);
    CHECK(row.family == "gnp");
    CHECK(row.algorithm == "cluster");
    CHECK(row.valid);
    CHECK(row.max_awake > 0);
    CHECK(row.distinct_colors >= 1);
  }
  CHECK(out.report.at("ok").get<bool>());
  CHECK(out.message.find("cluster n=40 seed=11") != std::string::npos);

  // The stored artifacts satisfy the offline verifier.
  VerifyConfig vc;
  vc.graph_file = cfg.out_graph;
  vc.clustering_file = cfg.out_clustering;
  CommandOutcome ver = cmd_verify(vc);
  CHECK(ver.exit_code == kExitOk);
  CHECK(ver.report.at("ok").get<bool>());

  // Artifacts and rows are deterministic functions of the config.
  const std::string c1 = slurp(cfg.out_clustering);
  const std::string g1 = slurp(cfg.out_graph);
  const std::string m1 = slurp(cfg.out_metrics);
  CommandOutcome rerun = cmd_cluster(cfg);
  CHECK(slurp(cfg.out_clustering) == c1);
  CHECK(slurp(cfg.out_graph) == g1);
  CHECK(slurp(cfg.out_metrics) == m1);
  CHECK(to_csv(rerun.rows) == to_csv(out.rows));

  // The metrics artifact parses as json.
  Message metrics;
  std::istringstream min(m1);
  min >> metrics;
  CHECK(metrics.contains("max_awake"));
}

TEST_CASE("cluster command reports a tampered clustering as invalid") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = small_gnp(30, 4, 0.1);
  cfg.out_clustering = temp_path("tamper.json");
  cfg.out_graph = temp_path("tamper.el");
  CommandOutcome out = cmd_cluster(cfg);
  REQUIRE(out.exit_code == kExitOk);

  Message j;
  {
    std::istringstream in(slurp(cfg.out_clustering));
    in >> j;
  }
  j.begin().value()["delta"] = 99;
  spit(cfg.out_clustering, j.dump(2) + "\n");

  VerifyConfig vc;
  vc.graph_file = cfg.out_graph;
  vc.clustering_file = cfg.out_clustering;
  CommandOutcome ver = cmd_verify(vc);
  CHECK(ver.exit_code == kExitValidationFailure);
  CHECK_FALSE(ver.report.at("ok").get<bool>());
  CHECK_FALSE(ver.report.at("clustering").at("violations").empty());
  CHECK(ver.message.find("clustering:") != std::string::npos);
}

TEST_CASE("solve command colors a complete graph from a file") {
  EnvGuard guard;
  // K5 with scattered ids, via the file path so the family column is "file".
  Graph k5({2, 4, 8, 16, 32},
           {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4},
            {2, 3}, {2, 4}, {3, 4}});
  const std::string path = temp_path("k5.el");
  write_edge_list_file(path, k5);

  ExperimentConfig cfg;
  cfg.graph_file = path;
  cfg.algorithm = "solve-coloring";
  cfg.out_solution = temp_path("k5_solution.json");
  CommandOutcome out = cmd_solve(cfg);
  CHECK(out.exit_code == kExitOk);
  REQUIRE(out.rows.size() == 1);
  CHECK(out.rows[0].family == "file");
  CHECK(out.rows[0].valid);
  // K5 needs all five colors and the greedy bound allows no more.
  CHECK(out.rows[0].distinct_colors == 5);

  Message sol;
  {
    std::istringstream in(slurp(cfg.out_solution));
    in >> sol;
  }
  REQUIRE(sol.size() == 5);
  std::set<std::int64_t> seen;
  for (const auto& [id, label] : sol.items()) {
    seen.insert(label.get<std::int64_t>());
  }
  CHECK(seen == std::set<std::int64_t>{1, 2, 3, 4, 5});

  VerifyConfig vc;
  vc.graph_file = path;
  vc.solution_file = cfg.out_solution;
  CommandOutcome ver = cmd_verify(vc);
  CHECK(ver.exit_code == kExitOk);
  CHECK(ver.report.at("ok").get<bool>());
}

TEST_CASE("solve command puts every isolated node in the independent set") {
  EnvGuard guard;
  Graph edgeless({1, 2, 3, 4, 5, 6}, {});
  const std::string path = temp_path("edgeless.el");
  write_edge_list_file(path, edgeless);

  ExperimentConfig cfg;
  cfg.graph_file = path;
  cfg.algorithm = "solve-mis";
  cfg.out_solution = temp_path("edgeless_solution.json");
  CommandOutcome out = cmd_solve(cfg);
  CHECK(out.exit_code == kExitOk);
  CHECK(out.rows[0].valid);
  CHECK(out.rows[0].distinct_colors == 0);

  Message sol;
  {
    std::istringstream in(slurp(cfg.out_solution));
    in >> sol;
  }
  REQUIRE(sol.size() == 6);
  for (const auto& [id, label] : sol.items()) CHECK(label.get<bool>());
}

TEST_CASE("solve command rejects a non-solver algorithm name") {
  ExperimentConfig cfg;
  cfg.family = small_gnp(10, 1, 0.2);
  cfg.algorithm = "cluster";
  CHECK_THROWS_WITH_AS(cmd_solve(cfg), doctest::Contains("not a solve rule"),
                       std::runtime_error);
  cfg.repetitions = 0;
  CHECK_THROWS_WITH_AS(cmd_cluster(cfg),
                       doctest::Contains("repetitions must be at least 1"),
                       std::runtime_error);
}

TEST_CASE("bench sweeps n values into sorted deterministic rows") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = small_gnp(0, 5, 0.1);
  cfg.algorithm = "cluster";
  cfg.sweep = {24, 12};
  cfg.repetitions = 2;
  cfg.out_csv = temp_path("bench.csv");

  CommandOutcome out = cmd_bench(cfg);
  CHECK(out.exit_code == kExitOk);
  REQUIRE(out.rows.size() == 4);
  CHECK(out.rows[0].n == 12);
  CHECK(out.rows[0].seed == 5);
  CHECK(out.rows[1].n == 12);
  CHECK(out.rows[1].seed == 6);
  CHECK(out.rows[2].n == 24);
  CHECK(out.rows[3].n == 24);
  for (const MetricsRow& row : out.rows) CHECK(row.valid);
  CHECK(out.message.find("awake/(sqrt(log2 n)*(log* n+1))=") !=
        std::string::npos);

  const std::string csv = slurp(cfg.out_csv);
  CHECK(csv == to_csv(out.rows));
  CHECK(csv.compare(0, MetricsRow::csv_header().size(),
                    MetricsRow::csv_header()) == 0);

  CommandOutcome rerun = cmd_bench(cfg);
  CHECK(slurp(cfg.out_csv) == csv);
  CHECK(rerun.message == out.message);
}

TEST_CASE("bench with an empty sweep emits only the header") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.algorithm = "cluster";
  cfg.out_csv = temp_path("empty.csv");
  CommandOutcome out = cmd_bench(cfg);
  CHECK(out.exit_code == kExitOk);
  CHECK(out.rows.empty());
  CHECK(out.message.empty());
  CHECK(slurp(cfg.out_csv) == MetricsRow::csv_header() + "\n");
}

TEST_CASE("bench primitives keep every node awake at most three rounds") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = {FamilyKind::tree, 0, 2, 0, 0, 0.0, 0, 1};
  cfg.algorithm = "primitives";
  cfg.sweep = {16, 33};
  CommandOutcome out = cmd_bench(cfg);
  CHECK(out.exit_code == kExitOk);
  REQUIRE(out.rows.size() == 2);
  for (const MetricsRow& row : out.rows) {
    CHECK(row.valid);
    CHECK(row.algorithm == "primitives");
    CHECK(row.max_awake <= 3);
    CHECK(row.distinct_colors == 0);
    // Broadcast and convergecast finish within the label bound plus two.
    CHECK(row.max_round <= 4 * static_cast<Round>(row.n) + 2);
  }
}

TEST_CASE("verify rejects mismatched or malformed artifacts") {
  EnvGuard guard;
  Graph p3({1, 2, 3}, {{0, 1}, {1, 2}});
  const std::string gpath = temp_path("p3.el");
  write_edge_list_file(gpath, p3);

  VerifyConfig vc;
  CHECK_THROWS_WITH_AS(cmd_verify(vc),
                       doctest::Contains("requires a graph file"),
                       std::runtime_error);
  vc.graph_file = gpath;
  CHECK_THROWS_WITH_AS(
      cmd_verify(vc),
      doctest::Contains("requires a clustering or a solution file"),
      std::runtime_error);

  // Wrong order.
  const std::string sol2 = temp_path("sol2.json");
  spit(sol2, Message{{"1", 1}, {"2", 2}}.dump());
  vc.solution_file = sol2;
  CHECK_THROWS_WITH_AS(cmd_verify(vc),
                       doctest::Contains("does not match the graph order"),
                       std::runtime_error);

  // Right order, wrong node ids.
  const std::string sol3 = temp_path("sol3.json");
  spit(sol3, Message{{"1", 1}, {"2", 2}, {"9", 1}}.dump());
  vc.solution_file = sol3;
  CHECK_THROWS_WITH_AS(cmd_verify(vc),
                       doctest::Contains("missing node 3"),
                       std::runtime_error);

  // Mixed label types.
  const std::string mixed = temp_path("mixed.json");
  spit(mixed, Message{{"1", 1}, {"2", true}, {"3", 1}}.dump());
  vc.solution_file = mixed;
  CHECK_THROWS_WITH_AS(
      cmd_verify(vc),
      doctest::Contains("all integers or all booleans"),
      std::runtime_error);

  // Improper coloring fails validation rather than parsing.
  const std::string improper = temp_path("improper.json");
  spit(improper, Message{{"1", 1}, {"2", 1}, {"3", 2}}.dump());
  vc.solution_file = improper;
  CommandOutcome bad = cmd_verify(vc);
  CHECK(bad.exit_code == kExitValidationFailure);
  CHECK_FALSE(bad.report.at("ok").get<bool>());

  // A non-maximal independent set is caught too.
  const std::string slack = temp_path("slack.json");
  spit(slack, Message{{"1", false}, {"2", false}, {"3", false}}.dump());
  vc.solution_file = slack;
  CommandOutcome nm = cmd_verify(vc);
  CHECK(nm.exit_code == kExitValidationFailure);
  CHECK_FALSE(nm.report.at("ok").get<bool>());
}

TEST_CASE("a tiny event cap aborts the run with the cap exit code") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = small_gnp(30, 4, 0.1);
  cfg.event_cap = 50;
  CommandOutcome out = cmd_cluster(cfg);
  CHECK(out.exit_code == kExitRoundCap);
  REQUIRE(out.rows.size() == 1);
  CHECK_FALSE(out.rows[0].valid);
  CHECK(out.rows[0].max_awake > 0);  // partial metrics still reported
  CHECK(out.message.find("aborted") != std::string::npos);
  CHECK(out.message.find("wake-event cap") != std::string::npos);

  // The environment variable overrides the config cap.
  setenv("SLEEPSIM_EVENT_CAP", "10000000", 1);
  CommandOutcome ok = cmd_cluster(cfg);
  CHECK(ok.exit_code == kExitOk);
  CHECK(ok.rows[0].valid);

  // And can force the abort as well.
  setenv("SLEEPSIM_EVENT_CAP", "50", 1);
  cfg.event_cap = 0;
  CommandOutcome capped = cmd_cluster(cfg);
  CHECK(capped.exit_code == kExitRoundCap);
}

TEST_CASE("solve command honors the event cap exit code") {
  EnvGuard guard;
  ExperimentConfig cfg;
  cfg.family = small_gnp(20, 9, 0.15);
  cfg.algorithm = "solve-mis";
  cfg.event_cap = 40;
  CommandOutcome out = cmd_solve(cfg);
  CHECK(out.exit_code == kExitRoundCap);
  CHECK_FALSE(out.rows[0].valid);

  // Bench escalates to the strongest exit code across points.
  cfg.sweep = {20};
  cfg.repetitions = 1;
  CommandOutcome bench = cmd_bench(cfg);
  CHECK(bench.exit_code == kExitRoundCap);
}
