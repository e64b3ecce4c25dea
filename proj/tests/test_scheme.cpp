#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include "cgras/oracle.hpp"
#include "cgras/scheme.hpp"
#include "testgen.hpp"

using namespace cgras;

namespace {

NetworkConfig square_config(int n_relays, int n_receivers, double rate = 1.0) {
  NetworkConfig config;
  config.n_relays = n_relays;
  config.n_receivers = n_receivers;
  config.relay_gains.assign(n_relays, Complex(1.0, 0.0));
  config.access_gains = Eigen::MatrixXcd::Constant(n_receivers, n_relays, Complex(1.0, 0.0));
  config.bs_power_cap = std::nullopt;
  config.relay_power_caps.assign(n_relays, std::nullopt);
  config.target_rates.assign(n_receivers, rate);
  return config;
}

Cgras single_vertex_scheme(const NetworkConfig& config, std::uint32_t enc, std::uint32_t dec) {
  Cgras scheme;
  scheme.allocation.known.assign(config.n_relays, 0u);
  for (int j : mask_to_list(enc)) scheme.allocation.known[j] = config.positive_rate_mask();
  scheme.vertices = {Vertex{enc, dec}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(config.n_receivers, 1);
  for (int z : mask_to_list(dec)) scheme.gamma.gamma(z, 0) = 1.0;
  return scheme;
}

bool mentions(const ValidationResult& result, const std::string& needle) {
  for (const std::string& v : result.violations)
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("smallest scheme validates") {
  const NetworkConfig config = square_config(1, 1);
  const Cgras scheme = single_vertex_scheme(config, 1u, 1u);
  const ValidationResult result = validate(scheme, config);
  CHECK(result.ok);
  CHECK(result.violations.empty());
}

TEST_CASE("edge with a growing decoder set is rejected") {
  const NetworkConfig config = square_config(2, 2);
  Cgras scheme;
  scheme.allocation.known = {3u, 3u};
  scheme.vertices = {Vertex{1u, 1u}, Vertex{3u, 3u}};
  scheme.edges = {{0, 1}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(2, 2);
  scheme.gamma.gamma(0, 0) = 1.0;
  scheme.gamma.gamma(0, 1) = 0.0;
  scheme.gamma.gamma(1, 1) = 1.0;
  const ValidationResult result = validate(scheme, config);
  CHECK(!result.ok);
  CHECK(mentions(result, "decoder set"));
}

TEST_CASE("missing shortcut edge is a transitivity hole") {
  const NetworkConfig config = square_config(2, 2, 1.0);
  Cgras scheme;
  scheme.allocation.known = {3u, 3u};
  // Chain with shrinking decoder sets; the a->c shortcut is left out.
  scheme.vertices = {Vertex{3u, 3u}, Vertex{3u, 3u}, Vertex{3u, 1u}};
  scheme.edges = {{0, 1}, {1, 2}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(2, 3);
  scheme.gamma.gamma(0, 0) = 0.5;
  scheme.gamma.gamma(0, 2) = 0.5;
  scheme.gamma.gamma(1, 1) = 1.0;
  const ValidationResult result = validate(scheme, config);
  CHECK(!result.ok);
  CHECK(mentions(result, "transitivity hole"));
  CHECK(mentions(result, "v0 -> v2"));

  scheme.edges = {{0, 1}, {0, 2}, {1, 2}};
  CHECK(validate(scheme, config).ok);
}

TEST_CASE("cycles are rejected") {
  const NetworkConfig config = square_config(2, 2);
  Cgras scheme;
  scheme.allocation.known = {3u, 3u};
  scheme.vertices = {Vertex{3u, 3u}, Vertex{3u, 3u}};
  scheme.edges = {{0, 1}, {1, 0}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(2, 2);
  scheme.gamma.gamma(0, 0) = 1.0;
  scheme.gamma.gamma(1, 1) = 1.0;
  const ValidationResult result = validate(scheme, config);
  CHECK(!result.ok);
  CHECK(mentions(result, "cycle"));
}

TEST_CASE("split-matrix violations are reported per row and entry") {
  const NetworkConfig config = square_config(2, 2);
  Cgras scheme;
  scheme.allocation.known = {1u, 1u};  // only message 0 distributed
  scheme.vertices = {Vertex{3u, 3u}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(2, 1);
  scheme.gamma.gamma(0, 0) = 0.8;  // row does not reach 1
  scheme.gamma.gamma(1, 0) = 1.0;  // message 1 not held by the encoders
  const ValidationResult result = validate(scheme, config);
  CHECK(!result.ok);
  CHECK(mentions(result, "row 0"));
  CHECK(mentions(result, "does not hold message 1"));
}

TEST_CASE("split_rates maps fractions to sub-rates and preserves the total") {
  SplitMatrix identity;
  identity.gamma = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd direct = split_rates(identity, {1.5, 0.25});
  CHECK(direct(0) == doctest::Approx(1.5));
  CHECK(direct(1) == doctest::Approx(0.25));

  SplitMatrix split;
  split.gamma = Eigen::MatrixXd(1, 2);
  split.gamma << 0.25, 0.75;
  const Eigen::VectorXd parts = split_rates(split, {2.0});
  CHECK(parts(0) == doctest::Approx(0.5));
  CHECK(parts(1) == doctest::Approx(1.5));

  CHECK_THROWS_AS(split_rates(split, {1.0, 2.0}), std::invalid_argument);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const NetworkConfig config = testgen::random_config(rng);
    const MessageAllocation alloc = testgen::random_allocation(rng, config);
    const Cgras scheme = testgen::random_scheme(rng, config, alloc);
    const Eigen::VectorXd sub = split_rates(scheme.gamma, config.target_rates);
    CHECK(sub.sum() == doctest::Approx(config.total_rate()).epsilon(1e-9));
  }
}

TEST_CASE("closed sets of a two-vertex chain") {
  const NetworkConfig config = square_config(1, 1);
  Cgras scheme;
  scheme.allocation.known = {1u};
  scheme.vertices = {Vertex{1u, 1u}, Vertex{1u, 1u}};
  scheme.edges = {{0, 1}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(1, 2);
  scheme.gamma.gamma(0, 0) = 0.5;
  scheme.gamma.gamma(0, 1) = 0.5;
  const auto sets = enumerate_closed_sets(scheme, 0);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].members == 0b10u);  // the top alone
  CHECK(sets[1].members == 0b11u);
}

TEST_CASE("closed sets of isolated vertices are all subsets") {
  const NetworkConfig config = square_config(1, 1);
  Cgras scheme;
  scheme.allocation.known = {1u};
  scheme.vertices = {Vertex{1u, 1u}, Vertex{1u, 1u}};
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(1, 2);
  scheme.gamma.gamma(0, 0) = 0.5;
  scheme.gamma.gamma(0, 1) = 0.5;
  const auto sets = enumerate_closed_sets(scheme, 0);
  REQUIRE(sets.size() == 3);
  CHECK(sets[0].members == 0b01u);
  CHECK(sets[1].members == 0b10u);
  CHECK(sets[2].members == 0b11u);

  // Edgeless decoded set of size k has 2^k - 1 closed sets.
  for (int k = 1; k <= 6; ++k) {
    Cgras flat;
    flat.allocation.known = {1u};
    flat.vertices.assign(k, Vertex{1u, 1u});
    flat.gamma.gamma = Eigen::MatrixXd::Constant(1, k, 1.0 / k);
    CHECK(enumerate_closed_sets(flat, 0).size() == (std::size_t{1} << k) - 1);
  }
}

TEST_CASE("diamond closed sets equal the brute filter") {
  Cgras scheme;
  scheme.allocation.known = {1u};
  scheme.vertices.assign(4, Vertex{1u, 1u});
  scheme.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 3}, {2, 3}};  // diamond, closed
  scheme.gamma.gamma = Eigen::MatrixXd::Constant(1, 4, 0.25);
  const auto fast = enumerate_closed_sets(scheme, 0);
  const auto brute = oracle::brute_closed_sets(scheme.vertices, scheme.edges, 0);
  REQUIRE(fast.size() == brute.size());
  for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i].members == brute[i]);
}

TEST_CASE("closed-set enumeration equals brute force on random DAGs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 120; ++trial) {
    const auto dag = testgen::random_dag(rng, 12, 3, testgen::uniform(rng, 0.05, 0.8));
    Cgras scheme;
    scheme.allocation.known = {7u};
    scheme.vertices = dag.vertices;
    scheme.edges = dag.edges;
    scheme.gamma.gamma = Eigen::MatrixXd::Zero(3, scheme.n_vertices());
    for (int z = 0; z < 3; ++z) {
      const auto fast = enumerate_closed_sets(scheme, z);
      const auto brute = oracle::brute_closed_sets(dag.vertices, dag.edges, z);
      REQUIRE(fast.size() == brute.size());
      for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i].members == brute[i]);
    }
  }
}

TEST_CASE("canonical schemes: smallest network has exactly one") {
  const NetworkConfig config = square_config(1, 1);
  MessageAllocation alloc;
  alloc.known = {1u};
  const auto schemes = canonical_schemes(alloc, config, {0.5}, 16);
  REQUIRE(schemes.size() == 1);
  CHECK(schemes[0].n_vertices() == 1);
  CHECK(schemes[0].edges.empty());
  CHECK(schemes[0].gamma.gamma(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("canonical schemes: cooperative single vertex for a shared message") {
  const NetworkConfig config = square_config(2, 1);
  MessageAllocation alloc;
  alloc.known = {1u, 1u};
  const auto schemes = canonical_schemes(alloc, config, {}, 16);
  REQUIRE(!schemes.empty());
  CHECK(schemes[0].n_vertices() == 1);
  CHECK(schemes[0].vertices[0].encoders == 3u);
  CHECK(schemes[0].vertices[0].decoders == 1u);
  CHECK(schemes[0].edges.empty());
}

TEST_CASE("canonical schemes: full cognition puts a common vertex below privates") {
  const NetworkConfig config = square_config(2, 2);
  MessageAllocation alloc;
  alloc.known = {3u, 3u};
  const auto schemes = canonical_schemes(alloc, config, {0.5}, 16);
  bool found = false;
  for (const Cgras& scheme : schemes) {
    int common = -1;
    std::vector<int> privates;
    for (int v = 0; v < scheme.n_vertices(); ++v) {
      if (scheme.vertices[v].encoders != 3u) continue;
      if (scheme.vertices[v].decoders == 3u) common = v;
      if (std::popcount(scheme.vertices[v].decoders) == 1) privates.push_back(v);
    }
    if (common < 0 || privates.size() != 2) continue;
    bool edges_ok = true;
    for (int p : privates) {
      const bool present =
          std::find(scheme.edges.begin(), scheme.edges.end(), std::make_pair(common, p)) !=
          scheme.edges.end();
      if (!present) edges_ok = false;
    }
    if (edges_ok) found = true;
  }
  CHECK(found);
}

TEST_CASE("every canonical scheme validates; stream is capped and deterministic") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkConfig config = testgen::random_config(rng);
    const MessageAllocation alloc = testgen::random_allocation(rng, config);
    const auto schemes = canonical_schemes(alloc, config, {0.25, 0.5}, 9);
    CHECK(schemes.size() <= 9);
    for (const Cgras& scheme : schemes) {
      const ValidationResult result = validate(scheme, config);
      if (!result.ok)
        for (const std::string& v : result.violations) MESSAGE(v);
      CHECK(result.ok);
    }
    const auto again = canonical_schemes(alloc, config, {0.25, 0.5}, 9);
    REQUIRE(again.size() == schemes.size());
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      CHECK(again[i].vertices == schemes[i].vertices);
      CHECK(again[i].edges == schemes[i].edges);
    }
  }
}

TEST_CASE("dag export format") {
  const NetworkConfig config = square_config(2, 2);
  MessageAllocation alloc;
  alloc.known = {3u, 3u};
  const auto schemes = canonical_schemes(alloc, config, {0.5}, 16);
  REQUIRE(schemes.size() >= 2);
  const std::string dot = to_dot(schemes[1], config);  // the layered scheme
  CHECK(dot.find("v0 [encoders={0,1} decoders={0} rate=") != std::string::npos);
  CHECK(dot.find(" -> ") != std::string::npos);
}

TEST_CASE("scheme JSON round trip") {
  std::mt19937_64 rng(31);
  const NetworkConfig config = testgen::random_config(rng);
  const MessageAllocation alloc = testgen::random_allocation(rng, config);
  const Cgras scheme = testgen::random_scheme(rng, config, alloc);
  const Cgras reloaded = scheme_from_json(serialize(scheme), config);
  CHECK(reloaded.allocation == scheme.allocation);
  CHECK(reloaded.vertices == scheme.vertices);
  CHECK(reloaded.edges == scheme.edges);
  CHECK((reloaded.gamma.gamma - scheme.gamma.gamma).cwiseAbs().maxCoeff() <= 1e-15);
}
