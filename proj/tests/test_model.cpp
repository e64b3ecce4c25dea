#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "cgras/model.hpp"
#include "testgen.hpp"

using namespace cgras;

namespace {

Json base_doc() {
  return Json::parse(R"({
    "n_relays": 2,
    "n_receivers": 3,
    "relay_gains": [{"re": 1, "im": 0}, {"re": 0.5, "im": -0.5}],
    "access_gains": [
      [{"re": 1, "im": 0}, {"re": 0, "im": 1}],
      [{"re": 0.3, "im": 0}, {"re": 1, "im": 0}],
      [{"re": 0.2, "im": 0.1}, {"re": 0.4, "im": 0}]
    ],
    "bs_power_cap": "inf",
    "relay_power_caps": [2.5, "inf"],
    "target_rates": [1.0, 0.5, 0.25]
  })");
}

}  // namespace

TEST_CASE("load_config accepts a 2-relay 3-receiver document") {
  const NetworkConfig config = load_config(base_doc());
  CHECK(config.n_relays == 2);
  CHECK(config.n_receivers == 3);
  CHECK(config.access_gains.rows() == 3);
  CHECK(config.access_gains.cols() == 2);
  CHECK(config.relay_gains[1] == Complex(0.5, -0.5));
  CHECK(!config.bs_power_cap.has_value());
  CHECK(config.relay_power_caps[0] == 2.5);
  CHECK(!config.relay_power_caps[1].has_value());
}

TEST_CASE("load_config reports the offending field path") {
  Json doc = base_doc();
  doc["target_rates"] = Json::array({1.0, 0.5});
  CHECK_THROWS_AS(load_config(doc), ConfigError);

  doc = base_doc();
  doc["relay_gains"][0] = Json{{"re", 0.0}, {"im", 0.0}};
  try {
    load_config(doc);
    FAIL("zero gain accepted");
  } catch (const ConfigError& err) {
    CHECK(err.path() == "relay_gains[0]");
  }

  doc = base_doc();
  doc["relay_power_caps"][0] = -1.0;
  CHECK_THROWS_AS(load_config(doc), ConfigError);

  doc = base_doc();
  doc["access_gains"][1] = Json::array({Json{{"re", 1.0}, {"im", 0.0}}});
  try {
    load_config(doc);
    FAIL("short row accepted");
  } catch (const ConfigError& err) {
    CHECK(err.path() == "access_gains[1]");
  }
}

TEST_CASE("complex gains parse as re/im, mag/phase or bare numbers") {
  Json doc = base_doc();
  doc["relay_gains"][0] = Json{{"mag", 2.0}, {"phase", M_PI / 2}};
  doc["relay_gains"][1] = 3.0;
  const NetworkConfig config = load_config(doc);
  CHECK(std::abs(config.relay_gains[0] - Complex(0.0, 2.0)) < 1e-12);
  CHECK(config.relay_gains[1] == Complex(3.0, 0.0));
}

TEST_CASE("serialize then load is the identity") {
  const NetworkConfig config = load_config(base_doc());
  const NetworkConfig reloaded = load_config(serialize(config));
  CHECK(reloaded.n_relays == config.n_relays);
  CHECK(reloaded.n_receivers == config.n_receivers);
  CHECK(reloaded.relay_gains == config.relay_gains);
  CHECK(reloaded.access_gains == config.access_gains);
  CHECK(reloaded.bs_power_cap == config.bs_power_cap);
  CHECK(reloaded.relay_power_caps == config.relay_power_caps);
  CHECK(reloaded.target_rates == config.target_rates);
  CHECK(serialize(reloaded) == serialize(config));
}

TEST_CASE("total_energy") {
  CHECK(total_energy(6.0, {1.0, 1.0}) == doctest::Approx(3.0));
  CHECK(total_energy(0.0, {1.0}) == 0.0);
  CHECK(total_energy(7.5, {0.5, 1.0, 1.0}) == doctest::Approx(3.0));
  CHECK_THROWS_AS(total_energy(1.0, {0.0, 0.0}), std::domain_error);

  // Homogeneity in the power argument.
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const double p = testgen::uniform(rng, 0.0, 20.0);
    const double alpha = testgen::uniform(rng, 0.0, 5.0);
    const std::vector<double> rates{testgen::uniform(rng, 0.1, 2.0),
                                    testgen::uniform(rng, 0.0, 2.0)};
    CHECK(total_energy(alpha * p, rates) ==
          doctest::Approx(alpha * total_energy(p, rates)).epsilon(1e-12));
  }
}

TEST_CASE("allocation enumeration counts and order") {
  Json doc = base_doc();

  doc["n_relays"] = 1;
  doc["relay_gains"] = Json::array({1.0});
  doc["n_receivers"] = 1;
  doc["access_gains"] = Json::array({Json::array({1.0})});
  doc["relay_power_caps"] = Json::array({"inf"});
  doc["target_rates"] = Json::array({1.0});
  auto one = enumerate_allocations(load_config(doc));
  REQUIRE(one.size() == 1);
  CHECK(one[0].known == std::vector<std::uint32_t>{1u});

  doc["n_relays"] = 2;
  doc["relay_gains"] = Json::array({1.0, 1.0});
  doc["access_gains"] = Json::array({Json::array({1.0, 1.0})});
  doc["relay_power_caps"] = Json::array({"inf", "inf"});
  auto three = enumerate_allocations(load_config(doc));
  REQUIRE(three.size() == 3);
  CHECK(three[0].known == std::vector<std::uint32_t>{1u, 0u});
  CHECK(three[1].known == std::vector<std::uint32_t>{0u, 1u});
  CHECK(three[2].known == std::vector<std::uint32_t>{1u, 1u});

  doc["n_receivers"] = 2;
  doc["access_gains"] = Json::array({Json::array({1.0, 1.0}), Json::array({1.0, 1.0})});
  doc["target_rates"] = Json::array({1.0, 1.0});
  CHECK(enumerate_allocations(load_config(doc)).size() == 9);

  auto capped = enumerate_allocations(load_config(doc), 4);
  CHECK(capped.size() == 4);
  CHECK(capped[3].known == enumerate_allocations(load_config(doc))[3].known);
}

TEST_CASE("allocation count matches the product formula, zero-rate messages skipped") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkConfig config = testgen::random_config(rng);
    if (trial % 3 == 0) config.target_rates[0] = 0.0;
    const auto allocs = enumerate_allocations(config);
    std::size_t expected = 1;
    for (int z = 0; z < config.n_receivers; ++z)
      if (config.target_rates[z] > 0) expected *= (std::size_t{1} << config.n_relays) - 1;
    CHECK(allocs.size() == expected);
    for (const auto& alloc : allocs) {
      CHECK_NOTHROW(validate_allocation(alloc, config));
      for (int z = 0; z < config.n_receivers; ++z)
        if (config.target_rates[z] <= 0) CHECK(alloc.relays_knowing(z) == 0);
    }
    for (std::size_t i = 0; i + 1 < allocs.size(); ++i) CHECK(!(allocs[i] == allocs[i + 1]));
  }
}

TEST_CASE("allocation validation") {
  const NetworkConfig config = load_config(base_doc());
  MessageAllocation alloc;
  alloc.known = {0u, 0u};
  CHECK_THROWS_AS(validate_allocation(alloc, config), std::invalid_argument);
  alloc.known = {7u};
  CHECK_THROWS_AS(validate_allocation(alloc, config), std::invalid_argument);
  alloc.known = {7u, 8u};
  CHECK_THROWS_AS(validate_allocation(alloc, config), std::invalid_argument);
  alloc.known = {7u, 1u};
  CHECK_NOTHROW(validate_allocation(alloc, config));
  CHECK(alloc.cognition_count() == 4);
  CHECK(alloc.relays_knowing(0) == 3u);
  CHECK(alloc.relays_knowing(2) == 1u);
}

TEST_CASE("power report serialization") {
  PowerReport report;
  report.bs_power_per_relay = {3.0, 0.0};
  report.relay_powers = {1.5, 0.75};
  report.total_power = 5.25;
  report.total_energy = 5.25;
  report.binding_constraints = {"rate z=0 F={0}"};
  const Json doc = serialize(report);
  CHECK(doc["total_power"] == 5.25);
  CHECK(doc["relay_powers"].size() == 2);
  CHECK(doc["binding_constraints"][0] == "rate z=0 F={0}");
}
