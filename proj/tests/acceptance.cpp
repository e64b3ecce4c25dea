// End-to-end acceptance runner. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures. argv[1] must point at the CLI
// binary (used by the determinism criterion).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cgras/gaussian.hpp"
#include "cgras/model.hpp"
#include "cgras/optimize.hpp"
#include "cgras/oracle.hpp"
#include "cgras/scheme.hpp"
#include "testgen.hpp"

using namespace cgras;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

NetworkConfig symmetric_config(int n_relays, double gain, double rate) {
  NetworkConfig config;
  config.n_relays = n_relays;
  config.n_receivers = 1;
  config.relay_gains.assign(n_relays, Complex(1.0, 0.0));
  config.access_gains = Eigen::MatrixXcd::Constant(1, n_relays, Complex(gain, 0.0));
  config.bs_power_cap = std::nullopt;
  config.relay_power_caps.assign(n_relays, std::nullopt);
  config.target_rates = {rate};
  return config;
}

struct OracleInstance {
  NetworkConfig config;
  Cgras scheme;
  MixingMatrix mixing;
};

/// The fixed random corpus shared by the oracle-agreement and
/// bound-dominance criteria. Instances keep their total constraint count at
/// 8 or below so the simulation budget stays inside the runtime limit.
std::vector<OracleInstance> oracle_corpus(std::uint64_t seed, int count) {
  testgen::Rng rng(seed);
  std::vector<OracleInstance> instances;
  while (static_cast<int>(instances.size()) < count) {
    OracleInstance inst;
    inst.config = testgen::random_config(rng);
    const MessageAllocation alloc = testgen::random_allocation(rng, inst.config);
    inst.scheme = testgen::random_scheme(rng, inst.config, alloc, 6, 0.7);
    std::size_t n_constraints = 0;
    for (int z = 0; z < inst.config.n_receivers; ++z)
      n_constraints += enumerate_closed_sets(inst.scheme, z).size();
    if (n_constraints == 0 || n_constraints > 8) continue;
    inst.mixing = testgen::random_mixing(rng, inst.config, inst.scheme);
    instances.push_back(std::move(inst));
  }
  return instances;
}

void criterion_1_point_to_point() {
  const auto start = std::chrono::steady_clock::now();
  OptimizerSettings s;
  const SweepResult result = sweep(symmetric_config(1, 1.0, 1.0), s);
  const double elapsed = seconds_since(start);
  bool pass = result.global_best.has_value();
  double total = 0.0, energy = 0.0;
  if (pass) {
    total = result.global_best->report.total_power;
    energy = result.global_best->report.total_energy;
    pass = std::abs(total - 6.0) <= 1e-6 && std::abs(energy - 6.0) <= 1e-6 && elapsed < 1.0;
  }
  std::ostringstream detail;
  detail << "total=" << total << " energy=" << energy << " in " << elapsed << "s";
  report(1, "point-to-point consistency", pass, detail.str());
}

void criterion_2_coherent_combining() {
  const auto start = std::chrono::steady_clock::now();
  const NetworkConfig config = symmetric_config(2, 1.0, 1.0);
  MessageAllocation alloc;
  alloc.known = {1u, 1u};
  const auto schemes = canonical_schemes(alloc, config, {}, 2);
  OptimizerSettings s;
  const auto solution = solve_scheme(config, schemes[0], s);
  const auto grid = oracle::grid_feasible_power(config, schemes[0], 1e-3);
  const double elapsed = seconds_since(start);

  bool pass = solution.has_value() && grid.has_value();
  double access = 0.0;
  if (pass) {
    for (double p : solution->report.relay_powers) access += p;
    pass = std::abs(access - *grid) <= 1e-3 + 1e-9 && std::abs(access - 1.5) <= 1e-3 &&
           elapsed < 10.0;
  }
  std::ostringstream detail;
  detail << "access=" << access << " grid=" << (grid ? *grid : -1.0) << " in " << elapsed << "s";
  report(2, "coherent-combining reproduction", pass, detail.str());
}

void criterion_3_oracle_agreement() {
  // Tolerance per comparison: twice the estimator's standard error at 2e5
  // samples. The reference value is the average of four independent
  // estimator runs, so the check's own noise sits well inside the tolerance
  // it enforces; a formula error larger than the tolerance still fails every
  // time. The small absolute floor covers closed sets whose received power
  // is degenerate and the standard error collapses.
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = oracle_corpus(0xC63A5u, 50);
  constexpr std::size_t kSamples = 200000;
  constexpr int kRepeats = 6;

  int comparisons = 0;
  double worst_ratio = 0.0;
  bool pass = true;
  for (std::size_t i = 0; i < corpus.size() && pass; ++i) {
    const OracleInstance& inst = corpus[i];
    for (int z = 0; z < inst.config.n_receivers && pass; ++z) {
      const std::uint64_t decoded = inst.scheme.decoded_set(z);
      for (const ClosedSet& f : enumerate_closed_sets(inst.scheme, z)) {
        const RateConstraint c = rate_bound(inst.config, inst.scheme, inst.mixing, z, f.members);
        double estimate = 0.0, se = 0.0;
        for (int r = 0; r < kRepeats; ++r) {
          const auto mc = oracle::mc_mutual_information(
              inst.config.access_gains.row(z).transpose(), inst.mixing.entries, f.members,
              decoded, kSamples, 0x5EEDULL + 977u * i + 131u * z + 7919u * f.members + r);
          estimate += mc.estimate / kRepeats;
          se += mc.stderr_ / kRepeats;
        }
        const double allowance = std::max(2.0 * se, 1e-4);
        const double ratio = std::abs(estimate - c.bound) / allowance;
        worst_ratio = std::max(worst_ratio, ratio);
        ++comparisons;
        if (ratio > 1.0) {
          pass = false;
          break;
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 300.0;
  std::ostringstream detail;
  detail << comparisons << " bounds, worst |diff|/(2se)=" << worst_ratio << " in " << elapsed
         << "s";
  report(3, "oracle agreement", pass, detail.str());
}

void criterion_4_closed_set_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  testgen::Rng rng(0xDA61u);
  bool pass = true;
  for (int trial = 0; trial < 200 && pass; ++trial) {
    const auto dag = testgen::random_dag(rng, 12, 3, testgen::uniform(rng, 0.05, 0.9));
    Cgras scheme;
    scheme.allocation.known = {7u};
    scheme.vertices = dag.vertices;
    scheme.edges = dag.edges;
    scheme.gamma.gamma = Eigen::MatrixXd::Zero(3, scheme.n_vertices());
    for (int z = 0; z < 3 && pass; ++z) {
      const auto fast = enumerate_closed_sets(scheme, z);
      const auto brute = oracle::brute_closed_sets(dag.vertices, dag.edges, z);
      if (fast.size() != brute.size()) pass = false;
      for (std::size_t i = 0; pass && i < fast.size(); ++i)
        if (fast[i].members != brute[i]) pass = false;
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 60.0;
  std::ostringstream detail;
  detail << "200 DAGs in " << elapsed << "s";
  report(4, "closed-set equivalence", pass, detail.str());
}

OptimizerSettings sweep_settings() {
  OptimizerSettings s;
  s.max_restarts = 2;
  s.scheme_cap = 4;
  s.grid_resolution = 1;
  s.seed = 97;
  return s;
}

void criterion_5_bound_dominance() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<NetworkConfig> configs{symmetric_config(1, 1.0, 1.0)};
  for (const OracleInstance& inst : oracle_corpus(0xC63A5u, 50)) configs.push_back(inst.config);
  testgen::Rng rng(0xD0417u);
  for (int i = 0; i < 20; ++i) configs.push_back(testgen::random_config(rng));

  const OptimizerSettings s = sweep_settings();
  bool pass = true;
  int checked = 0;
  double worst_margin = 1e300;
  for (const NetworkConfig& config : configs) {
    const SweepResult result = sweep(config, s);
    if (!result.global_best || !result.bound.feasible) continue;
    ++checked;
    const double margin = result.global_best->report.total_power - result.bound.value;
    worst_margin = std::min(worst_margin, margin);
    if (margin < -1e-6) pass = false;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << checked << "/" << configs.size() << " sweeps, worst achievable-bound margin "
         << worst_margin << " in " << elapsed << "s";
  report(5, "bound dominance", pass && checked > 0, detail.str());
}

void criterion_6_monotonicity() {
  testgen::Rng rng(0x30A0u);
  bool pass = true;
  std::string note = "20 configs";
  for (int trial = 0; trial < 20 && pass; ++trial) {
    const NetworkConfig config = testgen::random_config(rng);
    MessageAllocation small = testgen::random_allocation(rng, config);
    MessageAllocation large = small;
    const int j = testgen::uniform_int(rng, 0, config.n_relays - 1);
    const int z = testgen::uniform_int(rng, 0, config.n_receivers - 1);
    large.known[j] |= bit(z);

    // Feeder power never drops when a relay learns one more message.
    const auto p_small = relay_link_power(config, small, config.target_rates);
    const auto p_large = relay_link_power(config, large, config.target_rates);
    if (p_large.total < p_small.total - 1e-12) {
      pass = false;
      note = "feeder power decreased under enlargement";
      break;
    }

    // Access side: the unsplit scheme family keeps its constraint structure
    // and only widens the admissible mixing support, so any feasible mixing
    // for the small allocation embeds unchanged.
    const auto scheme_small = canonical_schemes(small, config, {}, 1);
    const auto scheme_large = canonical_schemes(large, config, {}, 1);
    if (scheme_small.size() != 1 || scheme_large.size() != 1) continue;
    const Cgras& a = scheme_small[0];
    const Cgras& b = scheme_large[0];
    if (a.n_vertices() != b.n_vertices()) {
      pass = false;
      note = "scheme family changed shape";
      break;
    }
    for (int v = 0; v < a.n_vertices(); ++v)
      if (a.vertices[v].decoders != b.vertices[v].decoders ||
          !subset_of(a.vertices[v].encoders, b.vertices[v].encoders)) {
        pass = false;
        note = "support did not grow";
      }
    for (int rep = 0; rep < 3 && pass; ++rep) {
      const MixingMatrix mix = testgen::random_mixing(rng, config, a);
      if (!support_valid(mix, b)) {
        pass = false;
        note = "embedded mixing rejected";
        break;
      }
      const auto ca = region_constraints(config, a, mix);
      const auto cb = region_constraints(config, b, mix);
      if (ca.size() != cb.size()) {
        pass = false;
        note = "constraint sets diverged";
        break;
      }
      for (std::size_t k = 0; k < ca.size(); ++k)
        if (std::abs(ca[k].bound - cb[k].bound) > 1e-9) {
          pass = false;
          note = "embedded bound changed";
        }
    }
  }
  report(6, "monotonicity suite", pass, note);
}

void criterion_7_determinism(const std::string& cli) {
  const fs::path dir = fs::path("acceptance_tmp");
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path config_path = dir / "config.json";
  {
    std::ofstream out(config_path);
    out << serialize(symmetric_config(2, 0.9, 1.0)).dump(2) << "\n";
  }
  auto run = [&](const std::string& out_dir) {
    const std::string cmd = "\"" + cli + "\" optimize --config " + config_path.string() +
                            " --out-dir " + out_dir + " --seed 31337 > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const int rc1 = run((dir / "run1").string());
  const int rc2 = run((dir / "run2").string());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const std::string json1 = slurp(dir / "run1" / "sweep.json");
  const std::string json2 = slurp(dir / "run2" / "sweep.json");
  const std::string csv1 = slurp(dir / "run1" / "sweep.csv");
  const std::string csv2 = slurp(dir / "run2" / "sweep.csv");
  const bool pass = rc1 == 0 && rc2 == 0 && !json1.empty() && json1 == json2 && csv1 == csv2;
  std::ostringstream detail;
  detail << "json " << json1.size() << " bytes, identical=" << (json1 == json2 ? "yes" : "no");
  report(7, "determinism", pass, detail.str());
}

void criterion_8_tradeoff() {
  // Sweeping the access gain magnitude: cheap relays-to-receivers links make
  // replication at the base station pointless; expensive ones make relay
  // cooperation worth the extra feeder power. The chosen allocation must
  // switch from full cognition to a single relay as the gain grows.
  OptimizerSettings s;
  const std::vector<double> gains{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<int> cognition;
  bool pass = true;
  std::ostringstream detail;
  for (double g : gains) {
    const SweepResult result = sweep(symmetric_config(2, g, 1.0), s);
    if (!result.global_best) {
      pass = false;
      break;
    }
    const auto& alloc = result.records[result.global_best->allocation_index].allocation;
    cognition.push_back(alloc.cognition_count());
    detail << "g=" << g << ":" << (alloc.cognition_count() == 2 ? "full" : "single") << " ";
  }
  if (pass) {
    pass = cognition.front() == 2 && cognition.back() == 1;
    bool switched = false;
    for (std::size_t i = 0; i + 1 < cognition.size(); ++i) {
      if (cognition[i] == 2 && cognition[i + 1] == 1) switched = true;
      if (cognition[i] == 1 && cognition[i + 1] == 2) pass = false;  // no switching back
    }
    pass = pass && switched;
  }
  report(8, "cognition tradeoff crossover", pass, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-cli>\n";
    return 64;
  }
  criterion_1_point_to_point();
  criterion_2_coherent_combining();
  criterion_3_oracle_agreement();
  criterion_4_closed_set_equivalence();
  criterion_5_bound_dominance();
  criterion_6_monotonicity();
  criterion_7_determinism(argv[1]);
  criterion_8_tradeoff();
  if (failures == 0) std::printf("all criteria passed\n");
  return failures;
}
