#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cgras/gaussian.hpp"
#include "cgras/model.hpp"
#include "cgras/optimize.hpp"
#include "cgras/oracle.hpp"
#include "cgras/scheme.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

/// "0,2;1;" -> relay 0 holds {0,2}, relay 1 holds {1}, relay 2 holds nothing.
cgras::MessageAllocation parse_allocation_spec(const std::string& spec,
                                               const cgras::NetworkConfig& config) {
  cgras::MessageAllocation alloc;
  std::string segment;
  std::vector<std::string> segments;
  for (char c : spec) {
    if (c == ';') {
      segments.push_back(segment);
      segment.clear();
    } else {
      segment += c;
    }
  }
  segments.push_back(segment);
  for (const std::string& seg : segments) {
    std::uint32_t mask = 0;
    std::size_t pos = 0;
    while (pos < seg.size()) {
      std::size_t next = seg.find(',', pos);
      if (next == std::string::npos) next = seg.size();
      const std::string token = seg.substr(pos, next - pos);
      if (!token.empty()) mask |= cgras::bit(std::stoi(token));
      pos = next + 1;
    }
    alloc.known.push_back(mask);
  }
  cgras::validate_allocation(alloc, config);
  return alloc;
}

cgras::MessageAllocation allocation_by_index(std::size_t index,
                                             const cgras::NetworkConfig& config) {
  cgras::AllocationEnumerator stream(config);
  std::size_t i = 0;
  while (auto alloc = stream.next()) {
    if (i++ == index) return *alloc;
  }
  throw std::runtime_error("allocation index out of range");
}

cgras::MessageAllocation full_cognition(const cgras::NetworkConfig& config) {
  cgras::MessageAllocation alloc;
  alloc.known.assign(config.n_relays, config.positive_rate_mask());
  return alloc;
}

cgras::MixingMatrix mixing_from_json(const cgras::Json& doc, const cgras::NetworkConfig& config,
                                     int n_vertices) {
  if (!doc.is_object() || !doc.contains("entries"))
    throw cgras::ConfigError("entries", "mixing document needs an entries matrix");
  const cgras::Json& entries = doc.at("entries");
  if (static_cast<int>(entries.size()) != config.n_relays)
    throw cgras::ConfigError("entries", "expected one row per relay");
  cgras::MixingMatrix a;
  a.entries = Eigen::MatrixXcd::Zero(config.n_relays, n_vertices);
  for (int j = 0; j < config.n_relays; ++j) {
    const cgras::Json& row = entries.at(j);
    if (static_cast<int>(row.size()) != n_vertices)
      throw cgras::ConfigError("entries[" + std::to_string(j) + "]",
                               "expected one entry per vertex");
    for (int v = 0; v < n_vertices; ++v) {
      const cgras::Json& cell = row.at(v);
      if (cell.is_number()) {
        a.entries(j, v) = cgras::Complex(cell.get<double>(), 0.0);
      } else {
        a.entries(j, v) =
            cgras::Complex(cell.value("re", 0.0), cell.value("im", 0.0));
      }
    }
  }
  return a;
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  int grid = 3;
  int restarts = 4;
  int scheme_cap = 16;
  std::string format = "both";
};

cgras::OptimizerSettings settings_from(const CommonFlags& flags) {
  cgras::OptimizerSettings settings;
  settings.seed = flags.seed;
  settings.grid_resolution = flags.grid;
  settings.max_restarts = flags.restarts;
  settings.scheme_cap = flags.scheme_cap;
  return settings;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_format = false) {
  cmd->add_option("--config", flags.config_path, "network config JSON")->required();
  cmd->add_option("--out-dir", flags.out_dir, "directory for output files");
  cmd->add_option("--seed", flags.seed, "RNG seed");
  cmd->add_option("--grid", flags.grid, "split-fraction grid resolution");
  cmd->add_option("--restarts", flags.restarts, "optimizer restarts");
  cmd->add_option("--scheme-cap", flags.scheme_cap, "canonical schemes per allocation");
  if (with_format)
    cmd->add_option("--format", flags.format, "json, csv or both")
        ->check(CLI::IsMember({"json", "csv", "both"}));
}

int run_evaluate(const CommonFlags& flags, const std::string& scheme_path, int canonical_id,
                 const std::string& alloc_spec, int alloc_index, const std::string& mixing_path,
                 bool optimize_mixing, bool emit_dag, bool mc_check, std::size_t samples) {
  const cgras::NetworkConfig config = cgras::load_config_file(flags.config_path);

  cgras::Cgras scheme;
  if (!scheme_path.empty()) {
    scheme = cgras::load_scheme_file(scheme_path, config);
  } else {
    cgras::MessageAllocation alloc =
        !alloc_spec.empty() ? parse_allocation_spec(alloc_spec, config)
        : alloc_index >= 0  ? allocation_by_index(static_cast<std::size_t>(alloc_index), config)
                            : full_cognition(config);
    auto schemes = cgras::canonical_schemes(alloc, config, {0.25, 0.5, 0.75},
                                            static_cast<std::size_t>(canonical_id) + 1);
    if (canonical_id < 0 || canonical_id >= static_cast<int>(schemes.size()))
      throw std::runtime_error("canonical scheme id out of range");
    scheme = schemes[static_cast<std::size_t>(canonical_id)];
  }

  const cgras::ValidationResult valid = cgras::validate(scheme, config);
  if (!valid.ok) {
    for (const std::string& v : valid.violations) std::cerr << "invalid scheme: " << v << "\n";
    return kExitError;
  }

  cgras::MixingMatrix mixing;
  cgras::SplitMatrix gamma = scheme.gamma;
  if (optimize_mixing) {
    auto solution = cgras::solve_scheme(config, scheme, settings_from(flags));
    if (!solution) {
      std::cout << "infeasible\n";
      return kExitInfeasible;
    }
    mixing = solution->mixing;
    gamma = solution->gamma;
  } else if (!mixing_path.empty()) {
    std::ifstream in(mixing_path);
    if (!in) throw std::runtime_error("cannot open " + mixing_path);
    cgras::Json doc;
    in >> doc;
    mixing = mixing_from_json(doc, config, scheme.n_vertices());
  } else {
    throw std::runtime_error("provide --mixing FILE or --optimize-mixing");
  }

  cgras::Cgras evaluated = scheme;
  evaluated.gamma = gamma;
  const auto constraints = cgras::region_constraints(config, evaluated, mixing);
  const Eigen::VectorXd rates = cgras::split_rates(gamma, config.target_rates);

  bool feasible = true;
  for (const auto& c : constraints) {
    double lhs = 0.0;
    for (int v : c.lhs_vertices) lhs += rates(v);
    if (lhs > c.bound + 1e-6) feasible = false;
  }
  const auto feeder = cgras::relay_link_power(config, scheme.allocation, config.target_rates);
  if (!feeder.within_cap) feasible = false;
  for (int j = 0; j < config.n_relays; ++j)
    if (config.relay_power_caps[j] &&
        mixing.row_power(j) > *config.relay_power_caps[j] + 1e-9)
      feasible = false;

  const std::string csv = cgras::constraints_csv(constraints);
  if (!flags.out_dir.empty())
    write_file(fs::path(flags.out_dir) / "constraints.csv", csv);
  else
    std::cout << csv;
  if (emit_dag) {
    const std::string dot = cgras::to_dot(evaluated, config);
    if (!flags.out_dir.empty())
      write_file(fs::path(flags.out_dir) / "scheme.dot", dot);
    else
      std::cout << dot;
  }

  if (mc_check) {
    double worst = 0.0;
    for (const auto& c : constraints) {
      const auto estimate = cgras::oracle::mc_mutual_information(
          config.access_gains.row(c.receiver).transpose(), mixing.entries, c.closed_set.members,
          evaluated.decoded_set(c.receiver), samples, flags.seed);
      if (estimate.stderr_ > 0)
        worst = std::max(worst, std::abs(estimate.estimate - c.bound) / estimate.stderr_);
    }
    std::cout << "mc max |z| = " << worst << "\n";
  }

  std::cout << (feasible ? "feasible" : "infeasible") << "\n";
  return feasible ? kExitOk : kExitInfeasible;
}

int run_optimize(const CommonFlags& flags) {
  const cgras::NetworkConfig config = cgras::load_config_file(flags.config_path);
  const cgras::OptimizerSettings settings = settings_from(flags);
  const cgras::SweepResult result = cgras::sweep(config, settings);

  const fs::path out_dir = flags.out_dir.empty() ? fs::path(".") : fs::path(flags.out_dir);
  if (flags.format != "csv")
    write_file(out_dir / "sweep.json", cgras::serialize(result, config, settings).dump(2) + "\n");
  if (flags.format != "json") write_file(out_dir / "sweep.csv", cgras::sweep_csv(result));

  if (result.global_best) {
    const auto& best = *result.global_best;
    std::cout << "best total power: " << best.report.total_power
              << "  (allocation " << best.allocation_index << ", scheme " << best.scheme_id
              << ", energy/bit " << best.report.total_energy << ")\n";
  } else {
    std::cout << "best total power: none feasible\n";
  }
  if (result.bound.feasible)
    std::cout << "lower bound:      " << result.bound.value << "\n";
  else
    std::cout << "lower bound:      none\n";
  return result.global_best ? kExitOk : kExitInfeasible;
}

int run_bound(const CommonFlags& flags) {
  const cgras::NetworkConfig config = cgras::load_config_file(flags.config_path);
  const cgras::LowerBoundCertificate bound = cgras::lower_bound(config, settings_from(flags));
  const cgras::Json doc = cgras::serialize(bound);
  if (!flags.out_dir.empty()) write_file(fs::path(flags.out_dir) / "bound.json", doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return bound.feasible ? kExitOk : kExitInfeasible;
}

int run_enumerate(const CommonFlags& flags, bool list_allocations, const std::string& alloc_spec,
                  int alloc_index, bool emit_dag) {
  const cgras::NetworkConfig config = cgras::load_config_file(flags.config_path);
  if (list_allocations) {
    cgras::AllocationEnumerator stream(config);
    std::size_t i = 0;
    while (auto alloc = stream.next()) {
      std::cout << i++ << ":";
      for (std::uint32_t mask : alloc->known) std::cout << " " << cgras::format_index_set(mask);
      std::cout << "\n";
    }
    std::cout << "total " << i << " allocations\n";
    return kExitOk;
  }

  cgras::MessageAllocation alloc =
      !alloc_spec.empty() ? parse_allocation_spec(alloc_spec, config)
      : alloc_index >= 0  ? allocation_by_index(static_cast<std::size_t>(alloc_index), config)
                          : full_cognition(config);
  cgras::OptimizerSettings settings = settings_from(flags);
  const auto schemes = cgras::canonical_schemes(alloc, config, cgras::split_grid_from(settings),
                                                static_cast<std::size_t>(settings.scheme_cap));
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    const cgras::Cgras& scheme = schemes[i];
    std::cout << "scheme " << i << ": " << scheme.n_vertices() << " vertices, "
              << scheme.edges.size() << " edges";
    for (int z = 0; z < config.n_receivers; ++z)
      std::cout << " |closed(z=" << z << ")|=" << cgras::enumerate_closed_sets(scheme, z).size();
    std::cout << "\n";
    if (emit_dag) {
      const std::string dot = cgras::to_dot(scheme, config);
      if (!flags.out_dir.empty())
        write_file(fs::path(flags.out_dir) / ("scheme" + std::to_string(i) + ".dot"), dot);
      else
        std::cout << dot;
    }
  }
  std::cout << "total " << schemes.size() << " schemes\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relay-downlink transmission-scheme synthesis and power optimization"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* evaluate = app.add_subcommand("evaluate", "constraint dump and feasibility verdict");
  std::string scheme_path, alloc_spec, mixing_path;
  int canonical_id = -1, alloc_index = -1;
  bool optimize_mixing = false, emit_dag = false, mc_check = false;
  std::size_t samples = 200000;
  add_common(evaluate, flags);
  evaluate->add_option("--scheme", scheme_path, "scheme JSON file");
  evaluate->add_option("--canonical", canonical_id, "canonical scheme id");
  evaluate->add_option("--alloc", alloc_spec, "allocation, e.g. \"0,1;0\"");
  evaluate->add_option("--alloc-index", alloc_index, "allocation by enumeration index");
  evaluate->add_option("--mixing", mixing_path, "mixing matrix JSON file");
  evaluate->add_flag("--optimize-mixing", optimize_mixing, "derive the mixing by optimization");
  evaluate->add_flag("--emit-dag", emit_dag, "write the scheme DAG");
  evaluate->add_flag("--mc-check", mc_check, "cross-check bounds by simulation");
  evaluate->add_option("--samples", samples, "simulation samples for --mc-check");

  auto* optimize = app.add_subcommand("optimize", "cognition sweep with lower bound");
  add_common(optimize, flags, true);

  auto* bound = app.add_subcommand("bound", "total-power lower bound report");
  add_common(bound, flags);

  auto* enumerate = app.add_subcommand("enumerate", "list allocations or canonical schemes");
  bool list_allocations = false;
  std::string en_alloc_spec;
  int en_alloc_index = -1;
  bool en_emit_dag = false;
  add_common(enumerate, flags);
  enumerate->add_flag("--allocations", list_allocations, "list every allocation");
  enumerate->add_option("--schemes", en_alloc_spec, "list schemes for an allocation spec");
  enumerate->add_option("--schemes-index", en_alloc_index, "list schemes for an allocation index");
  enumerate->add_flag("--emit-dag", en_emit_dag, "write DAG files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (evaluate->parsed())
      return run_evaluate(flags, scheme_path, canonical_id, alloc_spec, alloc_index, mixing_path,
                          optimize_mixing, emit_dag, mc_check, samples);
    if (optimize->parsed()) return run_optimize(flags);
    if (bound->parsed()) return run_bound(flags);
    if (enumerate->parsed())
      return run_enumerate(flags, list_allocations, en_alloc_spec, en_alloc_index, en_emit_dag);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
