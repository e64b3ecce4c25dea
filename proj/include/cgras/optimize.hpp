#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cgras/gaussian.hpp"
#include "cgras/model.hpp"
#include "cgras/scheme.hpp"

namespace cgras {

struct OptimizerSettings {
  int grid_resolution = 3;        // split grid {1/(r+1), ..., r/(r+1)}
  int max_restarts = 4;           // starts per inner solve (plus warm start)
  double step_init = 0.25;        // initial gradient step
  double tolerance_feas = 1e-6;   // bits; constraint satisfaction slack
  double tolerance_power = 1e-6;  // power tie/compare slack
  int scheme_cap = 16;            // canonical schemes per allocation
  std::uint64_t seed = 1;
};

/// Throws std::invalid_argument on nonpositive fields or tolerances >= 1.
void validate_settings(const OptimizerSettings& settings);

/// The split fractions induced by grid_resolution.
std::vector<double> split_grid_from(const OptimizerSettings& settings);

/// Full solution of one scheme: the report plus the optimizing mixing matrix
/// and refined split fractions.
struct SchemeSolution {
  PowerReport report;
  MixingMatrix mixing;
  SplitMatrix gamma;
};

/// Minimizes total spent power for a fixed scheme: feeder side inverted in
/// closed form from the allocation, access side searched over admissible
/// mixing matrices (multi-start projected gradient with a feasibility
/// penalty, split fractions refined by interleaved simplex-projected steps,
/// then scaling polish to land on the constraint boundary). Returns nullopt
/// when no start meets every constraint within tolerance_feas at cap powers.
std::optional<SchemeSolution> solve_scheme(const NetworkConfig& config, const Cgras& scheme,
                                           const OptimizerSettings& settings);

/// solve_scheme, keeping only the report.
std::optional<PowerReport> min_power_for_scheme(const NetworkConfig& config, const Cgras& scheme,
                                                const OptimizerSettings& settings);

/// Converse on total power: best over allocations of (feeder inversion +
/// minimal access power satisfying every cut bound). The inner minimization
/// is multi-start projected gradient over the per-message mixing matrix,
/// with a coarse grid-seeded start when the variable count is at most 6.
struct LowerBoundCertificate {
  bool feasible = false;
  double value = 0.0;
  MessageAllocation allocation;        // argmin allocation
  Eigen::MatrixXcd a_ob;               // access-side certificate
  std::vector<double> bs_power_per_relay;
};

LowerBoundCertificate lower_bound(const NetworkConfig& config, const OptimizerSettings& settings);

// ---------------------------------------------------------------------------
// Cognition sweep
// ---------------------------------------------------------------------------

struct SweepCell {
  int allocation_index = 0;
  int scheme_id = 0;
  bool feasible = false;
  PowerReport report;  // zeroed when infeasible
};

struct AllocationRecord {
  MessageAllocation allocation;
  int best_scheme_id = -1;                // -1: no feasible scheme
  std::optional<PowerReport> best;
};

struct SweepResult {
  std::vector<AllocationRecord> records;  // one per allocation, enumeration order
  std::vector<SweepCell> cells;           // one per (allocation, scheme)
  std::optional<SweepCell> global_best;
  LowerBoundCertificate bound;
};

/// Runs every allocation x canonical scheme cell. Deterministic for a fixed
/// seed: each cell derives its own RNG stream from (seed, cell indices).
/// Ties on total power (within tolerance_power) prefer fewer held messages,
/// then earlier enumeration order.
SweepResult sweep(const NetworkConfig& config, const OptimizerSettings& settings);

Json serialize(const OptimizerSettings& settings);
Json serialize(const LowerBoundCertificate& bound);
Json serialize(const SweepResult& result, const NetworkConfig& config,
               const OptimizerSettings& settings);

/// csv: allocation,scheme_id,feasible,bs_power,relay_powers,total_power,total_energy
/// (allocation = per-relay known-message masks joined by '|'; relay_powers
/// '|'-joined; numeric fields empty on infeasible cells).
std::string sweep_csv(const SweepResult& result);

}  // namespace cgras
