#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgras/model.hpp"
#include "cgras/scheme.hpp"

namespace cgras::oracle {

// ---------------------------------------------------------------------------
// Independent verification routes used by the test suites. Everything in
// this namespace recomputes its answers from scratch (own covariance
// accumulation, own Cholesky log-determinants, own subset filters) and must
// stay decoupled from the closed-form engine it cross-checks.
// ---------------------------------------------------------------------------

struct McEstimate {
  double estimate = 0.0;  // bits per channel use
  double stderr_ = 0.0;   // batch-means standard error of `estimate`
};

/// Simulates y = h^T A u + w with unit complex Gaussian codeword symbols u
/// and noise w, then evaluates the Gaussian conditional mutual information
/// I(y ; u_F | u_{decoded \ F}) of the sample covariance (known zero mean),
/// under the project-wide (1/2) log2 convention. The point estimate uses all
/// samples; the standard error comes from 20 batch re-estimates. Throws
/// std::runtime_error when a sample covariance block is not positive
/// definite (increase samples).
McEstimate mc_mutual_information(const Eigen::VectorXcd& h_row, const Eigen::MatrixXcd& a,
                                 std::uint64_t f_mask, std::uint64_t decoded_mask,
                                 std::size_t samples, std::uint64_t seed);

/// Exhaustive feasibility search for one scheme: per-relay access powers on a
/// step grid (and per-relay fraction splits across that relay's vertices at
/// `split_resolution` when a relay encodes several), mixing phases aligned to
/// the lowest-index decoder of each vertex. Returns the minimal feasible
/// total access power on the grid, nullopt if nothing on the grid is
/// feasible. Accurate up to grid granularity for single-receiver instances
/// where phase alignment is optimal. Throws std::invalid_argument when the
/// grid dimension exceeds 6. p_max < 0 picks a bound that covers any
/// single-relay fallback solution.
std::optional<double> grid_feasible_power(const NetworkConfig& config, const Cgras& scheme,
                                          double resolution, double p_max = -1.0,
                                          double split_resolution = 0.25);

/// Grid analogue of the converse bound: for every allocation, feeder powers
/// by direct inversion plus a per-relay power/fraction grid over the
/// per-message mixing matrix checked against every cut bound (own
/// log-determinants). Returns total power and the argmin allocation index.
struct GridBound {
  double value = 0.0;
  std::size_t allocation_index = 0;
};

std::optional<GridBound> grid_lower_bound(const NetworkConfig& config, double resolution,
                                          double p_max = -1.0, double split_resolution = 0.25);

/// Filters all 2^|decoded| - 1 nonempty subsets by the child-closure
/// predicate. Member masks over global vertex indices, ascending. Guarded at
/// 20 decoded vertices.
std::vector<std::uint64_t> brute_closed_sets(const std::vector<Vertex>& vertices,
                                             const std::vector<std::pair<int, int>>& edges,
                                             int receiver);

}  // namespace cgras::oracle
