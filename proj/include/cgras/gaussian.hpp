#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cgras/model.hpp"
#include "cgras/scheme.hpp"

namespace cgras {

// ---------------------------------------------------------------------------
// Closed-form Gaussian rate machinery.
//
// Convention used throughout the project: capacities and bounds are
// C(x) = (1/2) * log2(1 + x) bits per channel use, with unit-variance noise,
// also for complex-valued channels. Rates are only comparable within this
// convention.
// ---------------------------------------------------------------------------

/// (1/2) log2(1 + snr). Rejects negative input.
double capacity_scalar(double snr);

/// Linear map from unit-variance codeword symbols to relay channel inputs.
/// Rows are relays, columns are vertices of the owning scheme (column v is
/// vertex v). Row j may be nonzero only at vertices encoded by relay j;
/// the squared row norm is relay j's spent access power.
struct MixingMatrix {
  Eigen::MatrixXcd entries;  // n_relays x n_vertices

  double row_power(int relay) const { return entries.row(relay).squaredNorm(); }
  double total_power() const { return entries.squaredNorm(); }
};

/// True iff every nonzero entry sits on an encoder of its column's vertex.
bool support_valid(const MixingMatrix& a, const Cgras& scheme);

/// One decodability condition: sum of the sub-rates of `lhs_vertices` must
/// stay below `bound` (bits per channel use).
struct RateConstraint {
  int receiver = 0;
  ClosedSet closed_set;
  double bound = 0.0;
  std::vector<int> lhs_vertices;  // members of closed_set, ascending
};

/// The achievable-rate bound for receiver z and closed set F:
///   (1/2) log2( (1 + P_F + P_ext) / (1 + P_ext) )
/// where P_F sums the received powers |h_z . A_col(v)|^2 over v in F and
/// P_ext over the vertices z does not decode (interference treated as
/// noise); decoded vertices outside F are conditioned away. Values below
/// 1e-12 are clamped to zero. Throws std::invalid_argument when F is not a
/// child-closed subset of z's decoded set or A violates the support rule.
RateConstraint rate_bound(const NetworkConfig& config, const Cgras& scheme,
                          const MixingMatrix& a, int receiver, std::uint64_t closed_members);

/// Every (receiver, closed set) constraint of the scheme, receiver-major,
/// member mask ascending. A sub-rate vector r is deliverable iff
/// sum_{v in F} r_v <= bound for every returned constraint.
std::vector<RateConstraint> region_constraints(const NetworkConfig& config, const Cgras& scheme,
                                               const MixingMatrix& a);

/// csv: receiver,closed_set_id,member_vertices,bound_bits
std::string constraints_csv(const std::vector<RateConstraint>& constraints);

/// Feeder-link answer: minimal per-relay base-station powers delivering every
/// held message at its full target rate, P_j = (2^(2 S_j) - 1) / |d_j|^2 with
/// S_j the summed rates held by relay j. `within_cap` is false when the total
/// exceeds the base-station cap (infeasibility is a value here, so sweeps can
/// discard the allocation and continue).
struct RelayLinkResult {
  std::vector<double> bs_power_per_relay;
  double total = 0.0;
  bool within_cap = true;
};

RelayLinkResult relay_link_power(const NetworkConfig& config, const MessageAllocation& alloc,
                                 const std::vector<double>& rates);

/// One cut constraint of the converse region: for receiver subset Z,
///   sum_{z in Z} R_z <= (1/2) log2 det(I + (H_Z A_Z)(H_Z A_Z)^H)
/// where H_Z keeps the rows in Z and A_Z the columns in Z (messages outside
/// Z are conditioned away).
struct OuterBoundConstraint {
  std::uint32_t receiver_set = 0;
  double bound = 0.0;
};

/// Cut bounds for every nonempty receiver subset, ascending by subset mask.
/// `a_ob` has one column per message; entry (j, z) may be nonzero only when
/// relay j holds message z. Throws std::invalid_argument on support
/// violations.
std::vector<OuterBoundConstraint> outer_bound_constraints(const NetworkConfig& config,
                                                          const MessageAllocation& alloc,
                                                          const Eigen::MatrixXcd& a_ob);

}  // namespace cgras
