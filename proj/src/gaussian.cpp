#include "cgras/gaussian.hpp"

#include <cmath>
#include <sstream>

namespace cgras {

namespace {

constexpr double kBoundClamp = 1e-12;  // rounding guard near zero

double clamp_bound(double value) { return value < kBoundClamp ? 0.0 : value; }

Complex row_dot(const Eigen::RowVectorXcd& h, const Eigen::MatrixXcd& a, int col) {
  Complex acc{0.0, 0.0};
  for (Eigen::Index j = 0; j < h.size(); ++j) acc += h(j) * a(j, col);
  return acc;
}

/// Received power of column v at receiver row h: |h . a_col|^2.
double column_power(const Eigen::RowVectorXcd& h, const Eigen::MatrixXcd& a, int v) {
  return std::norm(row_dot(h, a, v));
}

}  // namespace

double capacity_scalar(double snr) {
  if (snr < 0) throw std::domain_error("snr must be >= 0");
  return clamp_bound(0.5 * std::log2(1.0 + snr));
}

bool support_valid(const MixingMatrix& a, const Cgras& scheme) {
  if (a.entries.rows() != static_cast<Eigen::Index>(scheme.allocation.known.size()) ||
      a.entries.cols() != scheme.n_vertices())
    return false;
  for (int v = 0; v < scheme.n_vertices(); ++v)
    for (Eigen::Index j = 0; j < a.entries.rows(); ++j)
      if (a.entries(j, v) != Complex{0.0, 0.0} &&
          !has_bit(scheme.vertices[v].encoders, static_cast<int>(j)))
        return false;
  return true;
}

RateConstraint rate_bound(const NetworkConfig& config, const Cgras& scheme,
                          const MixingMatrix& a, int receiver, std::uint64_t closed_members) {
  if (receiver < 0 || receiver >= config.n_receivers)
    throw std::invalid_argument("receiver index out of range");
  if (!support_valid(a, scheme))
    throw std::invalid_argument("mixing matrix violates the encoder support rule");

  const std::uint64_t decoded = scheme.decoded_set(receiver);
  if ((closed_members & ~decoded) != 0)
    throw std::invalid_argument("closed set contains vertices the receiver does not decode");
  const auto children = scheme.children_masks();
  for (int v = 0; v < scheme.n_vertices(); ++v)
    if ((closed_members >> v & 1) && ((children[v] & decoded) & ~closed_members) != 0)
      throw std::invalid_argument("set not closed under children for receiver " +
                                  std::to_string(receiver));

  const Eigen::RowVectorXcd h = config.access_gains.row(receiver);
  double p_closed = 0.0;
  double p_ext = 0.0;
  for (int v = 0; v < scheme.n_vertices(); ++v) {
    if (!(decoded >> v & 1))
      p_ext += column_power(h, a.entries, v);
    else if (closed_members >> v & 1)
      p_closed += column_power(h, a.entries, v);
  }

  RateConstraint constraint;
  constraint.receiver = receiver;
  constraint.closed_set = ClosedSet{receiver, closed_members};
  constraint.bound = clamp_bound(0.5 * std::log2((1.0 + p_closed + p_ext) / (1.0 + p_ext)));
  for (int v = 0; v < scheme.n_vertices(); ++v)
    if (closed_members >> v & 1) constraint.lhs_vertices.push_back(v);
  return constraint;
}

std::vector<RateConstraint> region_constraints(const NetworkConfig& config, const Cgras& scheme,
                                               const MixingMatrix& a) {
  std::vector<RateConstraint> constraints;
  for (int z = 0; z < config.n_receivers; ++z)
    for (const ClosedSet& set : enumerate_closed_sets(scheme, z))
      constraints.push_back(rate_bound(config, scheme, a, z, set.members));
  return constraints;
}

std::string constraints_csv(const std::vector<RateConstraint>& constraints) {
  std::ostringstream os;
  os << "receiver,closed_set_id,member_vertices,bound_bits\n";
  int id = 0;
  int last_receiver = -1;
  for (const RateConstraint& c : constraints) {
    if (c.receiver != last_receiver) {
      id = 0;
      last_receiver = c.receiver;
    }
    os << c.receiver << ',' << id++ << ',';
    for (std::size_t i = 0; i < c.lhs_vertices.size(); ++i) {
      if (i) os << '|';
      os << c.lhs_vertices[i];
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", c.bound);
    os << ',' << buf << '\n';
  }
  return os.str();
}

RelayLinkResult relay_link_power(const NetworkConfig& config, const MessageAllocation& alloc,
                                 const std::vector<double>& rates) {
  validate_allocation(alloc, config);
  if (static_cast<int>(rates.size()) != config.n_receivers)
    throw std::invalid_argument("rate vector does not match the receiver count");
  for (double r : rates)
    if (r < 0) throw std::invalid_argument("rates must be >= 0");

  RelayLinkResult result;
  for (int j = 0; j < config.n_relays; ++j) {
    double held_rate = 0.0;
    for (int z = 0; z < config.n_receivers; ++z)
      if (alloc.knows(j, z)) held_rate += rates[z];
    // Invert (1/2) log2(1 + |d|^2 P) = held_rate.
    const double power = (std::exp2(2.0 * held_rate) - 1.0) / std::norm(config.relay_gains[j]);
    result.bs_power_per_relay.push_back(power);
    result.total += power;
  }
  if (config.bs_power_cap && result.total > *config.bs_power_cap + 1e-12)
    result.within_cap = false;
  return result;
}

std::vector<OuterBoundConstraint> outer_bound_constraints(const NetworkConfig& config,
                                                          const MessageAllocation& alloc,
                                                          const Eigen::MatrixXcd& a_ob) {
  validate_allocation(alloc, config);
  if (a_ob.rows() != config.n_relays || a_ob.cols() != config.n_receivers)
    throw std::invalid_argument("per-message mixing matrix must be n_relays x n_receivers");
  for (int j = 0; j < config.n_relays; ++j)
    for (int z = 0; z < config.n_receivers; ++z)
      if (a_ob(j, z) != Complex{0.0, 0.0} && !alloc.knows(j, z))
        throw std::invalid_argument("mixing entry (" + std::to_string(j) + "," +
                                    std::to_string(z) + ") set but the relay does not hold the message");

  std::vector<OuterBoundConstraint> constraints;
  const std::uint32_t full = bit(config.n_receivers) - 1;
  for (std::uint32_t subset = 1; subset <= full; ++subset) {
    const auto rows = mask_to_list(subset);
    const int k = static_cast<int>(rows.size());
    Eigen::MatrixXcd m(k, k);  // H_Z A_Z
    for (int r = 0; r < k; ++r) {
      const Eigen::RowVectorXcd h = config.access_gains.row(rows[r]);
      for (int c = 0; c < k; ++c) m(r, c) = row_dot(h, a_ob, rows[c]);
    }
    const Eigen::MatrixXcd gram =
        Eigen::MatrixXcd::Identity(k, k) + m * m.adjoint();
    // log-det through the Cholesky factor of a Hermitian PD matrix.
    Eigen::LLT<Eigen::MatrixXcd> llt(gram);
    double log_det = 0.0;
    if (llt.info() == Eigen::Success) {
      for (int i = 0; i < k; ++i) log_det += 2.0 * std::log2(std::real(llt.matrixL()(i, i)));
    }
    constraints.push_back({subset, clamp_bound(0.5 * log_det)});
  }
  return constraints;
}

}  // namespace cgras
