#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace cgras {

using Complex = std::complex<double>;
using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Index-set helpers. Relay and receiver index sets are stored as bitmasks
// (bit i set <=> index i in the set); the network size limit is 16 per side.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t bit(int i) { return std::uint32_t{1} << i; }
inline constexpr bool has_bit(std::uint32_t mask, int i) { return (mask >> i) & 1u; }
inline constexpr bool subset_of(std::uint32_t a, std::uint32_t b) { return (a & ~b) == 0; }

std::uint32_t mask_of(const std::vector<int>& indices);
std::vector<int> mask_to_list(std::uint32_t mask);

/// Renders a bitmask as "{0,2,3}" for diagnostics and DAG dumps.
std::string format_index_set(std::uint32_t mask);

// ---------------------------------------------------------------------------
// Problem instance
// ---------------------------------------------------------------------------

/// Raised by config parsing/validation; carries the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A relay-assisted downlink instance: a base station feeding n_relays relays
/// over orthogonal channels (complex gains relay_gains), relays reaching
/// n_receivers receivers over a shared band (complex gain matrix
/// access_gains, one row per receiver). Noise is unit-variance on every
/// link; SNR scaling is expressed through gains and powers.
struct NetworkConfig {
  int n_relays = 0;
  int n_receivers = 0;
  std::vector<Complex> relay_gains;               // per-relay feeder gain, nonzero
  Eigen::MatrixXcd access_gains;                  // n_receivers x n_relays
  std::optional<double> bs_power_cap;             // nullopt = unbounded
  std::vector<std::optional<double>> relay_power_caps;
  std::vector<double> target_rates;               // bits per channel use

  double total_rate() const;
  std::uint32_t positive_rate_mask() const;       // receivers with rate > 0
};

/// Parses and validates a config document. Complex entries are accepted as
/// {"re":..,"im":..} or {"mag":..,"phase":..} (phase in radians) or a bare
/// number (imaginary part zero). Power caps are numbers or the string "inf".
NetworkConfig load_config(const Json& doc);
NetworkConfig load_config_file(const std::string& path);

/// Inverse of load_config: emits the canonical {re,im} / "inf" document.
Json serialize(const NetworkConfig& config);

/// Energy per delivered bit: p_tot / sum(rates).
/// Throws std::domain_error when the rate sum is zero.
double total_energy(double p_tot, const std::vector<double>& rates);

// ---------------------------------------------------------------------------
// Message allocation (which receivers' messages each relay can encode)
// ---------------------------------------------------------------------------

struct MessageAllocation {
  /// known[j] = bitmask over receiver indices whose message relay j holds.
  std::vector<std::uint32_t> known;

  bool knows(int relay, int receiver) const { return has_bit(known[relay], receiver); }

  /// Bitmask over relays that hold receiver z's message.
  std::uint32_t relays_knowing(int receiver) const;

  /// Total number of (relay, message) grants; the tie-break "cognition" size.
  int cognition_count() const;

  bool operator==(const MessageAllocation&) const = default;
};

/// Throws std::invalid_argument if indices are out of range or some
/// positive-rate message is held by no relay.
void validate_allocation(const MessageAllocation& alloc, const NetworkConfig& config);

Json serialize(const MessageAllocation& alloc);
MessageAllocation allocation_from_json(const Json& doc, const NetworkConfig& config);

/// Streams every allocation in which each positive-rate message is held by at
/// least one relay. Order is deterministic: the per-message relay-subset
/// masks form an odometer (message with the lowest index most significant,
/// masks counting 1 .. 2^n_relays-1). Zero-rate messages are never assigned.
class AllocationEnumerator {
 public:
  AllocationEnumerator(const NetworkConfig& config, std::optional<std::size_t> cap = {});

  std::optional<MessageAllocation> next();

  /// (2^n_relays - 1)^k for k positive-rate messages, before any cap.
  std::size_t total_count() const { return total_; }

 private:
  int n_relays_ = 0;
  std::vector<int> messages_;            // positive-rate receiver indices
  std::vector<std::uint32_t> counters_;  // per-message relay mask, 1-based
  std::size_t total_ = 0;
  std::size_t emitted_ = 0;
  std::optional<std::size_t> cap_;
  bool done_ = false;
};

/// Collects the stream; cap truncates in enumeration order.
std::vector<MessageAllocation> enumerate_allocations(const NetworkConfig& config,
                                                     std::optional<std::size_t> cap = {});

// ---------------------------------------------------------------------------
// Solver answer
// ---------------------------------------------------------------------------

struct PowerReport {
  std::vector<double> bs_power_per_relay;   // feeder power spent for each relay
  std::vector<double> relay_powers;         // access-link power spent by each relay
  double total_power = 0.0;                 // sum of everything above
  double total_energy = 0.0;                // total_power / sum of target rates
  std::vector<std::string> binding_constraints;
};

Json serialize(const PowerReport& report);

}  // namespace cgras
