#include "cgras/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cgras {

namespace {

constexpr int kMaxSideSize = 16;  // relays / receivers each

double parse_number(const Json& node, const std::string& path) {
  if (!node.is_number()) throw ConfigError(path, "expected a number");
  const double value = node.get<double>();
  if (!std::isfinite(value)) throw ConfigError(path, "malformed number");
  return value;
}

Complex parse_complex(const Json& node, const std::string& path) {
  if (node.is_number()) return Complex(parse_number(node, path), 0.0);
  if (!node.is_object())
    throw ConfigError(path, "expected {re,im}, {mag,phase} or a number");
  if (node.contains("re") || node.contains("im")) {
    if (!node.contains("re") || !node.contains("im"))
      throw ConfigError(path, "needs both re and im");
    return Complex(parse_number(node.at("re"), path + ".re"),
                   parse_number(node.at("im"), path + ".im"));
  }
  if (node.contains("mag") || node.contains("phase")) {
    if (!node.contains("mag") || !node.contains("phase"))
      throw ConfigError(path, "needs both mag and phase");
    const double mag = parse_number(node.at("mag"), path + ".mag");
    const double phase = parse_number(node.at("phase"), path + ".phase");
    if (mag < 0) throw ConfigError(path + ".mag", "magnitude must be >= 0");
    return std::polar(mag, phase);
  }
  throw ConfigError(path, "expected {re,im}, {mag,phase} or a number");
}

std::optional<double> parse_cap(const Json& node, const std::string& path) {
  if (node.is_string()) {
    if (node.get<std::string>() == "inf") return std::nullopt;
    throw ConfigError(path, "expected a number or \"inf\"");
  }
  const double value = parse_number(node, path);
  if (value < 0) throw ConfigError(path, "power cap must be >= 0");
  return value;
}

const Json& require_field(const Json& doc, const char* name) {
  if (!doc.contains(name)) throw ConfigError(name, "missing field");
  return doc.at(name);
}

Json complex_to_json(const Complex& value) {
  return Json{{"im", value.imag()}, {"re", value.real()}};
}

}  // namespace

std::uint32_t mask_of(const std::vector<int>& indices) {
  std::uint32_t mask = 0;
  for (int i : indices) mask |= bit(i);
  return mask;
}

std::vector<int> mask_to_list(std::uint32_t mask) {
  std::vector<int> out;
  for (int i = 0; mask >> i; ++i)
    if (has_bit(mask, i)) out.push_back(i);
  return out;
}

std::string format_index_set(std::uint32_t mask) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int i : mask_to_list(mask)) {
    if (!first) os << ',';
    os << i;
    first = false;
  }
  os << '}';
  return os.str();
}

double NetworkConfig::total_rate() const {
  return std::accumulate(target_rates.begin(), target_rates.end(), 0.0);
}

std::uint32_t NetworkConfig::positive_rate_mask() const {
  std::uint32_t mask = 0;
  for (int z = 0; z < n_receivers; ++z)
    if (target_rates[z] > 0) mask |= bit(z);
  return mask;
}

NetworkConfig load_config(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config document must be an object");
  NetworkConfig config;

  const Json& nr = require_field(doc, "n_relays");
  if (!nr.is_number_integer() || nr.get<int>() < 1)
    throw ConfigError("n_relays", "expected a positive integer");
  config.n_relays = nr.get<int>();
  if (config.n_relays > kMaxSideSize) throw ConfigError("n_relays", "at most 16 relays supported");

  const Json& nx = require_field(doc, "n_receivers");
  if (!nx.is_number_integer() || nx.get<int>() < 1)
    throw ConfigError("n_receivers", "expected a positive integer");
  config.n_receivers = nx.get<int>();
  if (config.n_receivers > kMaxSideSize)
    throw ConfigError("n_receivers", "at most 16 receivers supported");

  const Json& gains = require_field(doc, "relay_gains");
  if (!gains.is_array() || static_cast<int>(gains.size()) != config.n_relays)
    throw ConfigError("relay_gains", "expected " + std::to_string(config.n_relays) + " entries");
  for (int j = 0; j < config.n_relays; ++j) {
    const std::string path = "relay_gains[" + std::to_string(j) + "]";
    const Complex gain = parse_complex(gains.at(j), path);
    if (std::abs(gain) == 0.0) throw ConfigError(path, "zero relay gain disconnects the relay");
    config.relay_gains.push_back(gain);
  }

  const Json& access = require_field(doc, "access_gains");
  if (!access.is_array() || static_cast<int>(access.size()) != config.n_receivers)
    throw ConfigError("access_gains", "expected " + std::to_string(config.n_receivers) + " rows");
  config.access_gains.resize(config.n_receivers, config.n_relays);
  for (int z = 0; z < config.n_receivers; ++z) {
    const Json& row = access.at(z);
    const std::string row_path = "access_gains[" + std::to_string(z) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != config.n_relays)
      throw ConfigError(row_path, "expected " + std::to_string(config.n_relays) + " entries");
    for (int j = 0; j < config.n_relays; ++j)
      config.access_gains(z, j) = parse_complex(row.at(j), row_path + "[" + std::to_string(j) + "]");
  }

  config.bs_power_cap = parse_cap(require_field(doc, "bs_power_cap"), "bs_power_cap");

  const Json& caps = require_field(doc, "relay_power_caps");
  if (!caps.is_array() || static_cast<int>(caps.size()) != config.n_relays)
    throw ConfigError("relay_power_caps",
                      "expected " + std::to_string(config.n_relays) + " entries");
  for (int j = 0; j < config.n_relays; ++j)
    config.relay_power_caps.push_back(
        parse_cap(caps.at(j), "relay_power_caps[" + std::to_string(j) + "]"));

  const Json& rates = require_field(doc, "target_rates");
  if (!rates.is_array() || static_cast<int>(rates.size()) != config.n_receivers)
    throw ConfigError("target_rates",
                      "expected " + std::to_string(config.n_receivers) + " entries");
  for (int z = 0; z < config.n_receivers; ++z) {
    const std::string path = "target_rates[" + std::to_string(z) + "]";
    const double rate = parse_number(rates.at(z), path);
    if (rate < 0) throw ConfigError(path, "target rate must be >= 0");
    config.target_rates.push_back(rate);
  }

  return config;
}

NetworkConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  Json doc;
  try {
    in >> doc;
  } catch (const Json::parse_error& err) {
    throw ConfigError(path, std::string("parse error: ") + err.what());
  }
  return load_config(doc);
}

Json serialize(const NetworkConfig& config) {
  Json gains = Json::array();
  for (const Complex& g : config.relay_gains) gains.push_back(complex_to_json(g));

  Json access = Json::array();
  for (int z = 0; z < config.n_receivers; ++z) {
    Json row = Json::array();
    for (int j = 0; j < config.n_relays; ++j)
      row.push_back(complex_to_json(config.access_gains(z, j)));
    access.push_back(std::move(row));
  }

  Json caps = Json::array();
  for (const auto& cap : config.relay_power_caps)
    caps.push_back(cap ? Json(*cap) : Json("inf"));

  return Json{{"n_relays", config.n_relays},
              {"n_receivers", config.n_receivers},
              {"relay_gains", std::move(gains)},
              {"access_gains", std::move(access)},
              {"bs_power_cap", config.bs_power_cap ? Json(*config.bs_power_cap) : Json("inf")},
              {"relay_power_caps", std::move(caps)},
              {"target_rates", config.target_rates}};
}

double total_energy(double p_tot, const std::vector<double>& rates) {
  if (p_tot < 0) throw std::domain_error("total power must be >= 0");
  double sum = 0.0;
  for (double r : rates) {
    if (r < 0) throw std::domain_error("rates must be >= 0");
    sum += r;
  }
  if (sum <= 0) throw std::domain_error("energy per bit undefined for zero total rate");
  return p_tot / sum;
}

std::uint32_t MessageAllocation::relays_knowing(int receiver) const {
  std::uint32_t mask = 0;
  for (std::size_t j = 0; j < known.size(); ++j)
    if (has_bit(known[j], receiver)) mask |= bit(static_cast<int>(j));
  return mask;
}

int MessageAllocation::cognition_count() const {
  int count = 0;
  for (std::uint32_t mask : known) count += std::popcount(mask);
  return count;
}

void validate_allocation(const MessageAllocation& alloc, const NetworkConfig& config) {
  if (static_cast<int>(alloc.known.size()) != config.n_relays)
    throw std::invalid_argument("allocation must list one known-set per relay");
  const std::uint32_t receiver_range = (config.n_receivers >= 32)
                                           ? ~std::uint32_t{0}
                                           : bit(config.n_receivers) - 1;
  for (std::uint32_t mask : alloc.known)
    if ((mask & ~receiver_range) != 0)
      throw std::invalid_argument("allocation references a receiver out of range");
  for (int z = 0; z < config.n_receivers; ++z)
    if (config.target_rates[z] > 0 && alloc.relays_knowing(z) == 0)
      throw std::invalid_argument("message " + std::to_string(z) +
                                  " has positive rate but no holder relay");
}

Json serialize(const MessageAllocation& alloc) {
  Json known = Json::array();
  for (std::uint32_t mask : alloc.known) known.push_back(mask_to_list(mask));
  return Json{{"known", std::move(known)}};
}

MessageAllocation allocation_from_json(const Json& doc, const NetworkConfig& config) {
  const Json& known = doc.is_object() ? require_field(doc, "known") : doc;
  if (!known.is_array()) throw ConfigError("known", "expected an array of index lists");
  MessageAllocation alloc;
  for (const Json& entry : known) {
    if (!entry.is_array()) throw ConfigError("known", "expected an array of index lists");
    std::vector<int> indices;
    for (const Json& idx : entry) {
      if (!idx.is_number_integer() || idx.get<int>() < 0)
        throw ConfigError("known", "indices must be nonnegative integers");
      indices.push_back(idx.get<int>());
    }
    alloc.known.push_back(mask_of(indices));
  }
  validate_allocation(alloc, config);
  return alloc;
}

AllocationEnumerator::AllocationEnumerator(const NetworkConfig& config,
                                           std::optional<std::size_t> cap)
    : n_relays_(config.n_relays), cap_(cap) {
  for (int z = 0; z < config.n_receivers; ++z)
    if (config.target_rates[z] > 0) messages_.push_back(z);
  counters_.assign(messages_.size(), 1u);
  const std::size_t options = (std::size_t{1} << n_relays_) - 1;
  total_ = 1;
  for (std::size_t i = 0; i < messages_.size(); ++i) total_ *= options;
  if (messages_.empty()) total_ = 1;  // the empty allocation
}

std::optional<MessageAllocation> AllocationEnumerator::next() {
  if (done_ || (cap_ && emitted_ >= *cap_)) return std::nullopt;

  MessageAllocation alloc;
  alloc.known.assign(n_relays_, 0u);
  for (std::size_t i = 0; i < messages_.size(); ++i)
    for (int j = 0; j < n_relays_; ++j)
      if (has_bit(counters_[i], j)) alloc.known[j] |= bit(messages_[i]);
  ++emitted_;

  // Odometer step: last message fastest, masks run 1 .. 2^n_relays - 1.
  const std::uint32_t last = bit(n_relays_) - 1;
  done_ = true;
  for (std::size_t i = counters_.size(); i-- > 0;) {
    if (counters_[i] < last) {
      ++counters_[i];
      for (std::size_t k = i + 1; k < counters_.size(); ++k) counters_[k] = 1u;
      done_ = false;
      break;
    }
  }
  if (messages_.empty()) done_ = true;
  return alloc;
}

std::vector<MessageAllocation> enumerate_allocations(const NetworkConfig& config,
                                                     std::optional<std::size_t> cap) {
  AllocationEnumerator stream(config, cap);
  std::vector<MessageAllocation> out;
  while (auto alloc = stream.next()) out.push_back(std::move(*alloc));
  return out;
}

Json serialize(const PowerReport& report) {
  return Json{{"bs_power_per_relay", report.bs_power_per_relay},
              {"relay_powers", report.relay_powers},
              {"total_power", report.total_power},
              {"total_energy", report.total_energy},
              {"binding_constraints", report.binding_constraints}};
}

}  // namespace cgras
