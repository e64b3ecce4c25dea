#include "cgras/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

// Self-contained on purpose: this translation unit re-derives covariances,
// determinants and feasibility checks with its own arithmetic so the answers
// do not inherit bugs from the engine they validate. Eigen types appear only
// at the call boundary.

namespace cgras::oracle {

namespace {

using Cx = std::complex<double>;

/// Dense Hermitian matrix in row-major std::vector storage.
struct HermitianMatrix {
  int n = 0;
  std::vector<Cx> data;

  explicit HermitianMatrix(int size) : n(size), data(static_cast<std::size_t>(size) * size) {}
  Cx& at(int r, int c) { return data[static_cast<std::size_t>(r) * n + c]; }
  const Cx& at(int r, int c) const { return data[static_cast<std::size_t>(r) * n + c]; }
};

/// log2 det via an in-place Cholesky factorization; throws when the matrix is
/// not numerically positive definite.
double log2_det_hermitian(HermitianMatrix m) {
  double log2_det = 0.0;
  for (int k = 0; k < m.n; ++k) {
    double diag = m.at(k, k).real();
    for (int i = 0; i < k; ++i) diag -= std::norm(m.at(k, i));
    if (!(diag > 0.0)) throw std::runtime_error("degenerate covariance, increase samples");
    const double l_kk = std::sqrt(diag);
    log2_det += 2.0 * std::log2(l_kk);
    m.at(k, k) = l_kk;
    for (int r = k + 1; r < m.n; ++r) {
      Cx value = m.at(r, k);
      for (int i = 0; i < k; ++i) value -= m.at(r, i) * std::conj(m.at(k, i));
      m.at(r, k) = value / l_kk;
    }
  }
  return log2_det;
}

/// Gaussian conditional mutual information (the project's half-log2
/// convention) of a joint covariance over blocks [y | F | G]:
///   I(y; F | G) = 1/2 [ log2 det S_{yG} + log2 det S_{FG}
///                       - log2 det S_{yFG} - log2 det S_G ].
double conditional_mi_from_cov(const HermitianMatrix& cov, int dim_f, int dim_g) {
  auto block = [&cov](const std::vector<int>& idx) {
    HermitianMatrix sub(static_cast<int>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < idx.size(); ++c)
        sub.at(static_cast<int>(r), static_cast<int>(c)) = cov.at(idx[r], idx[c]);
    return sub;
  };
  std::vector<int> yg{0}, fg, g;
  for (int i = 0; i < dim_f; ++i) fg.push_back(1 + i);
  for (int i = 0; i < dim_g; ++i) {
    yg.push_back(1 + dim_f + i);
    fg.push_back(1 + dim_f + i);
    g.push_back(1 + dim_f + i);
  }
  std::vector<int> yfg{0};
  yfg.insert(yfg.end(), fg.begin(), fg.end());

  double value = log2_det_hermitian(block(yg)) + log2_det_hermitian(block(fg)) -
                 log2_det_hermitian(block(yfg));
  if (!g.empty()) value -= log2_det_hermitian(block(g));
  return 0.5 * value;
}

std::vector<int> mask_indices(std::uint64_t mask) {
  std::vector<int> out;
  for (int i = 0; i < 64 && (mask >> i); ++i)
    if (mask >> i & 1) out.push_back(i);
  return out;
}

}  // namespace

McEstimate mc_mutual_information(const Eigen::VectorXcd& h_row, const Eigen::MatrixXcd& a,
                                 std::uint64_t f_mask, std::uint64_t decoded_mask,
                                 std::size_t samples, std::uint64_t seed) {
  if ((f_mask & ~decoded_mask) != 0)
    throw std::invalid_argument("F must be a subset of the decoded set");
  const int n_vertices = static_cast<int>(a.cols());
  const int n_relays = static_cast<int>(a.rows());
  if (h_row.size() != n_relays) throw std::invalid_argument("gain row does not match the mixing");
  if (samples < 1000) throw std::invalid_argument("too few samples");

  const std::vector<int> f_idx = mask_indices(f_mask);
  const std::vector<int> g_idx = mask_indices(decoded_mask & ~f_mask);
  const int dim_f = static_cast<int>(f_idx.size());
  const int dim_g = static_cast<int>(g_idx.size());
  const int dim = 1 + dim_f + dim_g;
  if (dim_f == 0) return {0.0, 0.0};

  // Effective channel row: y = sum_v c_v u_v + w, with own accumulation.
  std::vector<Cx> channel(static_cast<std::size_t>(n_vertices), Cx{0.0, 0.0});
  for (int v = 0; v < n_vertices; ++v)
    for (int j = 0; j < n_relays; ++j) channel[v] += h_row(j) * a(j, v);

  constexpr int kBatches = 20;
  const std::size_t batch_size = samples / kBatches;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));  // per real component

  std::vector<HermitianMatrix> batch_cov(kBatches, HermitianMatrix(dim));
  std::vector<Cx> x(static_cast<std::size_t>(dim));
  std::vector<Cx> u(static_cast<std::size_t>(n_vertices));
  for (int b = 0; b < kBatches; ++b) {
    HermitianMatrix& cov = batch_cov[b];
    for (std::size_t s = 0; s < batch_size; ++s) {
      for (int v = 0; v < n_vertices; ++v) u[v] = Cx(gauss(rng), gauss(rng));
      Cx y(gauss(rng), gauss(rng));  // unit-variance noise
      for (int v = 0; v < n_vertices; ++v) y += channel[v] * u[v];
      x[0] = y;
      for (int i = 0; i < dim_f; ++i) x[1 + i] = u[f_idx[i]];
      for (int i = 0; i < dim_g; ++i) x[1 + dim_f + i] = u[g_idx[i]];
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c <= r; ++c) cov.at(r, c) += x[r] * std::conj(x[c]);
    }
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c <= r; ++c) {
        cov.at(r, c) /= static_cast<double>(batch_size);
        cov.at(c, r) = std::conj(cov.at(r, c));
      }
  }

  // Point estimate from the pooled covariance (smaller plug-in bias), spread
  // from the batch estimates.
  HermitianMatrix pooled(dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) {
      Cx acc{0.0, 0.0};
      for (int b = 0; b < kBatches; ++b) acc += batch_cov[b].at(r, c);
      pooled.at(r, c) = acc / static_cast<double>(kBatches);
    }

  McEstimate result;
  result.estimate = conditional_mi_from_cov(pooled, dim_f, dim_g);
  double mean = 0.0;
  std::vector<double> batch_mi(kBatches);
  for (int b = 0; b < kBatches; ++b) {
    batch_mi[b] = conditional_mi_from_cov(batch_cov[b], dim_f, dim_g);
    mean += batch_mi[b];
  }
  mean /= kBatches;
  double var = 0.0;
  for (double v : batch_mi) var += (v - mean) * (v - mean);
  var /= (kBatches - 1);
  result.stderr_ = std::sqrt(var / kBatches);
  return result;
}

std::vector<std::uint64_t> brute_closed_sets(const std::vector<Vertex>& vertices,
                                             const std::vector<std::pair<int, int>>& edges,
                                             int receiver) {
  std::vector<int> decoded;
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (vertices[v].decoders >> receiver & 1) decoded.push_back(static_cast<int>(v));
  const int k = static_cast<int>(decoded.size());
  if (k == 0) return {};
  if (k > 20) throw std::invalid_argument("too many decoded vertices for brute enumeration");

  std::vector<int> local_of(vertices.size(), -1);
  for (int i = 0; i < k; ++i) local_of[decoded[i]] = i;
  std::vector<std::uint32_t> children(k, 0);
  for (const auto& [parent, child] : edges)
    if (local_of[parent] >= 0 && local_of[child] >= 0)
      children[local_of[parent]] |= std::uint32_t{1} << local_of[child];

  std::vector<std::uint64_t> out;
  for (std::uint32_t subset = 1; subset < (std::uint32_t{1} << k); ++subset) {
    bool closed = true;
    for (int i = 0; i < k && closed; ++i)
      if ((subset >> i & 1) && (children[i] & ~subset) != 0) closed = false;
    if (!closed) continue;
    std::uint64_t global = 0;
    for (int i = 0; i < k; ++i)
      if (subset >> i & 1) global |= std::uint64_t{1} << decoded[i];
    out.push_back(global);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Grid searches
// ---------------------------------------------------------------------------

namespace {

/// Phase that makes gain * e^{i phase} real nonnegative.
Cx align_to(const Cx& gain) {
  const double mag = std::abs(gain);
  return mag > 1e-15 ? std::conj(gain) / mag : Cx{1.0, 0.0};
}

double default_power_ceiling(const NetworkConfig& config) {
  // Enough for any single-relay fallback: invert the sum rate through the
  // weakest useful gain.
  const double total = config.total_rate();
  double p = 0.0;
  for (int z = 0; z < config.n_receivers; ++z)
    for (int j = 0; j < config.n_relays; ++j) {
      const double g2 = std::norm(config.access_gains(z, j));
      if (g2 > 1e-12) p = std::max(p, (std::exp2(2.0 * total) - 1.0) / g2);
    }
  return p * 1.05 + 1e-9;
}

struct FractionPattern {
  // fractions[j] = how relay j divides its power across its columns.
  std::vector<std::vector<double>> fractions;
};

/// Enumerates per-relay fraction splits on a coarse simplex grid.
void fraction_patterns(const std::vector<int>& degrees, double resolution,
                       std::vector<FractionPattern>& out) {
  std::vector<std::vector<std::vector<double>>> per_relay;
  for (int degree : degrees) {
    std::vector<std::vector<double>> options;
    if (degree <= 1) {
      options.push_back(std::vector<double>(static_cast<std::size_t>(std::max(degree, 0)), 1.0));
    } else {
      const int steps = std::max(1, static_cast<int>(std::round(1.0 / resolution)));
      // Enumerate compositions of `steps` into `degree` parts.
      std::vector<std::vector<int>> compositions;
      std::vector<int> current(degree, 0);
      std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == degree - 1) {
          current[pos] = left;
          compositions.push_back(current);
          return;
        }
        for (int take = 0; take <= left; ++take) {
          current[pos] = take;
          rec(pos + 1, left - take);
        }
      };
      rec(0, steps);
      for (const auto& comp : compositions) {
        std::vector<double> fractions;
        for (int c : comp) fractions.push_back(static_cast<double>(c) / steps);
        options.push_back(std::move(fractions));
      }
    }
    per_relay.push_back(std::move(options));
  }
  std::vector<std::size_t> pick(per_relay.size(), 0);
  while (true) {
    FractionPattern pattern;
    for (std::size_t j = 0; j < per_relay.size(); ++j)
      pattern.fractions.push_back(per_relay[j][pick[j]]);
    out.push_back(std::move(pattern));
    std::size_t pos = 0;
    while (pos < pick.size() && pick[pos] + 1 == per_relay[pos].size()) pick[pos++] = 0;
    if (pos == pick.size()) break;
    ++pick[pos];
  }
}

}  // namespace

std::optional<double> grid_feasible_power(const NetworkConfig& config, const Cgras& scheme,
                                          double resolution, double p_max,
                                          double split_resolution) {
  if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
  const int n_relays = config.n_relays;
  const int m = scheme.n_vertices();

  // Per-relay columns and the grid dimension guard.
  std::vector<std::vector<int>> columns(n_relays);
  for (int v = 0; v < m; ++v)
    for (int j = 0; j < n_relays; ++j)
      if (scheme.vertices[v].encoders >> j & 1) columns[j].push_back(v);
  int dims = n_relays;
  for (int j = 0; j < n_relays; ++j) dims += std::max(0, static_cast<int>(columns[j].size()) - 1);
  if (dims > 6) throw std::invalid_argument("grid dimension too large");

  // Sub-message rates, recomputed locally.
  std::vector<double> rates(static_cast<std::size_t>(m), 0.0);
  for (int v = 0; v < m; ++v)
    for (int z = 0; z < config.n_receivers; ++z)
      rates[v] += scheme.gamma.gamma(z, v) * config.target_rates[z];
  double rate_total = 0.0;
  for (double r : rates) rate_total += r;
  if (rate_total <= 0.0) return 0.0;

  if (p_max < 0) p_max = default_power_ceiling(config);

  // Closed sets per receiver, by the brute filter.
  struct Check {
    int receiver;
    std::uint64_t members;
    double lhs;
  };
  std::vector<Check> checks;
  std::vector<std::uint64_t> decoded(config.n_receivers, 0);
  for (int z = 0; z < config.n_receivers; ++z) {
    for (int v = 0; v < m; ++v)
      if (scheme.vertices[v].decoders >> z & 1) decoded[z] |= std::uint64_t{1} << v;
    for (std::uint64_t members : brute_closed_sets(scheme.vertices, scheme.edges, z)) {
      double lhs = 0.0;
      for (int v = 0; v < m; ++v)
        if (members >> v & 1) lhs += rates[v];
      checks.push_back({z, members, lhs});
    }
  }

  std::vector<FractionPattern> patterns;
  {
    std::vector<int> degrees;
    for (int j = 0; j < n_relays; ++j) degrees.push_back(static_cast<int>(columns[j].size()));
    fraction_patterns(degrees, split_resolution, patterns);
  }

  // Power odometer per relay.
  std::vector<int> level(n_relays, 0);
  std::vector<int> level_count(n_relays);
  for (int j = 0; j < n_relays; ++j) {
    double cap = p_max;
    if (config.relay_power_caps[j]) cap = std::min(cap, *config.relay_power_caps[j]);
    level_count[j] = static_cast<int>(std::floor(cap / resolution)) + 1;
  }

  std::optional<double> best;
  std::vector<std::vector<Cx>> mixing(n_relays, std::vector<Cx>(static_cast<std::size_t>(m)));
  while (true) {
    double total = 0.0;
    for (int j = 0; j < n_relays; ++j) total += level[j] * resolution;
    if (!best || total < *best) {
      for (const FractionPattern& pattern : patterns) {
        // Build the aligned mixing for this (power, split) cell.
        for (int j = 0; j < n_relays; ++j) {
          std::fill(mixing[j].begin(), mixing[j].end(), Cx{0.0, 0.0});
          const double power = level[j] * resolution;
          for (std::size_t i = 0; i < columns[j].size(); ++i) {
            const int v = columns[j][i];
            const int z_target = mask_to_list(scheme.vertices[v].decoders).front();
            const double part = power * pattern.fractions[j][i];
            mixing[j][v] = std::sqrt(part) * align_to(config.access_gains(z_target, j));
          }
        }
        bool feasible = true;
        for (const Check& check : checks) {
          double p_closed = 0.0, p_ext = 0.0;
          for (int v = 0; v < m; ++v) {
            Cx gain{0.0, 0.0};
            for (int j = 0; j < n_relays; ++j) gain += config.access_gains(check.receiver, j) * mixing[j][v];
            const double power = std::norm(gain);
            if (!(decoded[check.receiver] >> v & 1))
              p_ext += power;
            else if (check.members >> v & 1)
              p_closed += power;
          }
          const double bound = 0.5 * std::log2((1.0 + p_closed + p_ext) / (1.0 + p_ext));
          if (check.lhs > bound + 1e-12) {
            feasible = false;
            break;
          }
        }
        if (feasible) {
          best = total;
          break;
        }
      }
    }
    int pos = 0;
    while (pos < n_relays && level[pos] + 1 == level_count[pos]) level[pos++] = 0;
    if (pos == n_relays) break;
    ++level[pos];
  }
  return best;
}

std::optional<GridBound> grid_lower_bound(const NetworkConfig& config, double resolution,
                                          double p_max, double split_resolution) {
  if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
  if (p_max < 0) p_max = default_power_ceiling(config);

  std::optional<GridBound> best;
  std::size_t index = 0;
  AllocationEnumerator stream(config);
  while (auto alloc = stream.next()) {
    const std::size_t ai = index++;

    // Feeder side by direct inversion.
    double feeder = 0.0;
    bool feeder_ok = true;
    for (int j = 0; j < config.n_relays; ++j) {
      double held = 0.0;
      for (int z = 0; z < config.n_receivers; ++z)
        if (alloc->knows(j, z)) held += config.target_rates[z];
      feeder += (std::exp2(2.0 * held) - 1.0) / std::norm(config.relay_gains[j]);
    }
    if (config.bs_power_cap && feeder > *config.bs_power_cap + 1e-12) feeder_ok = false;
    if (!feeder_ok) continue;

    // Access side: per-relay powers and per-relay splits across held
    // messages, phases aligned per message column.
    std::vector<std::vector<int>> columns(config.n_relays);
    for (int j = 0; j < config.n_relays; ++j)
      for (int z = 0; z < config.n_receivers; ++z)
        if (alloc->knows(j, z) && config.target_rates[z] > 0) columns[j].push_back(z);
    int dims = config.n_relays;
    for (int j = 0; j < config.n_relays; ++j)
      dims += std::max(0, static_cast<int>(columns[j].size()) - 1);
    if (dims > 6) throw std::invalid_argument("grid dimension too large");

    std::vector<FractionPattern> patterns;
    {
      std::vector<int> degrees;
      for (int j = 0; j < config.n_relays; ++j)
        degrees.push_back(static_cast<int>(columns[j].size()));
      fraction_patterns(degrees, split_resolution, patterns);
    }

    std::vector<std::uint32_t> subsets;
    const std::uint32_t full = bit(config.n_receivers) - 1;
    for (std::uint32_t subset = 1; subset <= full; ++subset) {
      double lhs = 0.0;
      for (int z : mask_to_list(subset)) lhs += config.target_rates[z];
      if (lhs > 0) subsets.push_back(subset);
    }

    std::vector<int> level(config.n_relays, 0);
    std::vector<int> level_count(config.n_relays);
    for (int j = 0; j < config.n_relays; ++j) {
      double cap = p_max;
      if (config.relay_power_caps[j]) cap = std::min(cap, *config.relay_power_caps[j]);
      level_count[j] = static_cast<int>(std::floor(cap / resolution)) + 1;
    }

    std::optional<double> access_best;
    std::vector<std::vector<Cx>> a_ob(config.n_relays,
                                      std::vector<Cx>(config.n_receivers, Cx{0.0, 0.0}));
    while (true) {
      double total = 0.0;
      for (int j = 0; j < config.n_relays; ++j) total += level[j] * resolution;
      if (!access_best || total < *access_best) {
        for (const FractionPattern& pattern : patterns) {
          for (int j = 0; j < config.n_relays; ++j) {
            std::fill(a_ob[j].begin(), a_ob[j].end(), Cx{0.0, 0.0});
            const double power = level[j] * resolution;
            for (std::size_t i = 0; i < columns[j].size(); ++i) {
              const int z = columns[j][i];
              a_ob[j][z] = std::sqrt(power * pattern.fractions[j][i]) *
                           align_to(config.access_gains(z, j));
            }
          }
          bool feasible = true;
          for (std::uint32_t subset : subsets) {
            const std::vector<int> receivers = mask_to_list(subset);
            const int k = static_cast<int>(receivers.size());
            // Gram I + (H_Z A_Z)(H_Z A_Z)^H with local arithmetic.
            std::vector<std::vector<Cx>> mz(k, std::vector<Cx>(k, Cx{0.0, 0.0}));
            for (int r = 0; r < k; ++r)
              for (int c = 0; c < k; ++c)
                for (int j = 0; j < config.n_relays; ++j)
                  mz[r][c] += config.access_gains(receivers[r], j) * a_ob[j][receivers[c]];
            HermitianMatrix gram(k);
            for (int r = 0; r < k; ++r)
              for (int c = 0; c < k; ++c) {
                Cx acc = (r == c) ? Cx{1.0, 0.0} : Cx{0.0, 0.0};
                for (int t = 0; t < k; ++t) acc += mz[r][t] * std::conj(mz[c][t]);
                gram.at(r, c) = acc;
              }
            double lhs = 0.0;
            for (int z : receivers) lhs += config.target_rates[z];
            if (lhs > 0.5 * log2_det_hermitian(gram) + 1e-12) {
              feasible = false;
              break;
            }
          }
          if (feasible) {
            access_best = total;
            break;
          }
        }
      }
      int pos = 0;
      while (pos < config.n_relays && level[pos] + 1 == level_count[pos]) level[pos++] = 0;
      if (pos == config.n_relays) break;
      ++level[pos];
    }

    if (!access_best) continue;
    const double total = feeder + *access_best;
    if (!best || total < best->value - 1e-12) best = GridBound{total, ai};
  }
  return best;
}

}  // namespace cgras::oracle
