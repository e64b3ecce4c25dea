#include "cgras/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace cgras {

namespace {

constexpr double kPenaltyStages[] = {1e2, 1e4, 1e6};
constexpr int kItersPerStage = 80;
constexpr double kScaleCeiling = 1e12;  // beyond this, treat as interference-saturated
constexpr double kTiny = 1e-15;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(seed ^ (a * 0xd6e8feb86659fd93ULL)) ^
                    (b * 0xa5a5a5a5a5a5a5a5ULL));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Euclidean projection of `values` onto the probability simplex.
void project_simplex(std::vector<double>& values) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double tau = 0.0;
  int support = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    running += sorted[i];
    const double candidate = (running - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0) {
      tau = candidate;
      support = static_cast<int>(i + 1);
    }
  }
  (void)support;
  for (double& v : values) v = std::max(0.0, v - tau);
}

double clamp_small(double v) { return std::abs(v) < kTiny ? 0.0 : v; }

// ---------------------------------------------------------------------------
// Access-link solver for a fixed scheme.
//
// Variables are the real/imag parts of the admissible mixing entries. The
// split fractions ride along as side state, refined by simplex-projected
// gradient steps between mixing steps. Feasibility is finished off by a
// bisection on a global power scale (every bound is nondecreasing in it),
// then per-relay scale-down passes trim slack rows.
// ---------------------------------------------------------------------------

class AccessSolver {
 public:
  AccessSolver(const NetworkConfig& config, const Cgras& scheme, const OptimizerSettings& settings)
      : config_(config), scheme_(scheme), settings_(settings) {
    const int m = scheme.n_vertices();
    for (int v = 0; v < m; ++v)
      for (int j = 0; j < config.n_relays; ++j)
        if (has_bit(scheme.vertices[v].encoders, j)) support_.push_back({j, v});

    for (int z = 0; z < config.n_receivers; ++z) {
      decoded_.push_back(scheme.decoded_set(z));
      for (const ClosedSet& set : enumerate_closed_sets(scheme, z))
        constraints_.push_back({z, set.members});
    }

    // Split-refinement support: (z, v) pairs where message z may ride on v.
    gamma_free_.assign(config.n_receivers, {});
    for (int z = 0; z < config.n_receivers; ++z) {
      if (config.target_rates[z] <= 0) continue;
      std::vector<int> columns;
      for (int v = 0; v < m; ++v) {
        if (!has_bit(scheme.vertices[v].decoders, z)) continue;
        bool held_everywhere = true;
        for (int j : mask_to_list(scheme.vertices[v].encoders))
          if (!scheme.allocation.knows(j, z)) held_everywhere = false;
        if (held_everywhere) columns.push_back(v);
      }
      if (columns.size() > 1) {
        gamma_free_[z] = columns;
        has_free_gamma_ = true;
      }
    }
  }

  struct Result {
    Eigen::MatrixXcd mixing;
    Eigen::MatrixXd gamma;
    double power = 0.0;
  };

  std::optional<Result> run(std::uint64_t seed) {
    const int m = scheme_.n_vertices();
    if (m == 0) {
      Result res;
      res.mixing = Eigen::MatrixXcd::Zero(config_.n_relays, 0);
      res.gamma = scheme_.gamma.gamma;
      return res;
    }

    std::optional<Result> best;
    const int starts = 1 + std::max(1, settings_.max_restarts);
    for (int s = 0; s < starts; ++s) {
      Eigen::MatrixXcd a = (s == 0) ? coherent_start() : random_start(mix_seed(seed, 17, s));
      Eigen::MatrixXd gamma = scheme_.gamma.gamma;
      descend(a, gamma);
      auto polished = polish(a, gamma);
      if (!polished) continue;
      if (!best || polished->power < best->power - 1e-12) best = polished;
    }
    return best;
  }

 private:
  struct SupportEntry {
    int relay;
    int vertex;
  };
  struct Constraint {
    int receiver;
    std::uint64_t members;
  };

  Eigen::MatrixXcd coherent_start() const {
    // Matched-filter phases toward each vertex's first decoder, unit column
    // power; the scale search sets the level.
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(config_.n_relays, scheme_.n_vertices());
    for (int v = 0; v < scheme_.n_vertices(); ++v) {
      const int z = mask_to_list(scheme_.vertices[v].decoders).front();
      for (int j : mask_to_list(scheme_.vertices[v].encoders))
        a(j, v) = std::conj(config_.access_gains(z, j));
      const double norm = a.col(v).norm();
      if (norm > kTiny)
        a.col(v) /= norm;
      else
        for (int j : mask_to_list(scheme_.vertices[v].encoders)) a(j, v) = 1.0;
    }
    return a;
  }

  Eigen::MatrixXcd random_start(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mag(0.25, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(config_.n_relays, scheme_.n_vertices());
    for (const SupportEntry& e : support_)
      a(e.relay, e.vertex) = std::polar(mag(rng), phase(rng));
    return a;
  }

  Eigen::VectorXd sub_rates(const Eigen::MatrixXd& gamma) const {
    Eigen::Map<const Eigen::VectorXd> r(config_.target_rates.data(),
                                        static_cast<Eigen::Index>(config_.target_rates.size()));
    return gamma.transpose() * r;
  }

  /// Column gains g(z, v) = h_z . a_col(v) for every receiver.
  Eigen::MatrixXcd column_gains(const Eigen::MatrixXcd& a) const {
    return config_.access_gains * a;
  }

  struct Evaluation {
    double power = 0.0;
    double max_violation = -std::numeric_limits<double>::infinity();
    std::vector<double> violations;  // per constraint, >= 0 when violated
    std::vector<double> nums, dens;  // per constraint
  };

  Evaluation evaluate(const Eigen::MatrixXcd& a, const Eigen::VectorXd& rates,
                      const Eigen::MatrixXcd& gains) const {
    Evaluation eval;
    eval.power = a.squaredNorm();
    const int m = scheme_.n_vertices();
    std::vector<double> ext(config_.n_receivers, 0.0);
    for (int z = 0; z < config_.n_receivers; ++z)
      for (int v = 0; v < m; ++v)
        if (!(decoded_[z] >> v & 1)) ext[z] += std::norm(gains(z, v));
    for (const Constraint& c : constraints_) {
      double p_closed = 0.0, lhs = 0.0;
      for (int v = 0; v < m; ++v)
        if (c.members >> v & 1) {
          p_closed += std::norm(gains(c.receiver, v));
          lhs += rates(v);
        }
      const double num = 1.0 + p_closed + ext[c.receiver];
      const double den = 1.0 + ext[c.receiver];
      const double bound = 0.5 * std::log2(num / den);
      const double viol = lhs - bound;
      eval.violations.push_back(std::max(0.0, viol));
      eval.nums.push_back(num);
      eval.dens.push_back(den);
      eval.max_violation = std::max(eval.max_violation, viol);
    }
    if (constraints_.empty()) eval.max_violation = 0.0;
    return eval;
  }

  double penalized(const Evaluation& eval, double mu) const {
    double value = eval.power;
    for (double v : eval.violations) value += mu * v * v;
    return value;
  }

  /// Gradient of the penalized objective w.r.t. (re, im) of each support
  /// entry. Weights per (receiver, column) collect d(penalty)/d(column power).
  void gradient(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& gains,
                const Evaluation& eval, double mu, std::vector<double>& grad) const {
    const int m = scheme_.n_vertices();
    Eigen::MatrixXd weight = Eigen::MatrixXd::Zero(config_.n_receivers, m);
    constexpr double inv_2ln2 = 0.5 / M_LN2;
    for (std::size_t k = 0; k < constraints_.size(); ++k) {
      const double viol = eval.violations[k];
      if (viol <= 0.0) continue;
      const Constraint& c = constraints_[k];
      const double d_num = inv_2ln2 / eval.nums[k];
      const double d_ext = inv_2ln2 * (1.0 / eval.nums[k] - 1.0 / eval.dens[k]);
      for (int v = 0; v < m; ++v) {
        if (c.members >> v & 1)
          weight(c.receiver, v) += -2.0 * mu * viol * d_num;
        else if (!(decoded_[c.receiver] >> v & 1))
          weight(c.receiver, v) += -2.0 * mu * viol * d_ext;
      }
    }
    grad.assign(2 * support_.size(), 0.0);
    for (std::size_t i = 0; i < support_.size(); ++i) {
      const auto [j, v] = support_[i];
      const Complex entry = a(j, v);
      double gx = 2.0 * entry.real();
      double gy = 2.0 * entry.imag();
      for (int z = 0; z < config_.n_receivers; ++z) {
        const double w = weight(z, v);
        if (w == 0.0) continue;
        const Complex c = std::conj(gains(z, v)) * config_.access_gains(z, j);
        gx += w * 2.0 * c.real();
        gy += w * -2.0 * c.imag();
      }
      grad[2 * i] = gx;
      grad[2 * i + 1] = gy;
    }
  }

  void enforce_caps(Eigen::MatrixXcd& a) const {
    for (int j = 0; j < config_.n_relays; ++j) {
      const auto& cap = config_.relay_power_caps[j];
      if (!cap) continue;
      const double rp = a.row(j).squaredNorm();
      if (rp > *cap && rp > 0) a.row(j) *= std::sqrt(*cap / rp);
    }
  }

  void gamma_step(const Eigen::MatrixXcd& gains, Eigen::MatrixXd& gamma, double mu) const {
    const Eigen::VectorXd rates = sub_rates(gamma);
    Evaluation eval = evaluate_gamma(gains, rates);
    for (int z = 0; z < config_.n_receivers; ++z) {
      if (gamma_free_[z].empty()) continue;
      std::vector<double> grad(gamma_free_[z].size(), 0.0);
      for (std::size_t k = 0; k < constraints_.size(); ++k) {
        const double viol = eval.violations[k];
        if (viol <= 0.0) continue;
        for (std::size_t i = 0; i < gamma_free_[z].size(); ++i)
          if (constraints_[k].members >> gamma_free_[z][i] & 1)
            grad[i] += 2.0 * mu * viol * config_.target_rates[z];
      }
      double gmax = 0.0;
      for (double g : grad) gmax = std::max(gmax, std::abs(g));
      if (gmax <= kTiny) continue;
      std::vector<double> row;
      for (int v : gamma_free_[z]) row.push_back(gamma(z, v));
      for (std::size_t i = 0; i < row.size(); ++i) row[i] -= 0.1 * grad[i] / gmax;
      project_simplex(row);
      for (std::size_t i = 0; i < row.size(); ++i) gamma(z, gamma_free_[z][i]) = row[i];
    }
  }

  Evaluation evaluate_gamma(const Eigen::MatrixXcd& gains, const Eigen::VectorXd& rates) const {
    // evaluate() without recomputing gains; a is only needed for power,
    // which gamma steps do not change.
    Evaluation eval;
    const int m = scheme_.n_vertices();
    std::vector<double> ext(config_.n_receivers, 0.0);
    for (int z = 0; z < config_.n_receivers; ++z)
      for (int v = 0; v < m; ++v)
        if (!(decoded_[z] >> v & 1)) ext[z] += std::norm(gains(z, v));
    for (const Constraint& c : constraints_) {
      double p_closed = 0.0, lhs = 0.0;
      for (int v = 0; v < m; ++v)
        if (c.members >> v & 1) {
          p_closed += std::norm(gains(c.receiver, v));
          lhs += rates(v);
        }
      const double num = 1.0 + p_closed + ext[c.receiver];
      const double den = 1.0 + ext[c.receiver];
      eval.violations.push_back(std::max(0.0, lhs - 0.5 * std::log2(num / den)));
      eval.nums.push_back(num);
      eval.dens.push_back(den);
    }
    return eval;
  }

  void descend(Eigen::MatrixXcd& a, Eigen::MatrixXd& gamma) const {
    enforce_caps(a);
    std::vector<double> grad;
    double step = settings_.step_init;
    for (double mu : kPenaltyStages) {
      for (int iter = 0; iter < kItersPerStage; ++iter) {
        const Eigen::VectorXd rates = sub_rates(gamma);
        Eigen::MatrixXcd gains = column_gains(a);
        Evaluation eval = evaluate(a, rates, gains);
        gradient(a, gains, eval, mu, grad);
        double gnorm2 = 0.0;
        for (double g : grad) gnorm2 += g * g;
        if (gnorm2 <= 1e-20) break;
        const double base = penalized(eval, mu);

        bool moved = false;
        for (int bt = 0; bt < 30 && !moved; ++bt) {
          Eigen::MatrixXcd trial = a;
          for (std::size_t i = 0; i < support_.size(); ++i) {
            const auto [j, v] = support_[i];
            trial(j, v) -= step * Complex(grad[2 * i], grad[2 * i + 1]);
          }
          enforce_caps(trial);
          const Eigen::VectorXd trial_rates = sub_rates(gamma);
          Eigen::MatrixXcd trial_gains = column_gains(trial);
          Evaluation trial_eval = evaluate(trial, trial_rates, trial_gains);
          if (penalized(trial_eval, mu) < base - 1e-4 * step * gnorm2) {
            a = std::move(trial);
            step = std::min(step * 1.5, 64.0);
            moved = true;
          } else {
            step *= 0.5;
            if (step < 1e-14) break;
          }
        }
        if (!moved) break;
        if (iter % 5 == 4 && has_free_gamma_) {
          Eigen::MatrixXcd gains_now = column_gains(a);
          gamma_step(gains_now, gamma, mu);
        }
      }
    }
  }

  bool feasible_scaled(const Eigen::MatrixXcd& a, const Eigen::VectorXd& rates,
                       double scale) const {
    const Eigen::MatrixXcd gains = column_gains(a) * std::sqrt(scale);
    return evaluate(a, rates, gains).max_violation <= 1e-12;
  }

  std::optional<Result> polish(Eigen::MatrixXcd a, Eigen::MatrixXd gamma) const {
    const Eigen::VectorXd rates = sub_rates(gamma);

    // Global scale: bounds are nondecreasing in a uniform power scale, so a
    // bisection lands on the constraint boundary exactly.
    double s_cap = std::numeric_limits<double>::infinity();
    for (int j = 0; j < config_.n_relays; ++j) {
      const auto& cap = config_.relay_power_caps[j];
      const double rp = a.row(j).squaredNorm();
      if (cap && rp > kTiny) s_cap = std::min(s_cap, *cap / rp);
    }
    if (feasible_scaled(a, rates, 0.0)) {
      a.setZero();
    } else {
      double lo, hi;
      if (feasible_scaled(a, rates, 1.0)) {
        lo = 0.0;
        hi = 1.0;
      } else {
        lo = 1.0;
        hi = 2.0;
        while (hi <= std::min(s_cap, kScaleCeiling) && !feasible_scaled(a, rates, hi)) {
          lo = hi;
          hi *= 2.0;
        }
        if (hi > s_cap) {
          if (!(s_cap > lo && feasible_scaled(a, rates, s_cap))) return std::nullopt;
          hi = s_cap;
        } else if (hi > kScaleCeiling) {
          return std::nullopt;
        }
      }
      for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (feasible_scaled(a, rates, mid))
          hi = mid;
        else
          lo = mid;
      }
      a *= std::sqrt(hi);
    }

    // Per-relay trim: scale single rows down while everything stays feasible.
    for (int round = 0; round < 3; ++round) {
      bool improved = false;
      for (int j = 0; j < config_.n_relays; ++j) {
        if (a.row(j).squaredNorm() <= kTiny) continue;
        auto row_feasible = [&](double t) {
          Eigen::MatrixXcd trial = a;
          trial.row(j) *= std::sqrt(t);
          return evaluate(trial, rates, column_gains(trial)).max_violation <= 1e-12;
        };
        if (row_feasible(0.0)) {
          a.row(j).setZero();
          improved = true;
          continue;
        }
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 80 && hi - lo > 1e-13; ++i) {
          const double mid = 0.5 * (lo + hi);
          if (row_feasible(mid))
            hi = mid;
          else
            lo = mid;
        }
        if (hi < 1.0 - 1e-12) {
          a.row(j) *= std::sqrt(hi);
          improved = true;
        }
      }
      if (!improved) break;
    }

    if (evaluate(a, rates, column_gains(a)).max_violation > settings_.tolerance_feas)
      return std::nullopt;
    Result res;
    res.power = a.squaredNorm();
    res.mixing = std::move(a);
    res.gamma = std::move(gamma);
    return res;
  }

 public:
  /// Constraint labels for the final binding report.
  std::vector<std::string> binding_labels(const Eigen::MatrixXcd& a,
                                          const Eigen::MatrixXd& gamma) const {
    const Eigen::VectorXd rates = sub_rates(gamma);
    const Eigen::MatrixXcd gains = column_gains(a);
    Evaluation eval = evaluate(a, rates, gains);
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < constraints_.size(); ++k) {
      const Constraint& c = constraints_[k];
      double lhs = 0.0;
      for (int v = 0; v < scheme_.n_vertices(); ++v)
        if (c.members >> v & 1) lhs += rates(v);
      const double bound = 0.5 * std::log2(eval.nums[k] / eval.dens[k]);
      if (lhs > 0 && bound - lhs <= std::max(1e-9, settings_.tolerance_feas)) {
        std::uint32_t small = 0;
        for (int v = 0; v < scheme_.n_vertices(); ++v)
          if (c.members >> v & 1) small |= bit(v);
        labels.push_back("rate z=" + std::to_string(c.receiver) + " F=" + format_index_set(small));
      }
    }
    for (int j = 0; j < config_.n_relays; ++j) {
      const auto& cap = config_.relay_power_caps[j];
      if (cap && a.row(j).squaredNorm() >= *cap - 1e-9)
        labels.push_back("relay_cap j=" + std::to_string(j));
    }
    return labels;
  }

 private:
  const NetworkConfig& config_;
  const Cgras& scheme_;
  const OptimizerSettings& settings_;
  std::vector<SupportEntry> support_;
  std::vector<Constraint> constraints_;
  std::vector<std::uint64_t> decoded_;
  std::vector<std::vector<int>> gamma_free_;
  bool has_free_gamma_ = false;
};

// ---------------------------------------------------------------------------
// Access-side converse solver: per-message mixing against every cut bound.
// ---------------------------------------------------------------------------

class OuterSolver {
 public:
  OuterSolver(const NetworkConfig& config, const MessageAllocation& alloc,
              const OptimizerSettings& settings)
      : config_(config), alloc_(alloc), settings_(settings) {
    for (int z = 0; z < config.n_receivers; ++z)
      for (int j = 0; j < config.n_relays; ++j)
        if (config.target_rates[z] > 0 && alloc.knows(j, z)) support_.push_back({j, z});
    const std::uint32_t full = bit(config.n_receivers) - 1;
    for (std::uint32_t subset = 1; subset <= full; ++subset) {
      double lhs = 0.0;
      for (int z : mask_to_list(subset)) lhs += config.target_rates[z];
      if (lhs > 0) cuts_.push_back({subset, mask_to_list(subset), lhs});
    }
  }

  struct Result {
    Eigen::MatrixXcd a_ob;
    double power = 0.0;
  };

  std::optional<Result> run(std::uint64_t seed) {
    if (cuts_.empty() || support_.empty()) {
      if (!cuts_.empty()) return std::nullopt;  // rate demanded but nothing to send with
      Result res;
      res.a_ob = Eigen::MatrixXcd::Zero(config_.n_relays, config_.n_receivers);
      return res;
    }

    std::optional<Result> best;
    const int starts = 1 + std::max(2, settings_.max_restarts);
    for (int s = 0; s < starts; ++s) {
      Eigen::MatrixXcd a = (s == 0) ? coherent_start() : random_start(mix_seed(seed, 29, s));
      descend(a);
      auto polished = polish(a);
      if (!polished) continue;
      if (!best || polished->power < best->power - 1e-12) best = polished;
    }

    // Coarse magnitude grid as an extra seed when the problem is tiny.
    if (support_.size() <= 6) {
      if (auto seeded = grid_seeded()) {
        descend(seeded->a_ob);
        if (auto polished = polish(seeded->a_ob))
          if (!best || polished->power < best->power - 1e-12) best = polished;
      }
    }
    return best;
  }

 private:
  struct Cut {
    std::uint32_t mask;
    std::vector<int> receivers;
    double lhs;
  };

  Eigen::MatrixXcd coherent_start() const {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(config_.n_relays, config_.n_receivers);
    for (const auto& [j, z] : support_) a(j, z) = std::conj(config_.access_gains(z, j));
    for (int z = 0; z < config_.n_receivers; ++z) {
      const double norm = a.col(z).norm();
      if (norm > kTiny) a.col(z) /= norm;
    }
    return a;
  }

  Eigen::MatrixXcd random_start(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mag(0.25, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(config_.n_relays, config_.n_receivers);
    for (const auto& [j, z] : support_) a(j, z) = std::polar(mag(rng), phase(rng));
    return a;
  }

  struct Evaluation {
    double power = 0.0;
    double max_violation = -std::numeric_limits<double>::infinity();
    std::vector<double> violations;
    std::vector<Eigen::MatrixXcd> grams_inv;  // (I + M M^H)^{-1} per cut
    std::vector<Eigen::MatrixXcd> ms;
  };

  Evaluation evaluate(const Eigen::MatrixXcd& a, bool keep_factors) const {
    Evaluation eval;
    eval.power = a.squaredNorm();
    for (const Cut& cut : cuts_) {
      const int k = static_cast<int>(cut.receivers.size());
      Eigen::MatrixXcd m(k, k);
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
          Complex acc{0.0, 0.0};
          for (int j = 0; j < config_.n_relays; ++j)
            acc += config_.access_gains(cut.receivers[r], j) * a(j, cut.receivers[c]);
          m(r, c) = acc;
        }
      const Eigen::MatrixXcd gram = Eigen::MatrixXcd::Identity(k, k) + m * m.adjoint();
      Eigen::LLT<Eigen::MatrixXcd> llt(gram);
      double bound = 0.0;
      if (llt.info() == Eigen::Success) {
        for (int i = 0; i < k; ++i) bound += std::log2(std::real(llt.matrixL()(i, i)));
      }
      const double viol = cut.lhs - bound;
      eval.violations.push_back(std::max(0.0, viol));
      eval.max_violation = std::max(eval.max_violation, viol);
      if (keep_factors) {
        eval.grams_inv.push_back(llt.solve(Eigen::MatrixXcd::Identity(k, k)));
        eval.ms.push_back(std::move(m));
      }
    }
    return eval;
  }

  double penalized(const Evaluation& eval, double mu) const {
    double value = eval.power;
    for (double v : eval.violations) value += mu * v * v;
    return value;
  }

  void gradient(const Eigen::MatrixXcd& a, const Evaluation& eval, double mu,
                std::vector<double>& grad) const {
    grad.assign(2 * support_.size(), 0.0);
    for (std::size_t i = 0; i < support_.size(); ++i) {
      const auto [j, z] = support_[i];
      grad[2 * i] = 2.0 * a(j, z).real();
      grad[2 * i + 1] = 2.0 * a(j, z).imag();
    }
    for (std::size_t k = 0; k < cuts_.size(); ++k) {
      const double viol = eval.violations[k];
      if (viol <= 0.0) continue;
      const Cut& cut = cuts_[k];
      // d bound / d Re(A_jz) = Re[(M^H G H_Z)_{c(z), j}] / ln 2, minus the
      // imaginary part for the imaginary direction.
      const Eigen::MatrixXcd t = eval.ms[k].adjoint() * eval.grams_inv[k];
      for (std::size_t i = 0; i < support_.size(); ++i) {
        const auto [j, z] = support_[i];
        const auto pos = std::find(cut.receivers.begin(), cut.receivers.end(), z);
        if (pos == cut.receivers.end()) continue;
        const int c = static_cast<int>(pos - cut.receivers.begin());
        Complex acc{0.0, 0.0};
        for (std::size_t r = 0; r < cut.receivers.size(); ++r)
          acc += t(c, static_cast<int>(r)) * config_.access_gains(cut.receivers[r], j);
        const double factor = -2.0 * mu * viol / M_LN2;
        grad[2 * i] += factor * acc.real();
        grad[2 * i + 1] += factor * -acc.imag();
      }
    }
  }

  void enforce_caps(Eigen::MatrixXcd& a) const {
    for (int j = 0; j < config_.n_relays; ++j) {
      const auto& cap = config_.relay_power_caps[j];
      if (!cap) continue;
      const double rp = a.row(j).squaredNorm();
      if (rp > *cap && rp > 0) a.row(j) *= std::sqrt(*cap / rp);
    }
  }

  void descend(Eigen::MatrixXcd& a) const {
    enforce_caps(a);
    std::vector<double> grad;
    double step = settings_.step_init;
    for (double mu : kPenaltyStages) {
      for (int iter = 0; iter < kItersPerStage; ++iter) {
        Evaluation eval = evaluate(a, true);
        gradient(a, eval, mu, grad);
        double gnorm2 = 0.0;
        for (double g : grad) gnorm2 += g * g;
        if (gnorm2 <= 1e-20) break;
        const double base = penalized(eval, mu);
        bool moved = false;
        for (int bt = 0; bt < 30 && !moved; ++bt) {
          Eigen::MatrixXcd trial = a;
          for (std::size_t i = 0; i < support_.size(); ++i) {
            const auto [j, z] = support_[i];
            trial(j, z) -= step * Complex(grad[2 * i], grad[2 * i + 1]);
          }
          enforce_caps(trial);
          if (penalized(evaluate(trial, false), mu) < base - 1e-4 * step * gnorm2) {
            a = std::move(trial);
            step = std::min(step * 1.5, 64.0);
            moved = true;
          } else {
            step *= 0.5;
            if (step < 1e-14) break;
          }
        }
        if (!moved) break;
      }
    }
  }

  bool feasible_scaled(const Eigen::MatrixXcd& a, double scale) const {
    Eigen::MatrixXcd scaled = a * std::sqrt(scale);
    return evaluate(scaled, false).max_violation <= 1e-12;
  }

  std::optional<Result> polish(Eigen::MatrixXcd a) const {
    double s_cap = std::numeric_limits<double>::infinity();
    for (int j = 0; j < config_.n_relays; ++j) {
      const auto& cap = config_.relay_power_caps[j];
      const double rp = a.row(j).squaredNorm();
      if (cap && rp > kTiny) s_cap = std::min(s_cap, *cap / rp);
    }
    if (feasible_scaled(a, 0.0)) {
      a.setZero();
    } else {
      double lo, hi;
      if (feasible_scaled(a, 1.0)) {
        lo = 0.0;
        hi = 1.0;
      } else {
        lo = 1.0;
        hi = 2.0;
        while (hi <= std::min(s_cap, kScaleCeiling) && !feasible_scaled(a, hi)) {
          lo = hi;
          hi *= 2.0;
        }
        if (hi > s_cap) {
          if (!(s_cap > lo && feasible_scaled(a, s_cap))) return std::nullopt;
          hi = s_cap;
        } else if (hi > kScaleCeiling) {
          return std::nullopt;
        }
      }
      for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (feasible_scaled(a, mid))
          hi = mid;
        else
          lo = mid;
      }
      a *= std::sqrt(hi);
    }

    for (int round = 0; round < 3; ++round) {
      bool improved = false;
      for (int j = 0; j < config_.n_relays; ++j) {
        if (a.row(j).squaredNorm() <= kTiny) continue;
        auto row_feasible = [&](double t) {
          Eigen::MatrixXcd trial = a;
          trial.row(j) *= std::sqrt(t);
          return evaluate(trial, false).max_violation <= 1e-12;
        };
        if (row_feasible(0.0)) {
          a.row(j).setZero();
          improved = true;
          continue;
        }
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 80 && hi - lo > 1e-13; ++i) {
          const double mid = 0.5 * (lo + hi);
          if (row_feasible(mid))
            hi = mid;
          else
            lo = mid;
        }
        if (hi < 1.0 - 1e-12) {
          a.row(j) *= std::sqrt(hi);
          improved = true;
        }
      }
      if (!improved) break;
    }

    if (evaluate(a, false).max_violation > settings_.tolerance_feas) return std::nullopt;
    Result res;
    res.power = a.squaredNorm();
    res.a_ob = std::move(a);
    return res;
  }

  std::optional<Result> grid_seeded() const {
    // Aligned-phase magnitude grid over the (at most 6) support entries.
    constexpr int kLevels = 6;
    double p_max = 0.0;
    const double total = config_.total_rate();
    for (int z = 0; z < config_.n_receivers; ++z)
      for (int j = 0; j < config_.n_relays; ++j) {
        const double g2 = std::norm(config_.access_gains(z, j));
        if (g2 > kTiny) p_max = std::max(p_max, (std::exp2(2.0 * total) - 1.0) / g2);
      }
    if (p_max <= 0) return std::nullopt;

    std::vector<int> levels(support_.size(), 0);
    std::optional<Result> best;
    while (true) {
      Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(config_.n_relays, config_.n_receivers);
      for (std::size_t i = 0; i < support_.size(); ++i) {
        const auto [j, z] = support_[i];
        const double magnitude =
            std::sqrt(p_max) * static_cast<double>(levels[i]) / (kLevels - 1);
        const Complex h = config_.access_gains(z, j);
        a(j, z) = (std::abs(h) > kTiny) ? std::polar(magnitude, -std::arg(h))
                                        : Complex(magnitude, 0.0);
      }
      enforce_caps(a);
      Evaluation eval = evaluate(a, false);
      if (eval.max_violation <= 1e-9 && (!best || eval.power < best->power)) {
        Result res;
        res.a_ob = a;
        res.power = eval.power;
        best = res;
      }
      std::size_t pos = 0;
      while (pos < levels.size() && levels[pos] == kLevels - 1) levels[pos++] = 0;
      if (pos == levels.size()) break;
      ++levels[pos];
    }
    return best;
  }

  const NetworkConfig& config_;
  const MessageAllocation& alloc_;
  const OptimizerSettings& settings_;
  std::vector<std::pair<int, int>> support_;  // (relay, message)
  std::vector<Cut> cuts_;
};

}  // namespace

void validate_settings(const OptimizerSettings& settings) {
  if (settings.grid_resolution < 1 || settings.max_restarts < 1 || settings.scheme_cap < 1)
    throw std::invalid_argument("optimizer counters must be positive");
  if (settings.step_init <= 0) throw std::invalid_argument("step_init must be positive");
  if (settings.tolerance_feas <= 0 || settings.tolerance_feas >= 1 ||
      settings.tolerance_power <= 0 || settings.tolerance_power >= 1)
    throw std::invalid_argument("tolerances must lie in (0, 1)");
}

std::vector<double> split_grid_from(const OptimizerSettings& settings) {
  std::vector<double> grid;
  for (int i = 1; i <= settings.grid_resolution; ++i)
    grid.push_back(static_cast<double>(i) / (settings.grid_resolution + 1));
  return grid;
}

std::optional<SchemeSolution> solve_scheme(const NetworkConfig& config, const Cgras& scheme,
                                           const OptimizerSettings& settings) {
  validate_settings(settings);
  ValidationResult valid = validate(scheme, config);
  if (!valid.ok) {
    std::string message = "invalid scheme:";
    for (const std::string& v : valid.violations) message += " [" + v + "]";
    throw std::invalid_argument(message);
  }

  const RelayLinkResult feeder = relay_link_power(config, scheme.allocation, config.target_rates);
  if (!feeder.within_cap) return std::nullopt;

  AccessSolver solver(config, scheme, settings);
  auto access = solver.run(settings.seed);
  if (!access) return std::nullopt;

  SchemeSolution solution;
  solution.mixing.entries = access->mixing;
  solution.gamma.gamma = access->gamma;

  PowerReport& report = solution.report;
  report.bs_power_per_relay = feeder.bs_power_per_relay;
  for (double& p : report.bs_power_per_relay) p = clamp_small(p);
  for (int j = 0; j < config.n_relays; ++j)
    report.relay_powers.push_back(clamp_small(access->mixing.row(j).squaredNorm()));
  report.total_power = 0.0;
  for (double p : report.bs_power_per_relay) report.total_power += p;
  for (double p : report.relay_powers) report.total_power += p;
  report.total_energy =
      config.total_rate() > 0 ? report.total_power / config.total_rate() : 0.0;
  report.binding_constraints = solver.binding_labels(access->mixing, access->gamma);
  if (config.bs_power_cap && feeder.total >= *config.bs_power_cap - 1e-9)
    report.binding_constraints.push_back("bs_cap");
  return solution;
}

std::optional<PowerReport> min_power_for_scheme(const NetworkConfig& config, const Cgras& scheme,
                                                const OptimizerSettings& settings) {
  auto solution = solve_scheme(config, scheme, settings);
  if (!solution) return std::nullopt;
  return solution->report;
}

LowerBoundCertificate lower_bound(const NetworkConfig& config, const OptimizerSettings& settings) {
  validate_settings(settings);
  LowerBoundCertificate best;
  std::size_t index = 0;
  AllocationEnumerator stream(config);
  int best_cognition = 0;
  while (auto alloc = stream.next()) {
    const std::size_t ai = index++;
    const RelayLinkResult feeder = relay_link_power(config, *alloc, config.target_rates);
    if (!feeder.within_cap) continue;

    OuterSolver solver(config, *alloc, settings);
    auto access = solver.run(mix_seed(settings.seed, 0xB0B0, ai));
    if (!access) continue;

    const double total = feeder.total + access->power;
    const int cognition = alloc->cognition_count();
    const bool wins =
        !best.feasible || total < best.value - settings.tolerance_power ||
        (total <= best.value + settings.tolerance_power && cognition < best_cognition);
    if (wins) {
      best.feasible = true;
      best.value = clamp_small(total);
      best.allocation = *alloc;
      best.a_ob = access->a_ob;
      best.bs_power_per_relay = feeder.bs_power_per_relay;
      best_cognition = cognition;
    }
  }
  return best;
}

SweepResult sweep(const NetworkConfig& config, const OptimizerSettings& settings) {
  validate_settings(settings);
  SweepResult result;
  const std::vector<double> grid = split_grid_from(settings);

  AllocationEnumerator stream(config);
  int allocation_index = 0;
  int best_cognition = 0;
  while (auto alloc = stream.next()) {
    AllocationRecord record;
    record.allocation = *alloc;

    CanonicalSchemeStream schemes(*alloc, config, grid,
                                  static_cast<std::size_t>(settings.scheme_cap));
    int scheme_id = 0;
    while (auto scheme = schemes.next()) {
      OptimizerSettings cell = settings;
      cell.seed = mix_seed(settings.seed, static_cast<std::uint64_t>(allocation_index),
                           static_cast<std::uint64_t>(scheme_id));
      auto solution = solve_scheme(config, *scheme, cell);

      SweepCell cell_result;
      cell_result.allocation_index = allocation_index;
      cell_result.scheme_id = scheme_id;
      cell_result.feasible = solution.has_value();
      if (solution) {
        cell_result.report = solution->report;
        const bool beats_record =
            !record.best || solution->report.total_power <
                                record.best->total_power - settings.tolerance_power;
        if (beats_record) {
          record.best = solution->report;
          record.best_scheme_id = scheme_id;
        }
      }
      result.cells.push_back(std::move(cell_result));
      ++scheme_id;
    }

    if (record.best) {
      const double total = record.best->total_power;
      const int cognition = alloc->cognition_count();
      const bool wins = !result.global_best ||
                        total < result.global_best->report.total_power -
                                    settings.tolerance_power ||
                        (total <= result.global_best->report.total_power +
                                      settings.tolerance_power &&
                         cognition < best_cognition);
      if (wins) {
        SweepCell best_cell;
        best_cell.allocation_index = allocation_index;
        best_cell.scheme_id = record.best_scheme_id;
        best_cell.feasible = true;
        best_cell.report = *record.best;
        result.global_best = std::move(best_cell);
        best_cognition = cognition;
      }
    }
    result.records.push_back(std::move(record));
    ++allocation_index;
  }

  result.bound = lower_bound(config, settings);
  return result;
}

Json serialize(const OptimizerSettings& settings) {
  return Json{{"grid_resolution", settings.grid_resolution},
              {"max_restarts", settings.max_restarts},
              {"step_init", settings.step_init},
              {"tolerance_feas", settings.tolerance_feas},
              {"tolerance_power", settings.tolerance_power},
              {"scheme_cap", settings.scheme_cap},
              {"seed", settings.seed}};
}

Json serialize(const LowerBoundCertificate& bound) {
  if (!bound.feasible) return Json{{"feasible", false}};
  Json a_ob = Json::array();
  for (Eigen::Index j = 0; j < bound.a_ob.rows(); ++j) {
    Json row = Json::array();
    for (Eigen::Index z = 0; z < bound.a_ob.cols(); ++z)
      row.push_back(Json{{"im", bound.a_ob(j, z).imag()}, {"re", bound.a_ob(j, z).real()}});
    a_ob.push_back(std::move(row));
  }
  return Json{{"feasible", true},
              {"value", bound.value},
              {"allocation", serialize(bound.allocation)["known"]},
              {"a_ob", std::move(a_ob)},
              {"bs_power_per_relay", bound.bs_power_per_relay}};
}

Json serialize(const SweepResult& result, const NetworkConfig& config,
               const OptimizerSettings& settings) {
  Json records = Json::array();
  for (const AllocationRecord& record : result.records)
    records.push_back(Json{{"allocation", serialize(record.allocation)["known"]},
                           {"best_scheme_id", record.best_scheme_id},
                           {"report", record.best ? serialize(*record.best) : Json(nullptr)}});
  Json cells = Json::array();
  for (const SweepCell& cell : result.cells)
    cells.push_back(Json{{"allocation_index", cell.allocation_index},
                         {"scheme_id", cell.scheme_id},
                         {"feasible", cell.feasible},
                         {"report", cell.feasible ? serialize(cell.report) : Json(nullptr)}});
  return Json{{"config", serialize(config)},
              {"settings", serialize(settings)},
              {"records", std::move(records)},
              {"cells", std::move(cells)},
              {"global_best",
               result.global_best
                   ? Json{{"allocation_index", result.global_best->allocation_index},
                          {"scheme_id", result.global_best->scheme_id},
                          {"report", serialize(result.global_best->report)}}
                   : Json(nullptr)},
              {"lower_bound", serialize(result.bound)}};
}

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream os;
  os << "allocation,scheme_id,feasible,bs_power,relay_powers,total_power,total_energy\n";
  for (const SweepCell& cell : result.cells) {
    const MessageAllocation& alloc = result.records[cell.allocation_index].allocation;
    for (std::size_t j = 0; j < alloc.known.size(); ++j) {
      if (j) os << '|';
      os << alloc.known[j];
    }
    os << ',' << cell.scheme_id << ',' << (cell.feasible ? 1 : 0) << ',';
    if (cell.feasible) {
      double bs_total = 0.0;
      for (double p : cell.report.bs_power_per_relay) bs_total += p;
      os << fmt_double(bs_total) << ',';
      for (std::size_t j = 0; j < cell.report.relay_powers.size(); ++j) {
        if (j) os << '|';
        os << fmt_double(cell.report.relay_powers[j]);
      }
      os << ',' << fmt_double(cell.report.total_power) << ','
         << fmt_double(cell.report.total_energy);
    } else {
      os << ",,,";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cgras
