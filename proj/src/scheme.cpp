#include "cgras/scheme.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cgras {

namespace {

constexpr int kMaxVertices = 64;       // member masks are 64-bit
constexpr int kMaxDecodedForEnum = 24; // closed-set blowup guard

std::string edge_str(int a, int b) {
  return "v" + std::to_string(a) + " -> v" + std::to_string(b);
}

/// Sorted, deduplicated edge list.
void canonicalize_edges(std::vector<std::pair<int, int>>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

/// All admissible ordered pairs among `vertices`. Safe to take wholesale:
/// admissibility is transitive and, once identical (encoders, decoders)
/// pairs are merged, antisymmetric, so the result is a transitively closed
/// DAG by construction.
std::vector<std::pair<int, int>> all_admissible_edges(const std::vector<Vertex>& vertices) {
  std::vector<std::pair<int, int>> edges;
  const int n = static_cast<int>(vertices.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && !(vertices[a] == vertices[b]) && edge_admissible(vertices[a], vertices[b]))
        edges.emplace_back(a, b);
  return edges;
}

}  // namespace

std::uint64_t Cgras::decoded_set(int receiver) const {
  std::uint64_t mask = 0;
  for (int v = 0; v < n_vertices(); ++v)
    if (has_bit(vertices[v].decoders, receiver)) mask |= std::uint64_t{1} << v;
  return mask;
}

std::vector<std::uint64_t> Cgras::children_masks() const {
  std::vector<std::uint64_t> children(vertices.size(), 0);
  for (const auto& [parent, child] : edges) children[parent] |= std::uint64_t{1} << child;
  return children;
}

ValidationResult validate(const Cgras& scheme, const NetworkConfig& config) {
  ValidationResult result;
  auto flag = [&result](const std::string& message) {
    result.ok = false;
    result.violations.push_back(message);
  };

  const int n = scheme.n_vertices();
  if (n > kMaxVertices) {
    flag("too many vertices (limit 64)");
    return result;
  }
  if (static_cast<int>(scheme.allocation.known.size()) != config.n_relays) {
    flag("allocation does not match the config's relay count");
    return result;
  }

  const std::uint32_t relay_range =
      (config.n_relays >= 32) ? ~std::uint32_t{0} : bit(config.n_relays) - 1;
  const std::uint32_t receiver_range =
      (config.n_receivers >= 32) ? ~std::uint32_t{0} : bit(config.n_receivers) - 1;

  bool shape_ok = true;
  for (int v = 0; v < n; ++v) {
    const Vertex& vert = scheme.vertices[v];
    if (vert.encoders == 0) flag("vertex " + std::to_string(v) + ": empty encoder set");
    if (vert.decoders == 0) flag("vertex " + std::to_string(v) + ": empty decoder set");
    if ((vert.encoders & ~relay_range) != 0)
      flag("vertex " + std::to_string(v) + ": encoder index out of range");
    if ((vert.decoders & ~receiver_range) != 0)
      flag("vertex " + std::to_string(v) + ": decoder index out of range");
  }

  for (const auto& [a, b] : scheme.edges) {
    if (a < 0 || a >= n || b < 0 || b >= n || a == b) {
      flag("edge " + edge_str(a, b) + ": bad endpoints");
      shape_ok = false;
    }
  }
  if (!shape_ok) return result;

  // Per-edge admissibility: both index sets shrink from bottom to top.
  for (const auto& [a, b] : scheme.edges) {
    const Vertex& parent = scheme.vertices[a];
    const Vertex& child = scheme.vertices[b];
    if (!subset_of(child.encoders, parent.encoders))
      flag("edge " + edge_str(a, b) + ": child encoder set " +
           format_index_set(child.encoders) + " not a subset of parent's " +
           format_index_set(parent.encoders));
    if (!subset_of(child.decoders, parent.decoders))
      flag("edge " + edge_str(a, b) + ": child decoder set " +
           format_index_set(child.decoders) + " not a subset of parent's " +
           format_index_set(parent.decoders));
  }

  // Duplicate edges would double-count below.
  {
    auto sorted = scheme.edges;
    canonicalize_edges(sorted);
    if (sorted.size() != scheme.edges.size()) flag("duplicate edges present");
  }

  // Acyclicity via Kahn's algorithm (in-degrees from deduplicated masks).
  {
    auto children = scheme.children_masks();
    std::vector<int> indegree(n, 0);
    for (int v = 0; v < n; ++v)
      for (int c = 0; c < n; ++c)
        if (children[v] >> c & 1) ++indegree[c];
    std::vector<int> queue;
    for (int v = 0; v < n; ++v)
      if (indegree[v] == 0) queue.push_back(v);
    int seen = 0;
    while (!queue.empty()) {
      const int v = queue.back();
      queue.pop_back();
      ++seen;
      for (int c = 0; c < n; ++c)
        if (children[v] >> c & 1)
          if (--indegree[c] == 0) queue.push_back(c);
    }
    if (seen != n) flag("cycle found in the layering graph");
  }

  // Transitive closure: every two-step path must have its shortcut edge.
  {
    auto children = scheme.children_masks();
    for (const auto& [a, b] : scheme.edges)
      for (int c = 0; c < n; ++c)
        if ((children[b] >> c & 1) && !(children[a] >> c & 1))
          flag("transitivity hole: " + edge_str(a, b) + " and " + edge_str(b, c) +
               " present but " + edge_str(a, c) + " missing");
  }

  // Split matrix shape, admissibility, and row sums.
  const Eigen::MatrixXd& gamma = scheme.gamma.gamma;
  if (gamma.rows() != config.n_receivers || gamma.cols() != n) {
    flag("split matrix must be n_receivers x n_vertices");
    return result;
  }
  for (int z = 0; z < config.n_receivers; ++z) {
    double row_sum = 0.0;
    for (int v = 0; v < n; ++v) {
      const double entry = gamma(z, v);
      if (entry < -1e-9 || entry > 1.0 + 1e-9)
        flag("split(" + std::to_string(z) + "," + std::to_string(v) + ") outside [0,1]");
      if (entry > 1e-12) {
        const Vertex& vert = scheme.vertices[v];
        if (!has_bit(vert.decoders, z))
          flag("split(" + std::to_string(z) + "," + std::to_string(v) +
               ") nonzero but receiver not among the vertex decoders");
        for (int j : mask_to_list(vert.encoders))
          if (!scheme.allocation.knows(j, z))
            flag("split(" + std::to_string(z) + "," + std::to_string(v) +
                 ") nonzero but relay " + std::to_string(j) + " does not hold message " +
                 std::to_string(z));
      }
      row_sum += entry;
    }
    if (config.target_rates[z] > 0 && std::abs(row_sum - 1.0) > 1e-9)
      flag("split row " + std::to_string(z) + " sums to " + std::to_string(row_sum) +
           ", expected 1");
  }

  return result;
}

Eigen::VectorXd split_rates(const SplitMatrix& gamma, const std::vector<double>& rates) {
  if (gamma.gamma.rows() != static_cast<Eigen::Index>(rates.size()))
    throw std::invalid_argument("split matrix rows do not match the rate vector");
  Eigen::Map<const Eigen::VectorXd> r(rates.data(), static_cast<Eigen::Index>(rates.size()));
  return gamma.gamma.transpose() * r;
}

std::vector<ClosedSet> enumerate_closed_sets(const Cgras& scheme, int receiver) {
  const std::uint64_t decoded = scheme.decoded_set(receiver);
  std::vector<int> local;  // global indices of decoded vertices
  for (int v = 0; v < scheme.n_vertices(); ++v)
    if (decoded >> v & 1) local.push_back(v);
  const int k = static_cast<int>(local.size());
  if (k == 0) return {};
  if (k > kMaxDecodedForEnum)
    throw std::invalid_argument("too many decoded vertices for closed-set enumeration");

  // Children masks inside the induced subgraph, in local coordinates.
  std::vector<std::uint32_t> children(k, 0);
  std::vector<int> local_of(scheme.n_vertices(), -1);
  for (int i = 0; i < k; ++i) local_of[local[i]] = i;
  for (const auto& [a, b] : scheme.edges)
    if (local_of[a] >= 0 && local_of[b] >= 0)
      children[local_of[a]] |= std::uint32_t{1} << local_of[b];

  // Process vertices children-first so that when v is added, its children
  // have already been decided; including v is legal only if they are all in.
  std::vector<int> order;  // local indices, children before parents
  {
    std::vector<int> outstanding(k, 0);
    for (int i = 0; i < k; ++i) outstanding[i] = std::popcount(children[i]);
    std::vector<int> ready;
    std::vector<std::uint32_t> parents(k, 0);
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < k; ++c)
        if (children[i] >> c & 1) parents[c] |= std::uint32_t{1} << i;
    for (int i = 0; i < k; ++i)
      if (outstanding[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      const int v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (int p = 0; p < k; ++p)
        if (parents[v] >> p & 1)
          if (--outstanding[p] == 0) ready.push_back(p);
    }
    if (static_cast<int>(order.size()) != k)
      throw std::invalid_argument("closed-set enumeration requires an acyclic scheme");
  }

  std::vector<std::uint64_t> members;
  // Iterative include/exclude over `order`; a frame is (position, chosen mask).
  std::vector<std::pair<int, std::uint32_t>> stack{{0, 0u}};
  while (!stack.empty()) {
    auto [pos, chosen] = stack.back();
    stack.pop_back();
    if (pos == k) {
      if (chosen != 0) {
        std::uint64_t global = 0;
        for (int i = 0; i < k; ++i)
          if (chosen >> i & 1) global |= std::uint64_t{1} << local[i];
        members.push_back(global);
      }
      continue;
    }
    const int v = order[pos];
    stack.emplace_back(pos + 1, chosen);  // exclude v
    if (subset_of(children[v], chosen))   // include v: children already in
      stack.emplace_back(pos + 1, chosen | (std::uint32_t{1} << v));
  }

  std::sort(members.begin(), members.end());
  std::vector<ClosedSet> out;
  out.reserve(members.size());
  for (std::uint64_t mask : members) out.push_back(ClosedSet{receiver, mask});
  return out;
}

// ---------------------------------------------------------------------------
// Canonical scheme construction
// ---------------------------------------------------------------------------

namespace {

/// Column index of (enc, dec) in `vertices`, appending when absent; this is
/// where sub-messages with identical encoder/decoder sets merge.
int vertex_column(std::vector<Vertex>& vertices, const Vertex& wanted) {
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i] == wanted) return static_cast<int>(i);
  vertices.push_back(wanted);
  return static_cast<int>(vertices.size()) - 1;
}

struct ColumnPlan {
  Vertex vertex;
  int message = 0;
  double fraction = 0.0;
};

Cgras build_scheme(const MessageAllocation& alloc, const NetworkConfig& config,
                   const std::vector<ColumnPlan>& plan) {
  Cgras scheme;
  scheme.allocation = alloc;
  std::vector<std::vector<std::pair<int, double>>> column_loads;
  for (const ColumnPlan& entry : plan) {
    if (entry.fraction <= 0.0) continue;  // zero-rate column, pruned
    const int col = vertex_column(scheme.vertices, entry.vertex);
    if (col == static_cast<int>(column_loads.size())) column_loads.emplace_back();
    column_loads[col].emplace_back(entry.message, entry.fraction);
  }
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(config.n_receivers, scheme.n_vertices());
  for (int col = 0; col < scheme.n_vertices(); ++col)
    for (const auto& [z, fraction] : column_loads[col]) scheme.gamma.gamma(z, col) += fraction;
  scheme.edges = all_admissible_edges(scheme.vertices);
  canonicalize_edges(scheme.edges);
  return scheme;
}

}  // namespace

CanonicalSchemeStream::CanonicalSchemeStream(MessageAllocation alloc, const NetworkConfig& config,
                                             std::vector<double> split_grid, std::size_t cap)
    : alloc_(std::move(alloc)), config_(config), cap_(cap) {
  validate_allocation(alloc_, config);
  for (int z = 0; z < config.n_receivers; ++z)
    if (config.target_rates[z] > 0) messages_.push_back(z);

  // Usable fractions are interior; 0 or 1 would degenerate to no split.
  for (double f : split_grid)
    if (f > 1e-12 && f < 1.0 - 1e-12) grid_.push_back(f);
  std::sort(grid_.begin(), grid_.end());
  grid_.erase(std::unique(grid_.begin(), grid_.end()), grid_.end());

  // Common-part decoder options per message: every strict superset of {z},
  // ascending by mask.
  const std::uint32_t full = (config.n_receivers >= 32) ? ~std::uint32_t{0}
                                                        : bit(config.n_receivers) - 1;
  for (int z : messages_) {
    std::vector<std::uint32_t> options;
    const std::uint32_t rest = full & ~bit(z);
    for (std::uint32_t extra = rest; extra != 0; extra = (extra - 1) & rest)
      options.push_back(bit(z) | extra);
    std::sort(options.begin(), options.end());
    common_options_.push_back(std::move(options));
  }
  choice_.assign(messages_.size(), -1);  // -1: message kept unsplit
}

Cgras CanonicalSchemeStream::no_split_scheme() const {
  std::vector<ColumnPlan> plan;
  for (int z : messages_)
    plan.push_back({Vertex{alloc_.relays_knowing(z), bit(z)}, z, 1.0});
  return build_scheme(alloc_, config_, plan);
}

std::optional<Cgras> CanonicalSchemeStream::maximal_scheme() const {
  // One vertex per (message, decoder superset), uniform split seed.
  std::vector<ColumnPlan> plan;
  std::vector<Vertex> budget_probe;
  for (std::size_t i = 0; i < messages_.size(); ++i) {
    const int z = messages_[i];
    const std::uint32_t holders = alloc_.relays_knowing(z);
    std::vector<std::uint32_t> decoder_sets{bit(static_cast<int>(z))};
    decoder_sets.insert(decoder_sets.end(), common_options_[i].begin(), common_options_[i].end());
    const double fraction = 1.0 / static_cast<double>(decoder_sets.size());
    for (std::uint32_t dec : decoder_sets) {
      plan.push_back({Vertex{holders, dec}, z, fraction});
      vertex_column(budget_probe, Vertex{holders, dec});
    }
  }
  if (static_cast<int>(budget_probe.size()) > kMaxVertices) return std::nullopt;
  return build_scheme(alloc_, config_, plan);
}

std::optional<Cgras> CanonicalSchemeStream::split_scheme(double fraction,
                                                         const std::vector<int>& choice) const {
  bool any_split = false;
  std::vector<ColumnPlan> plan;
  for (std::size_t i = 0; i < messages_.size(); ++i) {
    const int z = messages_[i];
    const std::uint32_t holders = alloc_.relays_knowing(z);
    if (choice[i] < 0) {
      plan.push_back({Vertex{holders, bit(z)}, z, 1.0});
      continue;
    }
    any_split = true;
    const std::uint32_t common_dec = common_options_[i][choice[i]];
    plan.push_back({Vertex{holders, bit(z)}, z, 1.0 - fraction});      // private part
    plan.push_back({Vertex{holders, common_dec}, z, fraction});        // common part
  }
  if (!any_split) return std::nullopt;  // identical to the no-split scheme
  return build_scheme(alloc_, config_, plan);
}

bool CanonicalSchemeStream::already_emitted(const Cgras& scheme) const {
  for (const Cgras& prev : emitted_) {
    if (!(prev.vertices == scheme.vertices) || !(prev.edges == scheme.edges)) continue;
    if (scheme.gamma.gamma.size() == 0 ||
        (prev.gamma.gamma - scheme.gamma.gamma).cwiseAbs().maxCoeff() <= 1e-12)
      return true;
  }
  return false;
}

std::optional<Cgras> CanonicalSchemeStream::next() {
  while (emitted_count_ < cap_) {
    std::optional<Cgras> candidate;
    if (phase_ == 0) {
      candidate = no_split_scheme();
      phase_ = 1;
    } else if (phase_ == 1) {
      candidate = maximal_scheme();
      phase_ = 2;
      grid_index_ = 0;
      std::fill(choice_.begin(), choice_.end(), -1);
      choice_fresh_ = true;
    } else if (phase_ == 2) {
      if (grid_index_ >= grid_.size() || messages_.empty()) {
        phase_ = 3;
        continue;
      }
      // Odometer over per-message options (-1 = unsplit, then each superset);
      // the all-unsplit combination duplicates the no-split scheme and is
      // produced but rejected by the duplicate filter below.
      if (!choice_fresh_) {
        bool advanced = false;
        for (std::size_t i = choice_.size(); i-- > 0;) {
          if (choice_[i] + 1 < static_cast<int>(common_options_[i].size())) {
            ++choice_[i];
            for (std::size_t k = i + 1; k < choice_.size(); ++k) choice_[k] = -1;
            advanced = true;
            break;
          }
        }
        if (!advanced) {
          ++grid_index_;
          std::fill(choice_.begin(), choice_.end(), -1);
          choice_fresh_ = true;
          continue;
        }
      } else {
        choice_fresh_ = false;
        continue;  // skip the all-unsplit combination outright
      }
      candidate = split_scheme(grid_[grid_index_], choice_);
    } else {
      return std::nullopt;
    }

    if (!candidate || already_emitted(*candidate)) continue;
    emitted_.push_back(*candidate);
    ++emitted_count_;
    return candidate;
  }
  return std::nullopt;
}

std::vector<Cgras> canonical_schemes(const MessageAllocation& alloc, const NetworkConfig& config,
                                     const std::vector<double>& split_grid, std::size_t cap) {
  CanonicalSchemeStream stream(alloc, config, split_grid, cap);
  std::vector<Cgras> out;
  while (auto scheme = stream.next()) out.push_back(std::move(*scheme));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string to_dot(const Cgras& scheme, const NetworkConfig& config) {
  const Eigen::VectorXd rates = split_rates(scheme.gamma, config.target_rates);
  std::ostringstream os;
  for (int v = 0; v < scheme.n_vertices(); ++v) {
    os << "v" << v << " [encoders=" << format_index_set(scheme.vertices[v].encoders)
       << " decoders=" << format_index_set(scheme.vertices[v].decoders) << " rate=";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", rates(v));
    os << buf << "]\n";
  }
  for (const auto& [a, b] : scheme.edges) os << "v" << a << " -> v" << b << "\n";
  return os.str();
}

Json serialize(const Cgras& scheme) {
  Json vertices = Json::array();
  for (const Vertex& v : scheme.vertices)
    vertices.push_back(Json{{"encoders", mask_to_list(v.encoders)},
                            {"decoders", mask_to_list(v.decoders)}});
  Json edges = Json::array();
  for (const auto& [a, b] : scheme.edges) edges.push_back(Json::array({a, b}));
  Json gamma = Json::array();
  for (Eigen::Index z = 0; z < scheme.gamma.gamma.rows(); ++z) {
    Json row = Json::array();
    for (Eigen::Index v = 0; v < scheme.gamma.gamma.cols(); ++v)
      row.push_back(scheme.gamma.gamma(z, v));
    gamma.push_back(std::move(row));
  }
  return Json{{"allocation", serialize(scheme.allocation)["known"]},
              {"vertices", std::move(vertices)},
              {"edges", std::move(edges)},
              {"gamma", std::move(gamma)}};
}

Cgras scheme_from_json(const Json& doc, const NetworkConfig& config) {
  if (!doc.is_object()) throw ConfigError("", "scheme document must be an object");
  Cgras scheme;
  if (!doc.contains("allocation")) throw ConfigError("allocation", "missing field");
  scheme.allocation = allocation_from_json(doc.at("allocation"), config);

  if (!doc.contains("vertices") || !doc.at("vertices").is_array())
    throw ConfigError("vertices", "expected an array");
  for (const Json& entry : doc.at("vertices")) {
    if (!entry.is_object() || !entry.contains("encoders") || !entry.contains("decoders"))
      throw ConfigError("vertices", "each vertex needs encoders and decoders lists");
    Vertex v;
    v.encoders = mask_of(entry.at("encoders").get<std::vector<int>>());
    v.decoders = mask_of(entry.at("decoders").get<std::vector<int>>());
    scheme.vertices.push_back(v);
  }

  if (!doc.contains("edges") || !doc.at("edges").is_array())
    throw ConfigError("edges", "expected an array of [parent, child] pairs");
  for (const Json& entry : doc.at("edges")) {
    if (!entry.is_array() || entry.size() != 2)
      throw ConfigError("edges", "expected [parent, child] pairs");
    scheme.edges.emplace_back(entry.at(0).get<int>(), entry.at(1).get<int>());
  }
  canonicalize_edges(scheme.edges);

  if (!doc.contains("gamma") || !doc.at("gamma").is_array())
    throw ConfigError("gamma", "expected an array of rows");
  const Json& gamma = doc.at("gamma");
  if (static_cast<int>(gamma.size()) != config.n_receivers)
    throw ConfigError("gamma", "expected one row per receiver");
  scheme.gamma.gamma = Eigen::MatrixXd::Zero(config.n_receivers, scheme.n_vertices());
  for (int z = 0; z < config.n_receivers; ++z) {
    const Json& row = gamma.at(z);
    if (!row.is_array() || static_cast<int>(row.size()) != scheme.n_vertices())
      throw ConfigError("gamma[" + std::to_string(z) + "]", "expected one entry per vertex");
    for (int v = 0; v < scheme.n_vertices(); ++v)
      scheme.gamma.gamma(z, v) = row.at(v).get<double>();
  }
  return scheme;
}

Cgras load_scheme_file(const std::string& path, const NetworkConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open scheme file");
  Json doc;
  try {
    in >> doc;
  } catch (const Json::parse_error& err) {
    throw ConfigError(path, std::string("parse error: ") + err.what());
  }
  return scheme_from_json(doc, config);
}

}  // namespace cgras
