#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cgras/model.hpp"

namespace cgras {

// ---------------------------------------------------------------------------
// Transmission schemes: sub-message vertices, a rate-splitting matrix and a
// layering DAG. A vertex (encoders, decoders) is one codeword: transmitted
// by the relays in `encoders`, decoded by the receivers in `decoders`.
// An edge u -> v means v's codeword is layered on top of u's (u is the
// bottom/parent): decoders of v must first decode u.
// ---------------------------------------------------------------------------

struct Vertex {
  std::uint32_t encoders = 0;  // relay index set, nonempty
  std::uint32_t decoders = 0;  // receiver index set, nonempty

  bool operator==(const Vertex&) const = default;
};

/// Edge admissibility: a child (top) codeword may be layered on a parent
/// (bottom) codeword only if the bottom is encoded by at least the top's
/// relays (they need the bottom codeword to build the layered one) and
/// decoded by at least the top's receivers (they must strip the bottom
/// first). The relation is transitive, so a valid edge set is transitively
/// closed.
inline bool edge_admissible(const Vertex& parent, const Vertex& child) {
  return subset_of(child.encoders, parent.encoders) &&
         subset_of(child.decoders, parent.decoders);
}

/// Fractions of each original message assigned to each vertex.
/// Rows are receivers, columns are vertices; a row with positive target rate
/// must sum to 1 over its admissible columns. An entry (z, v) may be nonzero
/// only when z is decoded at v and every encoder of v holds message z.
struct SplitMatrix {
  Eigen::MatrixXd gamma;  // n_receivers x n_vertices

  int n_vertices() const { return static_cast<int>(gamma.cols()); }
};

struct Cgras {
  MessageAllocation allocation;
  std::vector<Vertex> vertices;                // at most 64
  std::vector<std::pair<int, int>> edges;      // (parent=bottom, child=top), sorted
  SplitMatrix gamma;

  int n_vertices() const { return static_cast<int>(vertices.size()); }

  /// Vertex-index mask of the codewords receiver z decodes.
  std::uint64_t decoded_set(int receiver) const;

  /// children[v] = mask of direct children of v (codewords layered on v).
  std::vector<std::uint64_t> children_masks() const;
};

struct ValidationResult {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Accepts iff the DAG/splitting invariants all hold; on rejection the result
/// lists every violated edge/row (acyclicity, per-edge admissibility,
/// transitive closure, split-row sums, split-entry admissibility).
ValidationResult validate(const Cgras& scheme, const NetworkConfig& config);

/// Sub-message rates: r[v] = sum_z gamma(z,v) * rates[z]. Preserves the total.
Eigen::VectorXd split_rates(const SplitMatrix& gamma, const std::vector<double>& rates);

// ---------------------------------------------------------------------------
// Decoding-set machinery
// ---------------------------------------------------------------------------

/// A nonempty subset F of the codewords receiver z decodes, closed under
/// children within the induced subgraph: once a codeword is in the error
/// event, everything layered on top of it is too.
struct ClosedSet {
  int receiver = 0;
  std::uint64_t members = 0;  // bitmask over global vertex indices

  bool operator==(const ClosedSet&) const = default;
};

/// All closed sets for one receiver, deduplicated, ascending by member mask.
/// Walks the induced subgraph children-first so each set is produced once;
/// guarded against blowup at 24 decoded vertices.
std::vector<ClosedSet> enumerate_closed_sets(const Cgras& scheme, int receiver);

// ---------------------------------------------------------------------------
// Canonical scheme families
// ---------------------------------------------------------------------------

/// Streams ready-made valid schemes for one allocation, deterministically:
///   id 0:  one vertex per positive-rate message at its full holder set,
///          decoded only by its intended receiver, no layering;
///   id 1:  the maximal-layering scheme: per message, one vertex for every
///          decoder superset, every admissible edge, uniform split seed
///          (skipped when the vertex budget would be exceeded);
///   then, for each split fraction in `split_grid` (filtered to (0,1)) and
///   each per-message choice of common-part decoder superset: a two-way
///   common/private split, with identical (encoders, decoders) vertices
///   merged into one column.
/// Exact duplicates are suppressed. `cap` truncates the stream in order.
class CanonicalSchemeStream {
 public:
  CanonicalSchemeStream(MessageAllocation alloc, const NetworkConfig& config,
                        std::vector<double> split_grid, std::size_t cap);

  std::optional<Cgras> next();

 private:
  struct Odometer;

  Cgras no_split_scheme() const;
  std::optional<Cgras> maximal_scheme() const;
  std::optional<Cgras> split_scheme(double fraction, const std::vector<int>& choice) const;
  bool already_emitted(const Cgras& scheme) const;

  MessageAllocation alloc_;
  const NetworkConfig& config_;
  std::vector<double> grid_;
  std::size_t cap_ = 0;
  std::size_t emitted_count_ = 0;

  std::vector<int> messages_;                       // positive-rate receivers
  std::vector<std::vector<std::uint32_t>> common_options_;  // per message: decoder supersets
  int phase_ = 0;                                   // 0 no-split, 1 maximal, 2 splits, 3 done
  std::size_t grid_index_ = 0;
  std::vector<int> choice_;                         // odometer over common_options_
  bool choice_fresh_ = true;
  std::vector<Cgras> emitted_;
};

std::vector<Cgras> canonical_schemes(const MessageAllocation& alloc, const NetworkConfig& config,
                                     const std::vector<double>& split_grid, std::size_t cap);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// One line per vertex:  v<id> [encoders={...} decoders={...} rate=<r>]
/// one line per edge:    v<a> -> v<b>
std::string to_dot(const Cgras& scheme, const NetworkConfig& config);

Json serialize(const Cgras& scheme);
Cgras scheme_from_json(const Json& doc, const NetworkConfig& config);
Cgras load_scheme_file(const std::string& path, const NetworkConfig& config);

}  // namespace cgras
