#pragma once

// Collaborative tag graph: an undirected tripartite graph over users, items
// and tags. Every tagging triplet (u, t, i) contributes the edges (u, i),
// (u, t) and (i, t).
//
// Nodes share one index space: users occupy [0, Nu), items [Nu, Nu + Ni) and
// tags [Nu + Ni, Nu + Ni + Nt). Neighbor lists are sorted by global id, so a
// list is naturally partitioned into its user, item and tag neighbors.

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace boxgnn {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { kUser = 0, kItem = 1, kTag = 2 };

struct NodeCounts {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t tags = 0;

  std::size_t total() const { return users + items + tags; }
  bool operator==(const NodeCounts&) const = default;
};

/// A tagging triplet: user `user` annotated item `item` with tag `tag`.
/// Indices are dense vocabulary indices.
struct Assignment {
  std::uint32_t user = 0;
  std::uint32_t tag = 0;
  std::uint32_t item = 0;

  auto operator<=>(const Assignment&) const = default;
};

using Edge = std::pair<std::uint32_t, std::uint32_t>;

class CollaborativeTagGraph {
 public:
  CollaborativeTagGraph() = default;

  const NodeCounts& counts() const { return counts_; }
  std::size_t num_nodes() const { return counts_.total(); }

  NodeId user_node(std::uint32_t u) const { return u; }
  NodeId item_node(std::uint32_t i) const { return static_cast<NodeId>(counts_.users + i); }
  NodeId tag_node(std::uint32_t t) const { return static_cast<NodeId>(counts_.users + counts_.items + t); }
  NodeKind kind(NodeId v) const;
  /// Index of a node within its own vocabulary.
  std::uint32_t local_index(NodeId v) const;

  /// All neighbors of v in ascending global id order.
  std::span<const NodeId> neighbors(NodeId v) const;
  /// Neighbors of v restricted to one node type.
  std::span<const NodeId> neighbors(NodeId v, NodeKind of) const;

  /// Deduplicated, sorted edge sets: r0 = (user, item), r1 = (user, tag), r2 = (item, tag).
  const std::vector<Edge>& user_item_edges() const { return r0_; }
  const std::vector<Edge>& user_tag_edges() const { return r1_; }
  const std::vector<Edge>& item_tag_edges() const { return r2_; }

  std::size_t num_directed_edges() const { return adjacency_.size(); }

 private:
  friend CollaborativeTagGraph build_ctg(std::span<const Assignment>, const NodeCounts&);

  NodeCounts counts_;
  std::vector<Edge> r0_, r1_, r2_;
  // CSR: neighbors of v are adjacency_[row_start_[v] .. row_start_[v + 1]).
  std::vector<std::size_t> row_start_{0};
  std::vector<NodeId> adjacency_;
};

/// Throws std::invalid_argument naming the first out-of-range triplet.
CollaborativeTagGraph build_ctg(std::span<const Assignment> assignments, const NodeCounts& counts);

/// A graph together with a node mask. A masked node loses every incident
/// edge; the underlying graph is never modified.
class GraphView {
 public:
  explicit GraphView(const CollaborativeTagGraph& graph);
  GraphView(const CollaborativeTagGraph& graph, std::vector<std::uint8_t> masked);

  const CollaborativeTagGraph& graph() const { return *graph_; }
  bool masked(NodeId v) const { return masked_[v] != 0; }
  std::size_t num_masked() const;
  const std::vector<std::uint8_t>& mask() const { return masked_; }

  bool edge_active(NodeId v, NodeId u) const { return masked_[v] == 0 && masked_[u] == 0; }
  /// Active neighbors of v (ascending). Empty when v itself is masked.
  std::vector<NodeId> neighbors(NodeId v) const;
  std::vector<NodeId> neighbors(NodeId v, NodeKind of) const;

 private:
  const CollaborativeTagGraph* graph_;
  std::vector<std::uint8_t> masked_;
};

/// Masks floor(ratio * num_nodes) nodes drawn uniformly without replacement.
/// Throws std::invalid_argument unless 0 <= ratio < 1.
GraphView dropout_view(const CollaborativeTagGraph& graph, double ratio, std::mt19937_64& rng);

}  // namespace boxgnn
