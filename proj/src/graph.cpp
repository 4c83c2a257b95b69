#include "boxgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace boxgnn {

namespace {

void dedup(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

}  // namespace

NodeKind CollaborativeTagGraph::kind(NodeId v) const {
  if (v < counts_.users) return NodeKind::kUser;
  if (v < counts_.users + counts_.items) return NodeKind::kItem;
  return NodeKind::kTag;
}

std::uint32_t CollaborativeTagGraph::local_index(NodeId v) const {
  switch (kind(v)) {
    case NodeKind::kUser: return v;
    case NodeKind::kItem: return static_cast<std::uint32_t>(v - counts_.users);
    case NodeKind::kTag: return static_cast<std::uint32_t>(v - counts_.users - counts_.items);
  }
  return v;
}

std::span<const NodeId> CollaborativeTagGraph::neighbors(NodeId v) const {
  return {adjacency_.data() + row_start_[v], adjacency_.data() + row_start_[v + 1]};
}

std::span<const NodeId> CollaborativeTagGraph::neighbors(NodeId v, NodeKind of) const {
  const auto all = neighbors(v);
  const NodeId lo = of == NodeKind::kUser ? 0
                    : of == NodeKind::kItem ? static_cast<NodeId>(counts_.users)
                                            : static_cast<NodeId>(counts_.users + counts_.items);
  const NodeId hi = of == NodeKind::kUser   ? static_cast<NodeId>(counts_.users)
                    : of == NodeKind::kItem ? static_cast<NodeId>(counts_.users + counts_.items)
                                            : static_cast<NodeId>(counts_.total());
  const auto first = std::lower_bound(all.begin(), all.end(), lo);
  const auto last = std::lower_bound(first, all.end(), hi);
  return all.subspan(static_cast<std::size_t>(first - all.begin()),
                     static_cast<std::size_t>(last - first));
}

CollaborativeTagGraph build_ctg(std::span<const Assignment> assignments, const NodeCounts& counts) {
  CollaborativeTagGraph g;
  g.counts_ = counts;
  for (std::size_t n = 0; n < assignments.size(); ++n) {
    const auto& a = assignments[n];
    if (a.user >= counts.users || a.item >= counts.items || a.tag >= counts.tags) {
      std::ostringstream msg;
      msg << "build_ctg: assignment #" << n << " (user " << a.user << ", tag " << a.tag << ", item "
          << a.item << ") out of range for counts (" << counts.users << ", " << counts.items << ", "
          << counts.tags << ")";
      throw std::invalid_argument(msg.str());
    }
    g.r0_.emplace_back(a.user, a.item);
    g.r1_.emplace_back(a.user, a.tag);
    g.r2_.emplace_back(a.item, a.tag);
  }
  dedup(g.r0_);
  dedup(g.r1_);
  dedup(g.r2_);

  const std::size_t n = counts.total();
  std::vector<std::size_t> degree(n, 0);
  auto count_edges = [&](const std::vector<Edge>& edges, auto to_a, auto to_b) {
    for (const auto& [x, y] : edges) {
      ++degree[to_a(x)];
      ++degree[to_b(y)];
    }
  };
  auto user = [&](std::uint32_t x) { return g.user_node(x); };
  auto item = [&](std::uint32_t x) { return g.item_node(x); };
  auto tag = [&](std::uint32_t x) { return g.tag_node(x); };
  count_edges(g.r0_, user, item);
  count_edges(g.r1_, user, tag);
  count_edges(g.r2_, item, tag);

  g.row_start_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.row_start_[v + 1] = g.row_start_[v] + degree[v];
  g.adjacency_.assign(g.row_start_[n], 0);
  std::vector<std::size_t> cursor(g.row_start_.begin(), g.row_start_.end() - 1);
  auto fill = [&](const std::vector<Edge>& edges, auto to_a, auto to_b) {
    for (const auto& [x, y] : edges) {
      const NodeId a = to_a(x), b = to_b(y);
      g.adjacency_[cursor[a]++] = b;
      g.adjacency_[cursor[b]++] = a;
    }
  };
  fill(g.r0_, user, item);
  fill(g.r1_, user, tag);
  fill(g.r2_, item, tag);
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.row_start_[v]),
              g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.row_start_[v + 1]));
  }
  return g;
}

GraphView::GraphView(const CollaborativeTagGraph& graph)
    : graph_(&graph), masked_(graph.num_nodes(), 0) {}

GraphView::GraphView(const CollaborativeTagGraph& graph, std::vector<std::uint8_t> masked)
    : graph_(&graph), masked_(std::move(masked)) {
  if (masked_.size() != graph.num_nodes()) throw std::invalid_argument("GraphView: mask size mismatch");
}

std::size_t GraphView::num_masked() const {
  return static_cast<std::size_t>(std::count_if(masked_.begin(), masked_.end(), [](auto m) { return m != 0; }));
}

std::vector<NodeId> GraphView::neighbors(NodeId v) const {
  std::vector<NodeId> out;
  if (masked(v)) return out;
  for (NodeId u : graph_->neighbors(v)) {
    if (!masked(u)) out.push_back(u);
  }
  return out;
}

std::vector<NodeId> GraphView::neighbors(NodeId v, NodeKind of) const {
  std::vector<NodeId> out;
  if (masked(v)) return out;
  for (NodeId u : graph_->neighbors(v, of)) {
    if (!masked(u)) out.push_back(u);
  }
  return out;
}

GraphView dropout_view(const CollaborativeTagGraph& graph, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("dropout ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  const std::size_t n = graph.num_nodes();
  const auto drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  std::vector<std::uint8_t> masked(n, 0);
  if (drop == 0) return GraphView(graph, std::move(masked));

  // Partial Fisher-Yates: the first `drop` slots end up a uniform sample.
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  for (std::size_t k = 0; k < drop; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(order[k], order[pick(rng)]);
    masked[order[k]] = 1;
  }
  return GraphView(graph, std::move(masked));
}

}  // namespace boxgnn
