#include "boxgnn/propagation.hpp"

#include <stdexcept>
#include <string>

#include "boxgnn/parallel.hpp"

namespace boxgnn {

namespace {

using SourceMatrix = Eigen::Matrix<NodeId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Workspace {
  std::vector<NodeId> neighbors;
  RowMatrix centers;
  RowMatrix logits;
  RowMatrix offsets;
  std::vector<int> source;
};

void gather_active(const GraphView& view, NodeId v, std::vector<NodeId>& out) {
  out.clear();
  if (view.masked(v)) return;
  for (NodeId u : view.graph().neighbors(v)) {
    if (!view.masked(u)) out.push_back(u);
  }
}

RowMatrix all_logits(const RowMatrix& centers, const AttentionParams& attn) {
  RowMatrix logits = centers * attn.weight.transpose();
  logits.rowwise() += attn.bias.transpose();
  return logits;
}

// Fills ws.centers / ws.logits with the rows of ws.neighbors. Logits come from
// the precomputed table when given, otherwise from the attention map.
void gather_rows(const LayerState& in, const RowMatrix* logits, const AttentionParams& attn, Workspace& ws) {
  const auto n = static_cast<Eigen::Index>(ws.neighbors.size());
  const Eigen::Index d = in.center.cols();
  ws.centers.resize(n, d);
  ws.logits.resize(n, d);
  ws.offsets.resize(n, d);
  for (Eigen::Index k = 0; k < n; ++k) {
    const NodeId u = ws.neighbors[static_cast<std::size_t>(k)];
    ws.centers.row(k) = in.center.row(u);
    ws.offsets.row(k) = in.offset.row(u);
    if (logits) ws.logits.row(k) = logits->row(u);
  }
  if (!logits) {
    ws.logits = ws.centers * attn.weight.transpose();
    ws.logits.rowwise() += attn.bias.transpose();
  }
}

// Offset rule for node v given that ws is populated. Writes the winning
// neighbor (global id) per dimension to `source`.
Vector combine_offsets(NodeKind kind, const CollaborativeTagGraph& g, Workspace& ws, NodeId* source) {
  const auto n = static_cast<Eigen::Index>(ws.neighbors.size());
  const Eigen::Index d = ws.offsets.cols();
  if (kind != NodeKind::kUser) {
    const OffsetRule rule = kind == NodeKind::kTag ? OffsetRule::kMin : OffsetRule::kMax;
    Vector out = detail::select_offsets(ws.offsets, rule, &ws.source);
    for (Eigen::Index j = 0; j < d; ++j) source[j] = ws.neighbors[static_cast<std::size_t>(ws.source[static_cast<std::size_t>(j)])];
    return out;
  }
  // Item ids precede tag ids, so a user's neighbor list is [items..., tags...].
  Eigen::Index n_items = 0;
  while (n_items < n && g.kind(ws.neighbors[static_cast<std::size_t>(n_items)]) == NodeKind::kItem) ++n_items;
  const Eigen::Index n_tags = n - n_items;

  Vector out(d);
  std::vector<int> item_src, tag_src;
  Vector item_min, tag_max;
  if (n_items > 0) item_min = detail::select_offsets(ws.offsets.topRows(n_items), OffsetRule::kMin, &item_src);
  if (n_tags > 0) tag_max = detail::select_offsets(ws.offsets.bottomRows(n_tags), OffsetRule::kMax, &tag_src);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const bool take_items = n_tags == 0 || (n_items > 0 && item_min[j] >= tag_max[j]);
    if (take_items) {
      out[j] = item_min[j];
      source[j] = ws.neighbors[static_cast<std::size_t>(item_src[jj])];
    } else {
      out[j] = tag_max[j];
      source[j] = ws.neighbors[static_cast<std::size_t>(n_items + tag_src[jj])];
    }
  }
  return out;
}

// Aggregates node v from layer `in`. Returns false (and the ego box) when v has
// no active neighbors.
bool aggregate_node(NodeId v, const LayerState& in, const RowMatrix* logits, const AttentionParams& attn,
                    const GraphView& view, Workspace& ws, Vector& center, Vector& offset, NodeId* source) {
  const Eigen::Index d = in.center.cols();
  gather_active(view, v, ws.neighbors);
  if (ws.neighbors.empty()) {
    center = in.center.row(v).transpose();
    offset = in.offset.row(v).transpose();
    for (Eigen::Index j = 0; j < d; ++j) source[j] = v;
    return false;
  }
  gather_rows(in, logits, attn, ws);
  center = detail::attend(ws.logits, ws.centers);
  offset = combine_offsets(view.graph().kind(v), view.graph(), ws, source);
  return true;
}

BoxEmbedding aggregate_checked(NodeId v, NodeKind expected, const LayerState& state, const GraphView& view,
                               const AttentionParams& attn, const char* what) {
  if (v >= view.graph().num_nodes() || view.graph().kind(v) != expected) {
    throw std::invalid_argument(std::string(what) + ": node " + std::to_string(v) + " has the wrong type");
  }
  if (attn.dim() != state.center.cols()) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  Workspace ws;
  BoxEmbedding out;
  std::vector<NodeId> source(static_cast<std::size_t>(state.center.cols()));
  aggregate_node(v, state, nullptr, attn, view, ws, out.center, out.offset, source.data());
  return out;
}

}  // namespace

BoxEmbedding LayerState::box(NodeId v) const {
  return BoxEmbedding(center.row(v).transpose(), offset.row(v).transpose());
}

LayerState initial_state(const ModelParams& params) {
  const auto counts = params.counts();
  const auto n = static_cast<Eigen::Index>(counts.total());
  const Eigen::Index d = params.dim();
  const auto nu = static_cast<Eigen::Index>(counts.users);
  const auto ni = static_cast<Eigen::Index>(counts.items);
  const auto nt = static_cast<Eigen::Index>(counts.tags);
  LayerState s;
  s.center.resize(n, d);
  s.offset.resize(n, d);
  s.center.topRows(nu) = params.user_center;
  s.center.middleRows(nu, ni) = params.item_center;
  s.center.bottomRows(nt) = params.tag_center;
  s.offset.topRows(nu) = params.user_offset.cwiseAbs();
  s.offset.middleRows(nu, ni) = params.item_offset.cwiseAbs();
  s.offset.bottomRows(nt) = params.tag_offset.cwiseAbs();
  s.layer = 0;
  return s;
}

BoxEmbedding aggregate_user(NodeId u, const LayerState& state, const GraphView& view, const AttentionParams& attn) {
  return aggregate_checked(u, NodeKind::kUser, state, view, attn, "aggregate_user");
}

BoxEmbedding aggregate_tag(NodeId t, const LayerState& state, const GraphView& view, const AttentionParams& attn) {
  return aggregate_checked(t, NodeKind::kTag, state, view, attn, "aggregate_tag");
}

BoxEmbedding aggregate_item(NodeId i, const LayerState& state, const GraphView& view, const AttentionParams& attn) {
  return aggregate_checked(i, NodeKind::kItem, state, view, attn, "aggregate_item");
}

LayerState propagate(const ModelParams& params, const GraphView& view, std::size_t layers, PropagationTape* tape) {
  if (layers > params.layers()) {
    throw std::invalid_argument("propagate: " + std::to_string(layers) + " layers requested but only " +
                                std::to_string(params.layers()) + " attention maps available");
  }
  if (view.graph().counts() != params.counts()) throw std::invalid_argument("propagate: graph/parameter count mismatch");

  LayerState current = initial_state(params);
  if (tape) {
    tape->states.clear();
    tape->logits.clear();
    tape->offset_source.clear();
    tape->states.push_back(current);
  }
  const auto n = current.num_nodes();
  const Eigen::Index d = current.center.cols();
  for (std::size_t l = 0; l < layers; ++l) {
    const AttentionParams& attn = params.attention[l];
    RowMatrix logits = all_logits(current.center, attn);
    LayerState next;
    next.center.resize(current.center.rows(), d);
    next.offset.resize(current.offset.rows(), d);
    next.layer = l + 1;
    SourceMatrix source(static_cast<Eigen::Index>(n), d);

    parallel::parallel_for(n, [&](std::size_t begin, std::size_t end) {
      Workspace ws;
      Vector c, o;
      for (std::size_t v = begin; v < end; ++v) {
        const auto row = static_cast<Eigen::Index>(v);
        aggregate_node(static_cast<NodeId>(v), current, &logits, attn, view, ws, c, o, source.row(row).data());
        next.center.row(row) = c.transpose();
        next.offset.row(row) = o.transpose();
      }
    });

    if (tape) {
      tape->logits.push_back(std::move(logits));
      tape->offset_source.push_back(std::move(source));
      tape->states.push_back(next);
    }
    current = std::move(next);
  }
  return current;
}

void propagate_backward(const ModelParams& params, const GraphView& view, const PropagationTape& tape,
                        const RowMatrix& grad_center, const RowMatrix& grad_offset, ModelParams& grad) {
  const std::size_t layers = tape.logits.size();
  RowMatrix g_center = grad_center;
  RowMatrix g_offset = grad_offset;
  const Eigen::Index d = g_center.cols();
  const auto n = static_cast<std::size_t>(g_center.rows());

  Workspace ws;
  RowMatrix local_logits, local_centers;
  for (std::size_t l = layers; l-- > 0;) {
    const LayerState& in = tape.states[l];
    const LayerState& out = tape.states[l + 1];
    const RowMatrix& logits = tape.logits[l];
    const SourceMatrix& source = tape.offset_source[l];
    const AttentionParams& attn = params.attention[l];

    RowMatrix gc_in = RowMatrix::Zero(g_center.rows(), d);
    RowMatrix go_in = RowMatrix::Zero(g_offset.rows(), d);
    RowMatrix g_logits = RowMatrix::Zero(g_center.rows(), d);

    for (std::size_t v = 0; v < n; ++v) {
      const auto row = static_cast<Eigen::Index>(v);
      for (Eigen::Index j = 0; j < d; ++j) go_in(source(row, j), j) += g_offset(row, j);

      gather_active(view, static_cast<NodeId>(v), ws.neighbors);
      if (ws.neighbors.empty()) {
        gc_in.row(row) += g_center.row(row);
        continue;
      }
      gather_rows(in, &logits, attn, ws);
      const auto k = static_cast<Eigen::Index>(ws.neighbors.size());
      local_logits.setZero(k, d);
      local_centers.setZero(k, d);
      detail::attend_backward(ws.logits, ws.centers, out.center.row(row).transpose(), g_center.row(row).transpose(),
                              local_logits, local_centers);
      for (Eigen::Index r = 0; r < k; ++r) {
        const NodeId u = ws.neighbors[static_cast<std::size_t>(r)];
        gc_in.row(u) += local_centers.row(r);
        g_logits.row(u) += local_logits.row(r);
      }
    }
    // logits = C W^T + b
    gc_in.noalias() += g_logits * attn.weight;
    grad.attention[l].weight.noalias() += g_logits.transpose() * in.center;
    grad.attention[l].bias += g_logits.colwise().sum().transpose();
    g_center = std::move(gc_in);
    g_offset = std::move(go_in);
  }

  // Layer 0: offsets are |raw|.
  const auto counts = params.counts();
  const auto nu = static_cast<Eigen::Index>(counts.users);
  const auto ni = static_cast<Eigen::Index>(counts.items);
  const auto nt = static_cast<Eigen::Index>(counts.tags);
  auto sign = [](const RowMatrix& raw) -> RowMatrix {
    return raw.unaryExpr([](double x) { return x >= 0.0 ? 1.0 : -1.0; });
  };
  grad.user_center += g_center.topRows(nu);
  grad.item_center += g_center.middleRows(nu, ni);
  grad.tag_center += g_center.bottomRows(nt);
  grad.user_offset += g_offset.topRows(nu).cwiseProduct(sign(params.user_offset));
  grad.item_offset += g_offset.middleRows(nu, ni).cwiseProduct(sign(params.item_offset));
  grad.tag_offset += g_offset.bottomRows(nt).cwiseProduct(sign(params.tag_offset));
}

}  // namespace boxgnn
