#pragma once

// Type-aware box message passing over the collaborative tag graph.
//
//   user : center = attention over all tag and item neighbors,
//          offset = max(min over item-neighbor offsets, max over tag-neighbor offsets)
//   tag  : center = attention over all neighbors, offset = min over all neighbors
//   item : center = attention over all neighbors, offset = max over all neighbors
//
// A node without active neighbors keeps its current box. Layers are
// synchronous: layer l+1 reads only layer l.

#include <cstddef>
#include <vector>

#include "boxgnn/box.hpp"
#include "boxgnn/graph.hpp"
#include "boxgnn/model.hpp"

namespace boxgnn {

/// Boxes for every node (global ids) at one layer.
struct LayerState {
  RowMatrix center;
  RowMatrix offset;
  std::size_t layer = 0;

  BoxEmbedding box(NodeId v) const;
  std::size_t num_nodes() const { return static_cast<std::size_t>(center.rows()); }
};

/// Layer 0: stacked embedding tables with offsets mapped through abs().
LayerState initial_state(const ModelParams& params);

BoxEmbedding aggregate_user(NodeId u, const LayerState& state, const GraphView& view,
                            const AttentionParams& attn);
BoxEmbedding aggregate_tag(NodeId t, const LayerState& state, const GraphView& view,
                           const AttentionParams& attn);
BoxEmbedding aggregate_item(NodeId i, const LayerState& state, const GraphView& view,
                            const AttentionParams& attn);

/// Forward intermediates needed by propagate_backward.
struct PropagationTape {
  std::vector<LayerState> states;  // states[0..L]
  std::vector<RowMatrix> logits;   // logits[l] = attention logits of states[l]
  // offset_source[l](v, j): node whose offset won dimension j for v at layer l+1.
  std::vector<Eigen::Matrix<NodeId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> offset_source;
};

/// Runs `layers` propagation steps (layers <= params.layers()) and returns the
/// final state. L = 0 returns initial_state(params).
LayerState propagate(const ModelParams& params, const GraphView& view, std::size_t layers,
                     PropagationTape* tape = nullptr);

/// Accumulates into `grad` the gradient of a scalar whose partials w.r.t. the
/// final centers / offsets are `grad_center` / `grad_offset` (N x d, global ids).
void propagate_backward(const ModelParams& params, const GraphView& view, const PropagationTape& tape,
                        const RowMatrix& grad_center, const RowMatrix& grad_offset, ModelParams& grad);

}  // namespace boxgnn
