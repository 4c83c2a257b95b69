#pragma once

#include <cstddef>
#include <vector>

#include "boxgnn/box.hpp"
#include "boxgnn/graph.hpp"

namespace boxgnn {

/// Learnable parameters: center and raw-offset tables per node type plus one
/// attention map per propagation layer. Raw offsets are unconstrained; the
/// effective offset is their absolute value.
struct ModelParams {
  RowMatrix user_center, user_offset;
  RowMatrix item_center, item_offset;
  RowMatrix tag_center, tag_offset;
  std::vector<AttentionParams> attention;

  static ModelParams zeros(const NodeCounts& counts, Eigen::Index dim, std::size_t layers);

  NodeCounts counts() const {
    return {static_cast<std::size_t>(user_center.rows()), static_cast<std::size_t>(item_center.rows()),
            static_cast<std::size_t>(tag_center.rows())};
  }
  Eigen::Index dim() const { return user_center.cols(); }
  std::size_t layers() const { return attention.size(); }

  /// Every table in a fixed order (used by the optimizer, checkpoints and tests).
  std::vector<RowMatrix*> tables();
  std::vector<const RowMatrix*> tables() const;
  /// Attention biases as column vectors, in layer order.
  std::vector<Vector*> vectors();
  std::vector<const Vector*> vectors() const;

  std::size_t num_scalars() const;
  bool all_finite() const;
  double squared_norm() const;

  bool operator==(const ModelParams& other) const;
};

}  // namespace boxgnn
