#pragma once

// Box algebra: axis-aligned boxes, attention-weighted intersection/union and
// the Gumbel corner / softplus volume machinery used for scoring.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace boxgnn {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kEulerGamma = 0.57721566490153286060651209;

/// Axis-aligned box (center, half-width). Offsets are element-wise non-negative.
struct BoxEmbedding {
  Vector center;
  Vector offset;

  BoxEmbedding() = default;
  /// Throws std::invalid_argument on dimension mismatch or a negative offset.
  BoxEmbedding(Vector center, Vector offset);

  Eigen::Index dim() const { return center.size(); }
  Vector min_corner() const { return center - offset; }
  Vector max_corner() const { return center + offset; }
};

/// Location parameters of the min / max corner Gumbel distributions.
struct GumbelBoxParams {
  Vector mu_min;
  Vector mu_max;
};

/// Single affine map from a center to a vector of attention logits:
/// logits = weight * center + bias. Softmax is taken per dimension across a
/// neighbor set, so weight is d x d.
struct AttentionParams {
  RowMatrix weight;
  Vector bias;

  static AttentionParams zeros(Eigen::Index dim);
  Eigen::Index dim() const { return bias.size(); }
  Vector logits(const Vector& center) const { return weight * center + bias; }
};

enum class VolumeMode { kGumbel, kHard };

struct ScoringConfig {
  double beta = 0.2;
  double euler_gamma = kEulerGamma;
  VolumeMode mode = VolumeMode::kGumbel;

  /// Throws std::invalid_argument unless beta > 0.
  void validate() const;
};

enum class OffsetRule { kMin, kMax };

// --- numerically stable scalar helpers -------------------------------------

namespace numeric {

double sigmoid(double x);
/// ln(1 + e^x)
double softplus(double x);
/// ln(softplus(x)), finite for every finite x.
double log_softplus(double x);
/// d/dx ln(softplus(x)) = sigmoid(x) / softplus(x).
double log_softplus_grad(double x);
/// beta * ln(e^{a/beta} + e^{b/beta})
double smooth_max(double a, double b, double beta);
/// -beta * ln(e^{-a/beta} + e^{-b/beta})
double smooth_min(double a, double b, double beta);

}  // namespace numeric

// --- aggregation -------------------------------------------------------------

/// Per-dimension softmax over the attention logits of each center. Every
/// column of the returned weights sums to one.
std::vector<Vector> attention_weights(std::span<const Vector> centers, const AttentionParams& attn);

BoxEmbedding intersect_boxes(std::span<const BoxEmbedding> boxes, const AttentionParams& attn);
BoxEmbedding union_boxes(std::span<const BoxEmbedding> boxes, const AttentionParams& attn);

namespace detail {

/// Rows of `logits` and `centers` correspond to the members of one neighbor
/// set. Returns sum_k softmax_k(logits)[j] * centers(k, j) for each j.
Vector attend(const Eigen::Ref<const RowMatrix>& logits, const Eigen::Ref<const RowMatrix>& centers);

/// Adjoint of attend(). `out` is the forward result. Gradients are added to
/// grad_logits / grad_centers (both n x d).
void attend_backward(const Eigen::Ref<const RowMatrix>& logits,
                     const Eigen::Ref<const RowMatrix>& centers, const Vector& out,
                     const Vector& grad_out, Eigen::Ref<RowMatrix> grad_logits,
                     Eigen::Ref<RowMatrix> grad_centers);

/// Element-wise min/max over rows. `source` receives the winning row per
/// column; ties resolve to the lowest row.
Vector select_offsets(const Eigen::Ref<const RowMatrix>& offsets, OffsetRule rule,
                      std::vector<int>* source = nullptr);

}  // namespace detail

/// Gradients of an aggregation (intersect or union) w.r.t. its inputs.
struct AggregateGrad {
  std::vector<Vector> centers;
  std::vector<Vector> offsets;
  RowMatrix weight;
  Vector bias;
};

AggregateGrad aggregate_backward(std::span<const BoxEmbedding> boxes, const AttentionParams& attn,
                                 OffsetRule rule, const Vector& grad_center,
                                 const Vector& grad_offset);

// --- Gumbel volume -----------------------------------------------------------

GumbelBoxParams gumbel_corners(const BoxEmbedding& box);

GumbelBoxParams gumbel_intersection(const GumbelBoxParams& a, const GumbelBoxParams& b,
                                    const ScoringConfig& cfg);

/// Sum over dimensions of ln(beta * softplus((mu_max - mu_min) / beta - 2 gamma)).
double log_volume(const GumbelBoxParams& corners, const ScoringConfig& cfg);

/// d log_volume / d mu_min and d / d mu_max.
struct CornerGrad {
  Vector mu_min;
  Vector mu_max;
};

CornerGrad log_volume_grad(const GumbelBoxParams& corners, const ScoringConfig& cfg);

/// Pulls a corner gradient of the intersection back onto the two inputs.
std::pair<CornerGrad, CornerGrad> gumbel_intersection_backward(const GumbelBoxParams& a,
                                                               const GumbelBoxParams& b,
                                                               const CornerGrad& grad_out,
                                                               const ScoringConfig& cfg);

}  // namespace boxgnn
