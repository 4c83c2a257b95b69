#include "boxgnn/box.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace boxgnn {

namespace {

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

template <typename Box>
void require_uniform(std::span<const Box> boxes, const AttentionParams& attn, const char* what) {
  if (boxes.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  const auto d = attn.dim();
  for (const auto& b : boxes) {
    if constexpr (std::is_same_v<Box, BoxEmbedding>) {
      require_same_dim(b.dim(), d, what);
    } else {
      require_same_dim(b.size(), d, what);
    }
  }
}

RowMatrix stack_centers(std::span<const BoxEmbedding> boxes) {
  RowMatrix m(static_cast<Eigen::Index>(boxes.size()), boxes.front().dim());
  for (std::size_t k = 0; k < boxes.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = boxes[k].center.transpose();
  return m;
}

RowMatrix stack_offsets(std::span<const BoxEmbedding> boxes) {
  RowMatrix m(static_cast<Eigen::Index>(boxes.size()), boxes.front().dim());
  for (std::size_t k = 0; k < boxes.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = boxes[k].offset.transpose();
  return m;
}

RowMatrix logits_of(const RowMatrix& centers, const AttentionParams& attn) {
  RowMatrix logits = centers * attn.weight.transpose();
  logits.rowwise() += attn.bias.transpose();
  return logits;
}

BoxEmbedding aggregate(std::span<const BoxEmbedding> boxes, const AttentionParams& attn,
                       OffsetRule rule, const char* what) {
  require_uniform(boxes, attn, what);
  const RowMatrix centers = stack_centers(boxes);
  BoxEmbedding out;
  out.center = detail::attend(logits_of(centers, attn), centers);
  out.offset = detail::select_offsets(stack_offsets(boxes), rule);
  return out;
}

}  // namespace

BoxEmbedding::BoxEmbedding(Vector c, Vector o) : center(std::move(c)), offset(std::move(o)) {
  require_same_dim(center.size(), offset.size(), "BoxEmbedding");
  if ((offset.array() < 0.0).any()) throw std::invalid_argument("BoxEmbedding: negative offset");
}

AttentionParams AttentionParams::zeros(Eigen::Index dim) {
  return AttentionParams{RowMatrix::Zero(dim, dim), Vector::Zero(dim)};
}

void ScoringConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta must be positive, got " + std::to_string(beta));
  }
}

namespace numeric {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_softplus(double x) {
  // softplus(x) = e^x (1 - e^x / 2 + O(e^2x)) for very negative x.
  if (x < -30.0) return x - 0.5 * std::exp(x);
  return std::log(softplus(x));
}

double log_softplus_grad(double x) {
  if (x < -30.0) return 1.0 - 0.5 * std::exp(x);
  return sigmoid(x) / softplus(x);
}

double smooth_max(double a, double b, double beta) {
  return std::max(a, b) + beta * std::log1p(std::exp(-std::abs(a - b) / beta));
}

double smooth_min(double a, double b, double beta) {
  return std::min(a, b) - beta * std::log1p(std::exp(-std::abs(a - b) / beta));
}

}  // namespace numeric

namespace detail {

Vector attend(const Eigen::Ref<const RowMatrix>& logits, const Eigen::Ref<const RowMatrix>& centers) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index d = logits.cols();
  Vector out(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double peak = logits.col(j).maxCoeff();
    double norm = 0.0, acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double w = std::exp(logits(k, j) - peak);
      norm += w;
      acc += w * centers(k, j);
    }
    out[j] = acc / norm;
  }
  return out;
}

void attend_backward(const Eigen::Ref<const RowMatrix>& logits,
                     const Eigen::Ref<const RowMatrix>& centers, const Vector& out,
                     const Vector& grad_out, Eigen::Ref<RowMatrix> grad_logits,
                     Eigen::Ref<RowMatrix> grad_centers) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index d = logits.cols();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double g = grad_out[j];
    if (g == 0.0) continue;
    const double peak = logits.col(j).maxCoeff();
    double norm = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) norm += std::exp(logits(k, j) - peak);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double w = std::exp(logits(k, j) - peak) / norm;
      grad_centers(k, j) += g * w;
      grad_logits(k, j) += g * w * (centers(k, j) - out[j]);
    }
  }
}

Vector select_offsets(const Eigen::Ref<const RowMatrix>& offsets, OffsetRule rule,
                      std::vector<int>* source) {
  const Eigen::Index n = offsets.rows();
  const Eigen::Index d = offsets.cols();
  Vector out = offsets.row(0).transpose();
  if (source) source->assign(static_cast<std::size_t>(d), 0);
  for (Eigen::Index k = 1; k < n; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = offsets(k, j);
      const bool better = rule == OffsetRule::kMin ? v < out[j] : v > out[j];
      if (better) {
        out[j] = v;
        if (source) (*source)[static_cast<std::size_t>(j)] = static_cast<int>(k);
      }
    }
  }
  return out;
}

}  // namespace detail

std::vector<Vector> attention_weights(std::span<const Vector> centers, const AttentionParams& attn) {
  require_uniform(centers, attn, "attention_weights");
  const auto n = static_cast<Eigen::Index>(centers.size());
  const Eigen::Index d = attn.dim();
  RowMatrix logits(n, d);
  for (Eigen::Index k = 0; k < n; ++k) logits.row(k) = attn.logits(centers[static_cast<std::size_t>(k)]).transpose();
  std::vector<Vector> weights(centers.size(), Vector(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    const double peak = logits.col(j).maxCoeff();
    double norm = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) norm += std::exp(logits(k, j) - peak);
    for (Eigen::Index k = 0; k < n; ++k) weights[static_cast<std::size_t>(k)][j] = std::exp(logits(k, j) - peak) / norm;
  }
  return weights;
}

BoxEmbedding intersect_boxes(std::span<const BoxEmbedding> boxes, const AttentionParams& attn) {
  return aggregate(boxes, attn, OffsetRule::kMin, "intersect_boxes");
}

BoxEmbedding union_boxes(std::span<const BoxEmbedding> boxes, const AttentionParams& attn) {
  return aggregate(boxes, attn, OffsetRule::kMax, "union_boxes");
}

AggregateGrad aggregate_backward(std::span<const BoxEmbedding> boxes, const AttentionParams& attn,
                                 OffsetRule rule, const Vector& grad_center,
                                 const Vector& grad_offset) {
  require_uniform(boxes, attn, "aggregate_backward");
  const auto n = static_cast<Eigen::Index>(boxes.size());
  const Eigen::Index d = attn.dim();
  const RowMatrix centers = stack_centers(boxes);
  const RowMatrix logits = logits_of(centers, attn);
  const Vector out = detail::attend(logits, centers);

  RowMatrix g_logits = RowMatrix::Zero(n, d);
  RowMatrix g_centers = RowMatrix::Zero(n, d);
  detail::attend_backward(logits, centers, out, grad_center, g_logits, g_centers);
  g_centers += g_logits * attn.weight;

  AggregateGrad grad;
  grad.weight = g_logits.transpose() * centers;
  grad.bias = g_logits.colwise().sum().transpose();
  grad.centers.resize(boxes.size());
  grad.offsets.assign(boxes.size(), Vector::Zero(d));
  for (Eigen::Index k = 0; k < n; ++k) grad.centers[static_cast<std::size_t>(k)] = g_centers.row(k).transpose();

  std::vector<int> source;
  detail::select_offsets(stack_offsets(boxes), rule, &source);
  for (Eigen::Index j = 0; j < d; ++j) {
    grad.offsets[static_cast<std::size_t>(source[static_cast<std::size_t>(j)])][j] += grad_offset[j];
  }
  return grad;
}

GumbelBoxParams gumbel_corners(const BoxEmbedding& box) {
  return GumbelBoxParams{box.center - box.offset, box.center + box.offset};
}

GumbelBoxParams gumbel_intersection(const GumbelBoxParams& a, const GumbelBoxParams& b,
                                    const ScoringConfig& cfg) {
  cfg.validate();
  require_same_dim(a.mu_min.size(), b.mu_min.size(), "gumbel_intersection");
  require_same_dim(a.mu_max.size(), b.mu_max.size(), "gumbel_intersection");
  const Eigen::Index d = a.mu_min.size();
  GumbelBoxParams out{Vector(d), Vector(d)};
  for (Eigen::Index k = 0; k < d; ++k) {
    out.mu_min[k] = numeric::smooth_max(a.mu_min[k], b.mu_min[k], cfg.beta);
    out.mu_max[k] = numeric::smooth_min(a.mu_max[k], b.mu_max[k], cfg.beta);
  }
  return out;
}

double log_volume(const GumbelBoxParams& corners, const ScoringConfig& cfg) {
  cfg.validate();
  require_same_dim(corners.mu_min.size(), corners.mu_max.size(), "log_volume");
  const double log_beta = std::log(cfg.beta);
  const double shift = 2.0 * cfg.euler_gamma;
  double total = 0.0;
  for (Eigen::Index k = 0; k < corners.mu_min.size(); ++k) {
    const double t = (corners.mu_max[k] - corners.mu_min[k]) / cfg.beta - shift;
    total += log_beta + numeric::log_softplus(t);
  }
  return total;
}

CornerGrad log_volume_grad(const GumbelBoxParams& corners, const ScoringConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = corners.mu_min.size();
  CornerGrad g{Vector(d), Vector(d)};
  const double shift = 2.0 * cfg.euler_gamma;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double t = (corners.mu_max[k] - corners.mu_min[k]) / cfg.beta - shift;
    const double dx = numeric::log_softplus_grad(t) / cfg.beta;
    g.mu_max[k] = dx;
    g.mu_min[k] = -dx;
  }
  return g;
}

std::pair<CornerGrad, CornerGrad> gumbel_intersection_backward(const GumbelBoxParams& a,
                                                               const GumbelBoxParams& b,
                                                               const CornerGrad& grad_out,
                                                               const ScoringConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = a.mu_min.size();
  CornerGrad ga{Vector(d), Vector(d)};
  CornerGrad gb{Vector(d), Vector(d)};
  for (Eigen::Index k = 0; k < d; ++k) {
    // d smooth_max / da = sigmoid((a - b) / beta); d smooth_min / da = sigmoid((b - a) / beta)
    const double wa_min = numeric::sigmoid((a.mu_min[k] - b.mu_min[k]) / cfg.beta);
    ga.mu_min[k] = grad_out.mu_min[k] * wa_min;
    gb.mu_min[k] = grad_out.mu_min[k] * numeric::sigmoid((b.mu_min[k] - a.mu_min[k]) / cfg.beta);
    const double wa_max = numeric::sigmoid((b.mu_max[k] - a.mu_max[k]) / cfg.beta);
    ga.mu_max[k] = grad_out.mu_max[k] * wa_max;
    gb.mu_max[k] = grad_out.mu_max[k] * numeric::sigmoid((a.mu_max[k] - b.mu_max[k]) / cfg.beta);
  }
  return {ga, gb};
}

}  // namespace boxgnn
