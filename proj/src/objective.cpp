#include "boxgnn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace boxgnn {

namespace {

void require_pair(const BoxEmbedding& a, const BoxEmbedding& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("score: box dimension mismatch");
}

}  // namespace

double score(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg) {
  require_pair(u_box, i_box);
  return log_volume(gumbel_intersection(gumbel_corners(u_box), gumbel_corners(i_box), cfg), cfg);
}

double hard_volume_score(const BoxEmbedding& u_box, const BoxEmbedding& i_box) {
  require_pair(u_box, i_box);
  double total = 0.0;
  for (Eigen::Index k = 0; k < u_box.dim(); ++k) {
    const double lo = std::max(u_box.center[k] - u_box.offset[k], i_box.center[k] - i_box.offset[k]);
    const double hi = std::min(u_box.center[k] + u_box.offset[k], i_box.center[k] + i_box.offset[k]);
    total += std::log(std::max(hi - lo, kHardVolumeFloor));
  }
  return total;
}

double pair_score(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg) {
  return cfg.mode == VolumeMode::kGumbel ? score(u_box, i_box, cfg) : hard_volume_score(u_box, i_box);
}

PairGrad pair_score_grad(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg) {
  require_pair(u_box, i_box);
  const Eigen::Index d = u_box.dim();
  PairGrad g{Vector::Zero(d), Vector::Zero(d), Vector::Zero(d), Vector::Zero(d)};

  if (cfg.mode == VolumeMode::kHard) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double zu = u_box.center[k] - u_box.offset[k], zi = i_box.center[k] - i_box.offset[k];
      const double Zu = u_box.center[k] + u_box.offset[k], Zi = i_box.center[k] + i_box.offset[k];
      const double overlap = std::min(Zu, Zi) - std::max(zu, zi);
      if (overlap <= kHardVolumeFloor) continue;
      const double w = 1.0 / overlap;
      // d overlap / d Z_selected = 1, / d z_selected = -1
      if (Zu <= Zi) {
        g.u_center[k] += w;
        g.u_offset[k] += w;
      } else {
        g.i_center[k] += w;
        g.i_offset[k] += w;
      }
      if (zu >= zi) {
        g.u_center[k] -= w;
        g.u_offset[k] += w;
      } else {
        g.i_center[k] -= w;
        g.i_offset[k] += w;
      }
    }
    return g;
  }

  const GumbelBoxParams cu = gumbel_corners(u_box);
  const GumbelBoxParams ci = gumbel_corners(i_box);
  const GumbelBoxParams joint = gumbel_intersection(cu, ci, cfg);
  const CornerGrad top = log_volume_grad(joint, cfg);
  const auto [gu, gi] = gumbel_intersection_backward(cu, ci, top, cfg);
  // mu_min = c - o, mu_max = c + o
  g.u_center = gu.mu_min + gu.mu_max;
  g.u_offset = gu.mu_max - gu.mu_min;
  g.i_center = gi.mu_min + gi.mu_max;
  g.i_offset = gi.mu_max - gi.mu_min;
  return g;
}

double batch_regularizer(const ModelParams& params, std::span<const Triple> batch) {
  if (batch.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : batch) {
    s += params.user_center.row(t.user).squaredNorm() + params.user_offset.row(t.user).squaredNorm();
    s += params.item_center.row(t.positive).squaredNorm() + params.item_offset.row(t.positive).squaredNorm();
    s += params.item_center.row(t.negative).squaredNorm() + params.item_offset.row(t.negative).squaredNorm();
  }
  for (const auto& a : params.attention) s += a.weight.squaredNorm() + a.bias.squaredNorm();
  return s / static_cast<double>(batch.size());
}

void batch_regularizer_grad(const ModelParams& params, std::span<const Triple> batch, double lambda,
                            ModelParams& grad) {
  if (batch.empty() || lambda == 0.0) return;
  const double scale = 2.0 * lambda / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    grad.user_center.row(t.user) += scale * params.user_center.row(t.user);
    grad.user_offset.row(t.user) += scale * params.user_offset.row(t.user);
    grad.item_center.row(t.positive) += scale * params.item_center.row(t.positive);
    grad.item_offset.row(t.positive) += scale * params.item_offset.row(t.positive);
    grad.item_center.row(t.negative) += scale * params.item_center.row(t.negative);
    grad.item_offset.row(t.negative) += scale * params.item_offset.row(t.negative);
  }
  for (std::size_t l = 0; l < params.attention.size(); ++l) {
    grad.attention[l].weight += scale * params.attention[l].weight;
    grad.attention[l].bias += scale * params.attention[l].bias;
  }
}

double bpr_ranking_loss(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.size() != scores_neg.size()) throw std::invalid_argument("bpr_loss: score lists differ in length");
  double total = 0.0;
  for (std::size_t n = 0; n < scores_pos.size(); ++n) {
    total += numeric::softplus(-(scores_pos[n] - scores_neg[n]));
  }
  return total;
}

double bpr_loss(std::span<const Triple> batch, std::span<const double> scores_pos,
                std::span<const double> scores_neg, const ModelParams& params, double lambda) {
  if (batch.size() != scores_pos.size() || batch.size() != scores_neg.size()) {
    throw std::invalid_argument("bpr_loss: batch has " + std::to_string(batch.size()) + " triples but " +
                                std::to_string(scores_pos.size()) + " positive and " +
                                std::to_string(scores_neg.size()) + " negative scores");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("bpr_loss: lambda must be non-negative");
  double total = bpr_ranking_loss(scores_pos, scores_neg);
  if (lambda > 0.0) total += lambda * batch_regularizer(params, batch);
  return total;
}

double bpr_margin_grad(double margin) { return -numeric::sigmoid(-margin); }

}  // namespace boxgnn
