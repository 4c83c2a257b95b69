#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "boxgnn/box.hpp"
#include "boxgnn/model.hpp"

namespace boxgnn {

/// Floor applied to each per-dimension overlap in hard_volume_score.
inline constexpr double kHardVolumeFloor = 1e-12;

/// log Vol of the Gumbel intersection of the two boxes. Symmetric.
double score(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg);

/// sum_k log max(min(Z_u, Z_i) - max(z_u, z_i), eps) using hard corners.
double hard_volume_score(const BoxEmbedding& u_box, const BoxEmbedding& i_box);

/// score() or hard_volume_score() depending on cfg.mode.
double pair_score(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg);

struct PairGrad {
  Vector u_center, u_offset;
  Vector i_center, i_offset;
};

/// Gradient of pair_score() w.r.t. both boxes (offsets taken as given, i.e.
/// already non-negative).
PairGrad pair_score_grad(const BoxEmbedding& u_box, const BoxEmbedding& i_box, const ScoringConfig& cfg);

struct Triple {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  std::uint32_t negative = 0;
};

using TripleBatch = std::vector<Triple>;

/// Squared norm of the regularized parameters for one batch: the layer-0
/// center and raw-offset rows of every (user, positive, negative) in the batch
/// plus all attention parameters, divided by the batch size.
double batch_regularizer(const ModelParams& params, std::span<const Triple> batch);

/// Adds lambda * d batch_regularizer / d params into `grad`.
void batch_regularizer_grad(const ModelParams& params, std::span<const Triple> batch, double lambda,
                            ModelParams& grad);

/// sum_n softplus(-(pos_n - neg_n)) + lambda * batch_regularizer(params, batch).
/// Throws std::invalid_argument on misaligned inputs or negative lambda.
double bpr_loss(std::span<const Triple> batch, std::span<const double> scores_pos,
                std::span<const double> scores_neg, const ModelParams& params, double lambda);

/// The ranking part of bpr_loss alone: sum_n softplus(-(pos_n - neg_n)).
double bpr_ranking_loss(std::span<const double> scores_pos, std::span<const double> scores_neg);

/// d bpr_ranking_loss / d (pos_n - neg_n) = -sigmoid(-(pos_n - neg_n)).
double bpr_margin_grad(double margin);

}  // namespace boxgnn
