#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "boxgnn/box.hpp"
#include "boxgnn/graph.hpp"
#include "boxgnn/model.hpp"
#include "boxgnn/propagation.hpp"
#include "boxgnn/training.hpp"

namespace boxgnn {

/// Item indices outside `masked` (sorted) ordered by descending score, ties
/// by ascending index. Only the first `keep` positions are sorted.
std::vector<std::uint32_t> rank_scores(std::span<const double> scores, std::span<const std::uint32_t> masked,
                                       std::size_t keep);

/// Scores `user` against every item of a propagated state, drops the user's
/// training positives and returns the remaining items by descending score
/// (ties: lower item index first). `scores`, when given, receives the score of
/// every item in the catalog (masked ones included).
std::vector<std::uint32_t> rank_all(std::uint32_t user, const LayerState& state, const NodeCounts& counts,
                                    const UserItemSets& train_positives, const ScoringConfig& cfg,
                                    std::vector<double>* scores = nullptr);

/// |top-K ∩ relevant| / |relevant|. nullopt when `relevant` is empty.
/// `relevant` must be sorted. Throws std::invalid_argument for K = 0.
std::optional<double> recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant,
                                  std::size_t k);

/// Binary-relevance NDCG with 1/log2(p + 1) discounts. nullopt when `relevant`
/// is empty.
std::optional<double> ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant,
                                std::size_t k);

struct UserMetrics {
  std::uint32_t user = 0;
  std::vector<double> recall;  // aligned with RankingResult::ks
  std::vector<double> ndcg;
  std::vector<std::uint32_t> top;  // top max(ks) items
};

struct RankingResult {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // macro averages, aligned with ks
  std::vector<double> ndcg;
  std::size_t users_evaluated = 0;
  std::vector<UserMetrics> per_user;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

struct EvalOptions {
  std::vector<std::size_t> ks{10, 20};
  std::size_t layers = 0;
  ScoringConfig scoring;
};

/// Macro-averaged metrics from a state already propagated without dropout.
/// A user's relevant set is `relevant` minus their training positives; users
/// left with no relevant item are skipped.
RankingResult evaluate_state(const LayerState& state, const NodeCounts& counts, const UserItemSets& train_positives,
                             const UserItemSets& relevant, const EvalOptions& options);

/// Propagates once over the full training graph, then evaluate_state().
RankingResult evaluate(const ModelParams& params, const CollaborativeTagGraph& train_graph,
                       const UserItemSets& train_positives, const UserItemSets& relevant, const EvalOptions& options);

/// Structured report: split label, macro metrics, evaluated-user count, the
/// effective config and, if requested, per-user rows.
nlohmann::json metrics_report(const RankingResult& result, const std::string& split, const nlohmann::json& config,
                              bool include_per_user);

}  // namespace boxgnn
