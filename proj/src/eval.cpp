#include "boxgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "boxgnn/objective.hpp"
#include "boxgnn/parallel.hpp"

namespace boxgnn {

namespace {

// Catalog corners of every item, laid out row-major (items x d).
struct ItemCorners {
  RowMatrix lo, hi;
};

ItemCorners item_corners(const LayerState& state, const NodeCounts& counts) {
  const auto nu = static_cast<Eigen::Index>(counts.users);
  const auto ni = static_cast<Eigen::Index>(counts.items);
  return {state.center.middleRows(nu, ni) - state.offset.middleRows(nu, ni),
          state.center.middleRows(nu, ni) + state.offset.middleRows(nu, ni)};
}

// Same value as pair_score(), evaluated on raw corner rows.
void score_catalog(const double* u_lo, const double* u_hi, const ItemCorners& items, const ScoringConfig& cfg,
                   std::vector<double>& out) {
  const Eigen::Index d = items.lo.cols();
  const Eigen::Index n = items.lo.rows();
  out.resize(static_cast<std::size_t>(n));
  const double beta = cfg.beta;
  const double log_beta = std::log(beta);
  const double shift = 2.0 * cfg.euler_gamma;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* lo = items.lo.row(i).data();
    const double* hi = items.hi.row(i).data();
    double total = 0.0;
    if (cfg.mode == VolumeMode::kGumbel) {
      for (Eigen::Index k = 0; k < d; ++k) {
        const double z = numeric::smooth_max(u_lo[k], lo[k], beta);
        const double Z = numeric::smooth_min(u_hi[k], hi[k], beta);
        total += log_beta + numeric::log_softplus((Z - z) / beta - shift);
      }
    } else {
      for (Eigen::Index k = 0; k < d; ++k) {
        const double overlap = std::min(u_hi[k], hi[k]) - std::max(u_lo[k], lo[k]);
        total += std::log(std::max(overlap, kHardVolumeFloor));
      }
    }
    out[static_cast<std::size_t>(i)] = total;
  }
}

}  // namespace

std::vector<std::uint32_t> rank_scores(std::span<const double> scores, std::span<const std::uint32_t> masked,
                                       std::size_t keep) {
  std::vector<std::uint32_t> order;
  order.reserve(scores.size());
  std::size_t cursor = 0;
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    if (cursor < masked.size() && masked[cursor] == i) {
      ++cursor;
      continue;
    }
    order.push_back(i);
  }
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  keep = std::min(keep, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
  return order;
}

std::vector<std::uint32_t> rank_all(std::uint32_t user, const LayerState& state, const NodeCounts& counts,
                                    const UserItemSets& train_positives, const ScoringConfig& cfg,
                                    std::vector<double>* scores) {
  cfg.validate();
  const ItemCorners items = item_corners(state, counts);
  const Vector lo = (state.center.row(user) - state.offset.row(user)).transpose();
  const Vector hi = (state.center.row(user) + state.offset.row(user)).transpose();
  std::vector<double> local;
  std::vector<double>& out = scores ? *scores : local;
  score_catalog(lo.data(), hi.data(), items, cfg, out);
  return rank_scores(out, train_positives.items_of(user), out.size());
}

std::optional<double> recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant,
                                  std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: K must be at least 1");
  if (relevant.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[p])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

std::optional<double> ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> relevant,
                                std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: K must be at least 1");
  if (relevant.empty()) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, ranked.size()); ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t p = 0; p < std::min(k, relevant.size()); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

double RankingResult::recall_at(std::size_t k) const {
  for (std::size_t n = 0; n < ks.size(); ++n) {
    if (ks[n] == k) return recall[n];
  }
  throw std::out_of_range("no Recall@" + std::to_string(k) + " in result");
}

double RankingResult::ndcg_at(std::size_t k) const {
  for (std::size_t n = 0; n < ks.size(); ++n) {
    if (ks[n] == k) return ndcg[n];
  }
  throw std::out_of_range("no NDCG@" + std::to_string(k) + " in result");
}

RankingResult evaluate_state(const LayerState& state, const NodeCounts& counts, const UserItemSets& train_positives,
                             const UserItemSets& relevant, const EvalOptions& options) {
  options.scoring.validate();
  if (options.ks.empty()) throw std::invalid_argument("evaluate: no cutoffs requested");
  const std::size_t max_k = *std::max_element(options.ks.begin(), options.ks.end());
  const ItemCorners items = item_corners(state, counts);

  // Held-out pairs the user already has in training are masked from the
  // ranking, so they cannot count as relevant either.
  std::vector<std::vector<std::uint32_t>> held_out(counts.users);
  std::vector<std::uint32_t> users;
  for (std::uint32_t u = 0; u < counts.users; ++u) {
    const auto rel = relevant.items_of(u);
    const auto train = train_positives.items_of(u);
    std::set_difference(rel.begin(), rel.end(), train.begin(), train.end(), std::back_inserter(held_out[u]));
    if (!held_out[u].empty()) users.push_back(u);
  }

  std::vector<UserMetrics> rows(users.size());
  parallel::parallel_for(users.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores;
    for (std::size_t n = begin; n < end; ++n) {
      const std::uint32_t u = users[n];
      const Vector lo = (state.center.row(u) - state.offset.row(u)).transpose();
      const Vector hi = (state.center.row(u) + state.offset.row(u)).transpose();
      score_catalog(lo.data(), hi.data(), items, options.scoring, scores);
      auto order = rank_scores(scores, train_positives.items_of(u), max_k);
      order.resize(std::min(order.size(), max_k));
      UserMetrics& m = rows[n];
      m.user = u;
      for (std::size_t k : options.ks) {
        m.recall.push_back(*recall_at_k(order, held_out[u], k));
        m.ndcg.push_back(*ndcg_at_k(order, held_out[u], k));
      }
      m.top = std::move(order);
    }
  });

  RankingResult result;
  result.ks = options.ks;
  result.recall.assign(options.ks.size(), 0.0);
  result.ndcg.assign(options.ks.size(), 0.0);
  result.users_evaluated = rows.size();
  for (const auto& m : rows) {
    for (std::size_t n = 0; n < options.ks.size(); ++n) {
      result.recall[n] += m.recall[n];
      result.ndcg[n] += m.ndcg[n];
    }
  }
  if (!rows.empty()) {
    for (std::size_t n = 0; n < options.ks.size(); ++n) {
      result.recall[n] /= static_cast<double>(rows.size());
      result.ndcg[n] /= static_cast<double>(rows.size());
    }
  }
  result.per_user = std::move(rows);
  return result;
}

RankingResult evaluate(const ModelParams& params, const CollaborativeTagGraph& train_graph,
                       const UserItemSets& train_positives, const UserItemSets& relevant, const EvalOptions& options) {
  const LayerState state = propagate(params, GraphView(train_graph), options.layers);
  return evaluate_state(state, params.counts(), train_positives, relevant, options);
}

nlohmann::json metrics_report(const RankingResult& result, const std::string& split, const nlohmann::json& config,
                              bool include_per_user) {
  nlohmann::json j;
  j["split"] = split;
  j["users_evaluated"] = result.users_evaluated;
  j["config"] = config;
  nlohmann::json metrics = nlohmann::json::object();
  for (std::size_t n = 0; n < result.ks.size(); ++n) {
    metrics["recall@" + std::to_string(result.ks[n])] = result.recall[n];
    metrics["ndcg@" + std::to_string(result.ks[n])] = result.ndcg[n];
  }
  j["metrics"] = metrics;
  if (include_per_user) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : result.per_user) {
      rows.push_back({{"user", m.user}, {"recall", m.recall}, {"ndcg", m.ndcg}, {"top", m.top}});
    }
    j["per_user"] = rows;
  }
  return j;
}

}  // namespace boxgnn
