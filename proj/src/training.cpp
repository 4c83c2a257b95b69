#include "boxgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "boxgnn/propagation.hpp"

namespace boxgnn {

void TrainConfig::validate() const {
  if (dim <= 0) throw ConfigError("dim", "must be positive");
  if (layers > 16) throw ConfigError("layers", "must be at most 16");
  if (batch_size == 0) throw ConfigError("batch-size", "must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("lr", "must be non-negative");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("reg", "must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "must be positive");
  if (eval_every == 0) throw ConfigError("eval-every", "must be at least 1");
  if (patience == 0) throw ConfigError("patience", "must be at least 1");
}

ScoringConfig TrainConfig::scoring() const {
  ScoringConfig s;
  s.beta = beta;
  s.mode = gumbel ? VolumeMode::kGumbel : VolumeMode::kHard;
  return s;
}

UserItemSets UserItemSets::from_pairs(std::size_t users, std::size_t items, std::span<const Edge> pairs) {
  UserItemSets s(users, items);
  for (const auto& [u, i] : pairs) {
    if (u >= users || i >= items) throw std::invalid_argument("UserItemSets: pair out of range");
    s.sets_[u].push_back(i);
  }
  for (auto& v : s.sets_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return s;
}

bool UserItemSets::contains(std::uint32_t user, std::uint32_t item) const {
  const auto& v = sets_[user];
  return std::binary_search(v.begin(), v.end(), item);
}

std::vector<Edge> UserItemSets::pairs() const {
  std::vector<Edge> out;
  for (std::uint32_t u = 0; u < sets_.size(); ++u) {
    for (auto i : sets_[u]) out.emplace_back(u, i);
  }
  return out;
}

ModelParams init_params(const NodeCounts& counts, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (counts.users == 0 || counts.items == 0 || counts.tags == 0) {
    throw std::invalid_argument("init_params: user, item and tag counts must all be positive");
  }
  if (cfg.dim <= 0) throw std::invalid_argument("init_params: dimension must be positive");
  ModelParams p = ModelParams::zeros(counts, cfg.dim, cfg.layers);
  const double bound = std::sqrt(6.0 / static_cast<double>(cfg.dim + cfg.dim));
  std::uniform_real_distribution<double> xavier(-bound, bound);
  for (RowMatrix* table : p.tables()) {
    for (Eigen::Index r = 0; r < table->rows(); ++r) {
      for (Eigen::Index c = 0; c < table->cols(); ++c) (*table)(r, c) = xavier(rng);
    }
  }
  return p;
}

std::uint32_t sample_negative(std::uint32_t user, const UserItemSets& positives, std::mt19937_64& rng) {
  const std::size_t n_items = positives.num_items();
  const auto mine = positives.items_of(user);
  if (mine.size() >= n_items) {
    throw UnsampleableError("user " + std::to_string(user) + " has interacted with every item");
  }
  if (mine.size() * 2 <= n_items) {
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n_items - 1));
    for (;;) {
      const std::uint32_t i = pick(rng);
      if (!std::binary_search(mine.begin(), mine.end(), i)) return i;
    }
  }
  // Dense users: draw the rank among the complement and walk the sorted set.
  std::uniform_int_distribution<std::size_t> pick(0, n_items - mine.size() - 1);
  std::size_t rank = pick(rng);
  std::uint32_t item = 0;
  std::size_t cursor = 0;
  for (;; ++item) {
    if (cursor < mine.size() && mine[cursor] == item) {
      ++cursor;
      continue;
    }
    if (rank == 0) return item;
    --rank;
  }
}

AdamOptimizer::AdamOptimizer(const ModelParams& like, double learning_rate)
    : lr_(learning_rate),
      m_(ModelParams::zeros(like.counts(), like.dim(), like.layers())),
      v_(ModelParams::zeros(like.counts(), like.dim(), like.layers())) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grad) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + kEpsilon);
  };
  auto pt = params.tables();
  const auto gt = grad.tables();
  auto mt = m_.tables();
  auto vt = v_.tables();
  for (std::size_t k = 0; k < pt.size(); ++k) update(*pt[k], *gt[k], *mt[k], *vt[k]);
  auto pv = params.vectors();
  const auto gv = grad.vectors();
  auto mv = m_.vectors();
  auto vv = v_.vectors();
  for (std::size_t k = 0; k < pv.size(); ++k) update(*pv[k], *gv[k], *mv[k], *vv[k]);
}

double batch_loss_and_grad(const ModelParams& params, const GraphView& view, std::span<const Triple> batch,
                           const TrainConfig& cfg, ModelParams* grad) {
  const ScoringConfig scoring = cfg.scoring();
  PropagationTape tape;
  const LayerState state = propagate(params, view, cfg.layers, grad ? &tape : nullptr);
  const auto& g = view.graph();

  RowMatrix g_center, g_offset;
  if (grad) {
    g_center = RowMatrix::Zero(state.center.rows(), state.center.cols());
    g_offset = RowMatrix::Zero(state.offset.rows(), state.offset.cols());
  }
  std::vector<double> pos(batch.size()), neg(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Triple& t = batch[n];
    const NodeId u = g.user_node(t.user), ip = g.item_node(t.positive), in = g.item_node(t.negative);
    const BoxEmbedding ub = state.box(u), pb = state.box(ip), nb = state.box(in);
    pos[n] = pair_score(ub, pb, scoring);
    neg[n] = pair_score(ub, nb, scoring);
    if (!grad) continue;
    const double gm = bpr_margin_grad(pos[n] - neg[n]);
    const PairGrad gp = pair_score_grad(ub, pb, scoring);
    const PairGrad gn = pair_score_grad(ub, nb, scoring);
    g_center.row(u) += gm * (gp.u_center - gn.u_center).transpose();
    g_offset.row(u) += gm * (gp.u_offset - gn.u_offset).transpose();
    g_center.row(ip) += gm * gp.i_center.transpose();
    g_offset.row(ip) += gm * gp.i_offset.transpose();
    g_center.row(in) -= gm * gn.i_center.transpose();
    g_offset.row(in) -= gm * gn.i_offset.transpose();
  }
  if (grad) {
    propagate_backward(params, view, tape, g_center, g_offset, *grad);
    batch_regularizer_grad(params, batch, cfg.lambda, *grad);
  }
  return bpr_loss(batch, pos, neg, params, cfg.lambda);
}

EpochStats train_epoch(ModelParams& params, const CollaborativeTagGraph& graph, const UserItemSets& positives,
                       const TrainConfig& cfg, AdamOptimizer& optimizer, std::mt19937_64& rng) {
  cfg.validate();
  std::vector<Edge> pairs = positives.pairs();
  if (pairs.empty()) throw std::invalid_argument("train_epoch: empty training set");
  // A user who interacted with every item has no negative to rank against.
  std::erase_if(pairs, [&](const Edge& e) { return positives.items_of(e.first).size() >= positives.num_items(); });
  if (pairs.empty()) throw std::invalid_argument("train_epoch: no user has a sampleable negative");
  std::shuffle(pairs.begin(), pairs.end(), rng);

  EpochStats stats;
  double loss_sum = 0.0;
  TripleBatch batch;
  ModelParams grad = ModelParams::zeros(params.counts(), params.dim(), params.layers());
  for (std::size_t begin = 0; begin < pairs.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(pairs.size(), begin + cfg.batch_size);
    batch.clear();
    for (std::size_t n = begin; n < end; ++n) {
      const auto [u, i] = pairs[n];
      batch.push_back(Triple{u, i, sample_negative(u, positives, rng)});
    }
    const GraphView view = dropout_view(graph, cfg.dropout, rng);
    for (RowMatrix* t : grad.tables()) t->setZero();
    for (Vector* v : grad.vectors()) v->setZero();
    const double loss = batch_loss_and_grad(params, view, batch, cfg, &grad);
    optimizer.step(params, grad);
    loss_sum += loss / static_cast<double>(batch.size());
    ++stats.batches;
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.batches);
  return stats;
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_(-std::numeric_limits<double>::infinity()) {
  if (patience_ == 0) throw std::invalid_argument("EarlyStopping: patience must be at least 1");
}

StopDecision EarlyStopping::step(double metric) {
  StopDecision d;
  if (!any_ || metric > best_) {
    any_ = true;
    best_ = metric;
    stalled_ = 0;
    d.new_best = true;
    return d;
  }
  ++stalled_;
  d.stop = stalled_ >= patience_;
  return d;
}

}  // namespace boxgnn
