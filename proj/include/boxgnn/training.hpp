#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "boxgnn/box.hpp"
#include "boxgnn/graph.hpp"
#include "boxgnn/model.hpp"
#include "boxgnn/objective.hpp"

namespace boxgnn {

/// A configuration value outside its allowed range. field() names the key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// The user has interacted with every item, so no negative exists.
class UnsampleableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Eigen::Index dim = 64;
  std::size_t layers = 3;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-3;
  double lambda = 1e-5;
  double dropout = 0.1;
  double beta = 0.2;
  bool gumbel = true;
  std::size_t epochs = 500;
  std::size_t eval_every = 5;
  std::size_t patience = 10;
  std::uint64_t seed = 2024;

  void validate() const;
  ScoringConfig scoring() const;
};

/// Per-user sorted sets of training-positive items.
class UserItemSets {
 public:
  UserItemSets() = default;
  UserItemSets(std::size_t users, std::size_t items) : items_(items), sets_(users) {}
  static UserItemSets from_pairs(std::size_t users, std::size_t items, std::span<const Edge> pairs);

  std::size_t num_users() const { return sets_.size(); }
  std::size_t num_items() const { return items_; }
  std::span<const std::uint32_t> items_of(std::uint32_t user) const { return sets_[user]; }
  bool contains(std::uint32_t user, std::uint32_t item) const;
  /// All (user, item) pairs in user-major, item-ascending order.
  std::vector<Edge> pairs() const;

 private:
  std::size_t items_ = 0;
  std::vector<std::vector<std::uint32_t>> sets_;
};

/// Xavier-uniform tables, bound sqrt(6 / (d + d)). Attention weights use the
/// same bound; attention biases start at zero. Throws std::invalid_argument on
/// a zero count or dimension.
ModelParams init_params(const NodeCounts& counts, const TrainConfig& cfg, std::mt19937_64& rng);

/// Uniform draw over items outside the user's positive set.
std::uint32_t sample_negative(std::uint32_t user, const UserItemSets& positives, std::mt19937_64& rng);

/// Adam with bias-corrected moments over every parameter of a ModelParams.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamOptimizer(const ModelParams& like, double learning_rate);
  void step(ModelParams& params, const ModelParams& grad);
  std::size_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  std::size_t steps_ = 0;
  ModelParams m_, v_;
};

/// Loss of one batch under a graph view, with its gradient added into `grad`.
/// Used by train_epoch; exposed for gradient checking.
double batch_loss_and_grad(const ModelParams& params, const GraphView& view, std::span<const Triple> batch,
                           const TrainConfig& cfg, ModelParams* grad);

struct EpochStats {
  double mean_loss = 0.0;  // mean over batches of the per-triple batch loss
  std::size_t batches = 0;
};

/// One pass over the shuffled training positives with fresh negatives and a
/// new dropout view per batch. Throws std::invalid_argument when empty.
EpochStats train_epoch(ModelParams& params, const CollaborativeTagGraph& graph, const UserItemSets& positives,
                       const TrainConfig& cfg, AdamOptimizer& optimizer, std::mt19937_64& rng);

struct StopDecision {
  bool stop = false;
  bool new_best = false;
};

/// Stops after `patience` consecutive evaluations without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  StopDecision step(double metric);
  double best() const { return best_; }
  std::size_t stalled() const { return stalled_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t stalled_ = 0;
  bool any_ = false;
};

}  // namespace boxgnn
