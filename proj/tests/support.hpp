#pragma once

// Shared fixtures for the unit and acceptance suites: random boxes and
// parameter sets, small random graphs, toy/planted datasets and a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "boxgnn/box.hpp"
#include "boxgnn/graph.hpp"
#include "boxgnn/model.hpp"
#include "boxgnn/objective.hpp"
#include "boxgnn/propagation.hpp"
#include "boxgnn/training.hpp"

namespace testing {

using namespace boxgnn;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index d, double lo, double hi) {
  Vector v(d);
  for (Eigen::Index k = 0; k < d; ++k) v[k] = uniform(rng, lo, hi);
  return v;
}

inline BoxEmbedding random_box(std::mt19937_64& rng, Eigen::Index d, double center_scale = 2.0,
                               double max_offset = 2.0) {
  return BoxEmbedding(random_vector(rng, d, -center_scale, center_scale), random_vector(rng, d, 0.0, max_offset));
}

inline AttentionParams random_attention(std::mt19937_64& rng, Eigen::Index d, double scale = 1.0) {
  AttentionParams a = AttentionParams::zeros(d);
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) a.weight(r, c) = uniform(rng, -scale, scale);
    a.bias[r] = uniform(rng, -scale, scale);
  }
  return a;
}

/// Every table and vector entry, in a fixed order, as mutable pointers.
inline std::vector<double*> scalars(ModelParams& p) {
  std::vector<double*> out;
  for (RowMatrix* t : p.tables()) {
    for (Eigen::Index n = 0; n < t->size(); ++n) out.push_back(t->data() + n);
  }
  for (Vector* v : p.vectors()) {
    for (Eigen::Index n = 0; n < v->size(); ++n) out.push_back(v->data() + n);
  }
  return out;
}

/// Random parameters with raw offsets bounded away from zero (|raw| >= min_abs)
/// so a finite-difference step never crosses the abs() kink.
inline ModelParams random_params(std::mt19937_64& rng, const NodeCounts& counts, Eigen::Index d, std::size_t layers,
                                 double min_abs = 0.05) {
  ModelParams p = ModelParams::zeros(counts, d, layers);
  for (RowMatrix* t : {&p.user_center, &p.item_center, &p.tag_center}) {
    for (Eigen::Index n = 0; n < t->size(); ++n) t->data()[n] = uniform(rng, -1.0, 1.0);
  }
  for (RowMatrix* t : {&p.user_offset, &p.item_offset, &p.tag_offset}) {
    for (Eigen::Index n = 0; n < t->size(); ++n) {
      const double mag = uniform(rng, min_abs, 1.0);
      t->data()[n] = rng() % 2 ? mag : -mag;
    }
  }
  for (auto& a : p.attention) a = random_attention(rng, d, 0.8);
  return p;
}

/// Random assignments over the given counts, covering every user at least once.
inline std::vector<Assignment> random_assignments(std::mt19937_64& rng, const NodeCounts& c, std::size_t n) {
  std::vector<Assignment> out;
  for (std::uint32_t u = 0; u < c.users; ++u) {
    out.push_back({u, static_cast<std::uint32_t>(pick(rng, c.tags)), static_cast<std::uint32_t>(pick(rng, c.items))});
  }
  while (out.size() < n) {
    out.push_back({static_cast<std::uint32_t>(pick(rng, c.users)), static_cast<std::uint32_t>(pick(rng, c.tags)),
                   static_cast<std::uint32_t>(pick(rng, c.items))});
  }
  return out;
}

inline std::vector<Edge> user_item_pairs(const std::vector<Assignment>& a) {
  std::vector<Edge> e;
  for (const auto& x : a) e.emplace_back(x.user, x.item);
  return e;
}

// Brute-force reference aggregation for one node of a state, written directly
// from the offset rules and a per-dimension exp-normalize softmax.
inline BoxEmbedding reference_aggregate(NodeId v, const LayerState& s, const GraphView& view,
                                        const AttentionParams& attn) {
  const auto& g = view.graph();
  const auto nbrs = view.neighbors(v);
  if (nbrs.empty()) return s.box(v);
  const Eigen::Index d = s.center.cols();
  Vector center = Vector::Zero(d), offset(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double mx = -INFINITY;
    std::vector<double> logit;
    for (NodeId n : nbrs) {
      double z = attn.bias[k];
      for (Eigen::Index j = 0; j < d; ++j) z += attn.weight(k, j) * s.center(n, j);
      logit.push_back(z);
      mx = std::max(mx, z);
    }
    double denom = 0.0;
    for (double z : logit) denom += std::exp(z - mx);
    for (std::size_t n = 0; n < nbrs.size(); ++n) center[k] += std::exp(logit[n] - mx) / denom * s.center(nbrs[n], k);

    double all_min = INFINITY, all_max = -INFINITY, item_min = INFINITY, tag_max = -INFINITY;
    bool any_item = false, any_tag = false;
    for (NodeId n : nbrs) {
      const double o = s.offset(n, k);
      all_min = std::min(all_min, o);
      all_max = std::max(all_max, o);
      if (g.kind(n) == NodeKind::kItem) {
        any_item = true;
        item_min = std::min(item_min, o);
      }
      if (g.kind(n) == NodeKind::kTag) {
        any_tag = true;
        tag_max = std::max(tag_max, o);
      }
    }
    switch (g.kind(v)) {
      case NodeKind::kUser:
        offset[k] = any_item && any_tag ? std::max(item_min, tag_max) : (any_item ? item_min : tag_max);
        break;
      case NodeKind::kTag: offset[k] = all_min; break;
      case NodeKind::kItem: offset[k] = all_max; break;
    }
  }
  return BoxEmbedding(center, offset);
}

struct GradCheck {
  bool valid = true;         // false when a perturbation switched a min/max winner
  double max_rel_error = 0;  // over all scalars
  double max_abs_grad = 0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// analytically-zero partials (e.g. attention biases, which cancel inside the
/// per-dimension softmax) from dividing round-off by zero. With losses of
/// order 1 and h = 1e-5 the central difference carries ~1e-10 of round-off,
/// so 1e-5 keeps that noise an order below a 1e-4 tolerance.
inline constexpr double kRelErrorFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
}

inline bool same_sources(const PropagationTape& a, const PropagationTape& b) {
  if (a.offset_source.size() != b.offset_source.size()) return false;
  for (std::size_t l = 0; l < a.offset_source.size(); ++l) {
    if (a.offset_source[l] != b.offset_source[l]) return false;
  }
  return true;
}

/// Central differences of batch_loss_and_grad over every scalar of `params`.
inline GradCheck check_batch_gradient(ModelParams params, const GraphView& view, const std::vector<Triple>& batch,
                                      const TrainConfig& cfg, double h = 1e-5) {
  GradCheck r;
  ModelParams analytic = ModelParams::zeros(params.counts(), params.dim(), params.layers());
  batch_loss_and_grad(params, view, batch, cfg, &analytic);
  PropagationTape base;
  propagate(params, view, cfg.layers, &base);

  const auto xs = scalars(params);
  const auto gs = scalars(analytic);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double saved = *xs[n];
    PropagationTape tp, tm;
    *xs[n] = saved + h;
    const double fp = batch_loss_and_grad(params, view, batch, cfg, nullptr);
    propagate(params, view, cfg.layers, &tp);
    *xs[n] = saved - h;
    const double fm = batch_loss_and_grad(params, view, batch, cfg, nullptr);
    propagate(params, view, cfg.layers, &tm);
    *xs[n] = saved;
    if (!same_sources(base, tp) || !same_sources(base, tm)) {
      r.valid = false;
      return r;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(*gs[n], numeric));
    r.max_abs_grad = std::max(r.max_abs_grad, std::abs(*gs[n]));
    ++r.checked;
  }
  return r;
}

/// A random gradient-check problem: graph of at most `max_nodes` nodes, a
/// batch of triples drawn from its user-item edges and an optional dropout mask.
struct GradProblem {
  CollaborativeTagGraph graph;
  std::vector<std::uint8_t> mask;
  std::vector<Triple> batch;
  ModelParams params;
  TrainConfig cfg;
};

inline GradProblem random_grad_problem(std::mt19937_64& rng, std::size_t layers, std::size_t max_nodes = 10) {
  GradProblem p;
  NodeCounts c;
  for (;;) {
    c = {1 + pick(rng, 3), 2 + pick(rng, 4), 1 + pick(rng, 3)};
    if (c.total() <= max_nodes) break;
  }
  const auto assignments = random_assignments(rng, c, c.users + pick(rng, 6));
  p.graph = build_ctg(assignments, c);
  const auto positives = UserItemSets::from_pairs(c.users, c.items, user_item_pairs(assignments));
  for (const auto& [u, i] : positives.pairs()) {
    if (positives.items_of(u).size() >= c.items) continue;
    p.batch.push_back({u, i, sample_negative(u, positives, rng)});
  }
  p.mask.assign(c.total(), 0);
  if (rng() % 3 == 0) p.mask[pick(rng, c.total())] = 1;
  p.cfg.dim = static_cast<Eigen::Index>(1 + pick(rng, 4));
  p.cfg.layers = layers;
  p.cfg.beta = std::vector<double>{0.2, 0.5, 1.0}[pick(rng, 3)];
  p.cfg.lambda = rng() % 2 ? 0.0 : 1e-2;
  p.params = random_params(rng, c, p.cfg.dim, layers);
  return p;
}

// Writes a HetRec-style file (header + user, item, tag, timestamp rows).
inline void write_hetrec(const std::filesystem::path& path,
                         const std::vector<std::tuple<std::string, std::string, std::string>>& rows) {
  std::ofstream out(path);
  out << "userID\tmovieID\ttagID\tdate_day\n";
  for (const auto& [u, i, t] : rows) out << u << '\t' << i << '\t' << t << "\t1\n";
}

/// Planted two-cluster folksonomy: user u, item i and tag t belong to cluster
/// (index mod 2). Each in-cluster (u, i) pair is present with probability
/// p_in and carries one in-cluster tag; cross-cluster pairs never appear.
inline std::vector<std::tuple<std::string, std::string, std::string>> planted_clusters(
    std::size_t users, std::size_t items, std::size_t tags, double p_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = u % 2; i < items; i += 2) {
      if (uniform(rng, 0.0, 1.0) >= p_in) continue;
      const std::size_t t = 2 * pick(rng, tags / 2) + u % 2;
      rows.emplace_back(std::to_string(u + 1), std::to_string(i + 1), std::to_string(t + 1));
    }
  }
  return rows;
}

}  // namespace testing
