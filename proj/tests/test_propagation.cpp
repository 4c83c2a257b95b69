#include <doctest.h>

#include "boxgnn/propagation.hpp"
#include "properties.hpp"

using namespace boxgnn;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

// A state whose boxes are set by hand; rows indexed by global node id.
LayerState hand_state(std::size_t nodes) {
  LayerState s;
  s.center = RowMatrix::Zero(static_cast<Eigen::Index>(nodes), 2);
  s.offset = RowMatrix::Zero(static_cast<Eigen::Index>(nodes), 2);
  return s;
}

void set_box(LayerState& s, NodeId v, Vector c, Vector o) {
  s.center.row(v) = c.transpose();
  s.offset.row(v) = o.transpose();
}

}  // namespace

TEST_SUITE("propagation") {

TEST_CASE("user aggregation") {
  const auto zero = AttentionParams::zeros(2);
  SUBCASE("single item neighbor, no tags") {
    const auto g = build_ctg(std::vector<Assignment>{{0, 0, 0}}, {1, 1, 1});
    std::vector<std::uint8_t> mask(3, 0);
    mask[g.tag_node(0)] = 1;
    const GraphView view(g, mask);
    LayerState s = hand_state(3);
    set_box(s, g.item_node(0), v2(0.3, -1), v2(0.5, 2));
    const auto b = aggregate_user(0, s, view, zero);
    CHECK(b.center == v2(0.3, -1));
    CHECK(b.offset == v2(0.5, 2));
  }
  SUBCASE("two tags and one item: max(min items, max tags)") {
    const std::vector<Assignment> a{{0, 0, 0}, {0, 1, 0}};
    const auto g = build_ctg(a, {1, 1, 2});
    LayerState s = hand_state(4);
    set_box(s, g.tag_node(0), v2(0, 0), v2(1, 4));
    set_box(s, g.tag_node(1), v2(0, 0), v2(3, 2));
    set_box(s, g.item_node(0), v2(0, 0), v2(2, 2));
    CHECK(aggregate_user(0, s, GraphView(g), zero).offset == v2(3, 4));
  }
  SUBCASE("no neighbors keeps the ego box") {
    const auto g = build_ctg({}, {1, 1, 1});
    LayerState s = hand_state(3);
    set_box(s, 0, v2(5, 6), v2(1, 1));
    const auto b = aggregate_user(0, s, GraphView(g), zero);
    CHECK(b.center == v2(5, 6));
    CHECK(b.offset == v2(1, 1));
  }
  SUBCASE("wrong node kind throws") {
    const auto g = build_ctg({}, {1, 1, 1});
    CHECK_THROWS_AS(aggregate_user(1, hand_state(3), GraphView(g), zero), std::invalid_argument);
  }
}

TEST_CASE("tag aggregation") {
  const auto zero = AttentionParams::zeros(2);
  SUBCASE("one user neighbor") {
    const auto g = build_ctg(std::vector<Assignment>{{0, 0, 0}}, {1, 1, 1});
    std::vector<std::uint8_t> mask(3, 0);
    mask[g.item_node(0)] = 1;
    LayerState s = hand_state(3);
    set_box(s, 0, v2(1, 2), v2(3, 4));
    const auto b = aggregate_tag(g.tag_node(0), s, GraphView(g, mask), zero);
    CHECK(b.center == v2(1, 2));
    CHECK(b.offset == v2(3, 4));
  }
  SUBCASE("minimum over all neighbors") {
    const std::vector<Assignment> a{{0, 0, 0}, {1, 0, 0}};
    const auto g = build_ctg(a, {2, 1, 1});
    LayerState s = hand_state(4);
    set_box(s, 0, v2(0, 0), v2(1, 4));
    set_box(s, 1, v2(0, 0), v2(3, 2));
    set_box(s, g.item_node(0), v2(0, 0), v2(2, 2));
    CHECK(aggregate_tag(g.tag_node(0), s, GraphView(g), zero).offset == v2(1, 2));
  }
  SUBCASE("isolated tag keeps its box") {
    const auto g = build_ctg({}, {1, 1, 1});
    LayerState s = hand_state(3);
    set_box(s, 2, v2(-1, 1), v2(0.5, 0.5));
    CHECK(aggregate_tag(2, s, GraphView(g), zero).center == v2(-1, 1));
  }
}

TEST_CASE("item aggregation") {
  const auto zero = AttentionParams::zeros(2);
  SUBCASE("one tag neighbor") {
    const auto g = build_ctg(std::vector<Assignment>{{0, 0, 0}}, {1, 1, 1});
    std::vector<std::uint8_t> mask(3, 0);
    mask[0] = 1;
    LayerState s = hand_state(3);
    set_box(s, g.tag_node(0), v2(7, 8), v2(1, 2));
    const auto b = aggregate_item(g.item_node(0), s, GraphView(g, mask), zero);
    CHECK(b.center == v2(7, 8));
    CHECK(b.offset == v2(1, 2));
  }
  SUBCASE("maximum over neighbors, growing with a larger neighbor") {
    const auto g = build_ctg(std::vector<Assignment>{{0, 0, 0}, {1, 0, 0}}, {2, 1, 1});
    std::vector<std::uint8_t> mask(4, 0);
    mask[1] = 1;
    LayerState s = hand_state(4);
    set_box(s, 0, v2(0, 0), v2(1, 4));
    set_box(s, g.tag_node(0), v2(0, 0), v2(3, 2));
    set_box(s, 1, v2(0, 0), v2(5, 5));
    const NodeId item = g.item_node(0);
    const auto before = aggregate_item(item, s, GraphView(g, mask), zero).offset;
    CHECK(before == v2(3, 4));
    const auto after = aggregate_item(item, s, GraphView(g), zero).offset;
    CHECK((after.array() >= before.array()).all());
    CHECK(after == v2(5, 5));
  }
}

TEST_CASE("propagate") {
  std::mt19937_64 rng(8);
  SUBCASE("zero layers returns the tables with offsets made non-negative") {
    const NodeCounts c{2, 2, 2};
    const auto g = build_ctg(testing::random_assignments(rng, c, 4), c);
    const auto p = testing::random_params(rng, c, 3, 2);
    const auto s = propagate(p, GraphView(g), 0);
    CHECK(s.layer == 0);
    CHECK(s.center.topRows(2) == p.user_center);
    CHECK(s.offset.middleRows(2, 2) == p.item_offset.cwiseAbs());
    CHECK(s.center.bottomRows(2) == p.tag_center);
  }
  SUBCASE("triangle graph, one layer, against a hand-rolled step") {
    const auto g = build_ctg(std::vector<Assignment>{{0, 0, 0}}, {1, 1, 1});
    ModelParams p = ModelParams::zeros({1, 1, 1}, 2, 1);
    p.user_center.row(0) << 0, 0;
    p.user_offset.row(0) << 1, -1;
    p.item_center.row(0) << 1, 2;
    p.item_offset.row(0) << 0.5, 3;
    p.tag_center.row(0) << -1, 1;
    p.tag_offset.row(0) << -2, 0.25;
    p.attention[0].weight << 1, 0, 0, -1;
    p.attention[0].bias << 0.1, 0.2;
    const auto s = propagate(p, GraphView(g), 1);
    // Logits of (user, item, tag) centers: W c + b.
    auto w = [](double za, double zb) { return std::exp(za) / (std::exp(za) + std::exp(zb)); };
    // user: neighbors item (1,2) and tag (-1,1); logits item (1.1,-1.8), tag (-0.9,-0.8)
    CHECK(s.center(0, 0) == doctest::Approx(w(1.1, -0.9) * 1 + w(-0.9, 1.1) * -1).epsilon(1e-14));
    CHECK(s.center(0, 1) == doctest::Approx(w(-1.8, -0.8) * 2 + w(-0.8, -1.8) * 1).epsilon(1e-14));
    CHECK(s.offset(0, 0) == 2.0);   // max(min item 0.5, max tag 2)
    CHECK(s.offset(0, 1) == 3.0);   // max(3, 0.25)
    // item: neighbors user (0,0) and tag; max offsets
    CHECK(s.offset(1, 0) == 2.0);
    CHECK(s.offset(1, 1) == 1.0);
    CHECK(s.center(1, 0) == doctest::Approx(w(-0.9, 0.1) * -1).epsilon(1e-14));
    // tag: neighbors user and item; min offsets
    CHECK(s.offset(2, 0) == 0.5);
    CHECK(s.offset(2, 1) == 1.0);
    CHECK(s.center(2, 1) == doctest::Approx(w(-1.8, 0.2) * 2).epsilon(1e-14));
  }
  SUBCASE("repeatable") {
    const NodeCounts c{5, 6, 4};
    const auto g = build_ctg(testing::random_assignments(rng, c, 20), c);
    const auto p = testing::random_params(rng, c, 4, 3);
    const auto a = propagate(p, GraphView(g), 3), b = propagate(p, GraphView(g), 3);
    CHECK(a.center == b.center);
    CHECK(a.offset == b.offset);
  }
  SUBCASE("more layers than attention maps throws") {
    const NodeCounts c{1, 1, 1};
    const auto g = build_ctg({}, c);
    CHECK_THROWS(propagate(ModelParams::zeros(c, 2, 1), GraphView(g), 2));
  }
}

TEST_CASE("end-to-end gradient through two layers") {
  std::mt19937_64 rng(123);
  int valid = 0;
  for (int attempt = 0; attempt < 60 && valid < 20; ++attempt) {
    auto prob = testing::random_grad_problem(rng, 2);
    const auto r = testing::check_batch_gradient(prob.params, GraphView(prob.graph, prob.mask), prob.batch, prob.cfg);
    if (!r.valid) continue;
    ++valid;
    CHECK(r.max_rel_error < 1e-4);
  }
  CHECK(valid >= 20);
}

TEST_CASE("propagation properties (reduced size)") {
  for (const auto& r : {testing::prop_propagation_synchronous(200, 41), testing::prop_centers_ignore_offsets(200, 42),
                        testing::prop_offset_shrink_grow(200, 43), testing::prop_propagation_threads(10, 44)}) {
    INFO(r.name << " -> " << r.first_failure);
    CHECK(r.ok());
  }
}

}  // TEST_SUITE
