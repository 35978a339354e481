#include "pgcn/graph.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <tuple>

#include "pgcn/rng.hpp"

namespace {

using pgcn::EdgeKind;
using pgcn::GraphConfig;
using pgcn::Interval;
using pgcn::Proposal;

std::vector<Proposal> make_proposals(const std::vector<std::pair<double, double>>& spans,
                                     int feature_dim = 2) {
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    Proposal p(static_cast<int>(i), Interval(spans[i].first, spans[i].second));
    p.feature.assign(feature_dim, 1.0);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Proposal> random_proposals(int n, pgcn::Rng& rng, int feature_dim = 4) {
  std::vector<Proposal> out;
  for (int i = 0; i < n; ++i) {
    const double start = rng.uniform(0.0, 60.0);
    Proposal p(i, Interval(start, start + rng.uniform(0.5, 12.0)));
    for (int c = 0; c < feature_dim; ++c) p.feature.push_back(rng.normal());
    out.push_back(std::move(p));
  }
  return out;
}

// Reference candidate sets: a fresh double loop applying the contextual and
// surrounding rules with locally-recomputed interval arithmetic.
using PairSet = std::set<std::pair<int, int>>;

void reference_candidates(const std::vector<Proposal>& ps, double theta_ctx, double theta_sur,
                          PairSet* ctx, PairSet* sur) {
  const int n = static_cast<int>(ps.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = ps[i].interval;
      const auto& b = ps[j].interval;
      const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
      const double uni = (a.end - a.start) + (b.end - b.start) - inter;
      const double r = inter / uni;
      if (r > theta_ctx) ctx->insert({i, j});
      const double d = std::abs(0.5 * (a.start + a.end) - 0.5 * (b.start + b.end)) / uni;
      if (r == 0.0 && d < theta_sur) sur->insert({i, j});
    }
}

PairSet to_pairs(const std::vector<pgcn::EdgeCandidate>& cands) {
  PairSet s;
  for (const auto& c : cands) s.insert({c.src, c.dst});
  return s;
}

TEST(ContextualEdges, Fixtures) {
  EXPECT_TRUE(pgcn::find_contextual_edges(make_proposals({{0, 10}}), 0.7).empty());
  EXPECT_TRUE(pgcn::find_contextual_edges(make_proposals({{0, 10}, {5, 15}}), 0.7).empty());

  const auto both = pgcn::find_contextual_edges(make_proposals({{0, 10}, {1, 10}}), 0.7);
  ASSERT_EQ(both.size(), 2u);
  EXPECT_EQ(to_pairs(both), (PairSet{{0, 1}, {1, 0}}));
  EXPECT_NEAR(both[0].score, 0.9, 1e-12);
}

TEST(SurroundingEdges, Fixtures) {
  // overlapping pair is excluded no matter how close the centers are
  EXPECT_TRUE(pgcn::find_surrounding_edges(make_proposals({{0, 10}, {5, 15}}), 1.0).empty());

  const auto near = pgcn::find_surrounding_edges(make_proposals({{0, 10}, {12, 22}}), 1.0);
  ASSERT_EQ(near.size(), 2u);
  EXPECT_NEAR(near[0].score, 0.6, 1e-12);

  // d == 1.0 exactly: strict inequality keeps it out
  EXPECT_TRUE(pgcn::find_surrounding_edges(make_proposals({{0, 10}, {20, 30}}), 1.0).empty());
}

TEST(GraphCandidates, MatchReferenceOnRandomSets) {
  pgcn::Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const auto ps = random_proposals(rng.uniform_int(2, 60), rng);
    PairSet ref_ctx, ref_sur;
    reference_candidates(ps, 0.7, 1.0, &ref_ctx, &ref_sur);
    EXPECT_EQ(to_pairs(pgcn::find_contextual_edges(ps, 0.7)), ref_ctx);
    EXPECT_EQ(to_pairs(pgcn::find_surrounding_edges(ps, 1.0)), ref_sur);

    // the two relations never intersect
    for (const auto& p : ref_ctx) EXPECT_EQ(ref_sur.count(p), 0u);
  }
}

TEST(AdjacencyWeight, KnownValues) {
  const std::vector<double> v{0.3, -0.7, 2.0};
  EXPECT_NEAR(pgcn::adjacency_weight(v, v), 1.0, 1e-12);

  const std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0}, diag{1.0, 1.0};
  EXPECT_DOUBLE_EQ(pgcn::adjacency_weight(e1, e2), 0.0);
  EXPECT_NEAR(pgcn::adjacency_weight(e1, diag), 1.0 / std::sqrt(2.0), 1e-6);

  // anti-aligned clamps to zero, zero vector has weight zero
  const std::vector<double> neg{-1.0, 0.0}, zero{0.0, 0.0};
  EXPECT_DOUBLE_EQ(pgcn::adjacency_weight(e1, neg), 0.0);
  EXPECT_DOUBLE_EQ(pgcn::adjacency_weight(e1, zero), 0.0);
  EXPECT_THROW(pgcn::adjacency_weight(e1, v), std::invalid_argument);
}

TEST(CapNeighbors, QuotasAndTieBreaks) {
  GraphConfig cfg;
  ASSERT_EQ(cfg.contextual_quota(), 8);
  ASSERT_EQ(cfg.surrounding_quota(), 2);

  // 20 contextual + 5 surrounding candidates into node 0
  std::vector<pgcn::EdgeCandidate> ctx, sur;
  for (int i = 1; i <= 20; ++i) ctx.push_back({i, 0, 0.7 + 0.01 * i});
  for (int i = 21; i <= 25; ++i) sur.push_back({i, 0, 0.1 * (i - 20)});
  const auto g = pgcn::cap_neighbors(26, ctx, sur, cfg);

  const auto nbrs = g.neighbors(0);
  ASSERT_EQ(nbrs.size(), 10u);
  int n_ctx = 0, n_sur = 0;
  for (const auto& e : nbrs) (e.kind == EdgeKind::contextual ? n_ctx : n_sur)++;
  EXPECT_EQ(n_ctx, 8);
  EXPECT_EQ(n_sur, 2);
  // largest relevance first / smallest distance first
  EXPECT_EQ(nbrs[0].src, 20);
  EXPECT_EQ(nbrs[7].src, 13);
  EXPECT_EQ(nbrs[8].src, 21);
  EXPECT_EQ(nbrs[9].src, 22);
}

TEST(CapNeighbors, UnderQuotaKeepsAllWithoutSlackTransfer) {
  GraphConfig cfg;
  std::vector<pgcn::EdgeCandidate> ctx{{1, 0, 0.9}, {2, 0, 0.8}, {3, 0, 0.75}};
  std::vector<pgcn::EdgeCandidate> sur;
  for (int i = 4; i <= 12; ++i) sur.push_back({i, 0, 0.05 * (i - 3)});
  const auto g = pgcn::cap_neighbors(13, ctx, sur, cfg);
  // 3 contextual all kept; surrounding capped at its own quota of 2 even
  // though the contextual side left 5 slots unused
  ASSERT_EQ(g.neighbor_count(0), 5);
  const auto nbrs = g.neighbors(0);
  EXPECT_EQ(nbrs[3].src, 4);
  EXPECT_EQ(nbrs[4].src, 5);
}

TEST(CapNeighbors, TieBreaksByLowerSourceId) {
  GraphConfig cfg;
  cfg.max_neighbors = 5;  // quotas 4 + 1
  std::vector<pgcn::EdgeCandidate> ctx;
  for (int i = 1; i <= 6; ++i) ctx.push_back({7 - i, 0, 0.8});  // all tied
  const auto g = pgcn::cap_neighbors(8, ctx, {}, cfg);
  ASSERT_EQ(g.neighbor_count(0), 4);
  const auto nbrs = g.neighbors(0);
  EXPECT_EQ(nbrs[0].src, 1);
  EXPECT_EQ(nbrs[1].src, 2);
  EXPECT_EQ(nbrs[2].src, 3);
  EXPECT_EQ(nbrs[3].src, 4);
}

TEST(BuildGraph, SingleNodeAndConfigValidation) {
  const auto ps = make_proposals({{0, 10}});
  const auto g = pgcn::build_graph(ps, GraphConfig{});
  EXPECT_EQ(g.num_nodes, 1);
  EXPECT_TRUE(g.edges.empty());

  GraphConfig bad;
  bad.theta_ctx = 1.0;
  EXPECT_THROW(pgcn::build_graph(ps, bad), std::invalid_argument);
  bad = GraphConfig{};
  bad.theta_sur = 0.0;
  EXPECT_THROW(pgcn::build_graph(ps, bad), std::invalid_argument);
  bad = GraphConfig{};
  bad.max_neighbors = 0;
  EXPECT_THROW(pgcn::build_graph(ps, bad), std::invalid_argument);
}

TEST(BuildGraph, ThreeProposalFixture) {
  // {[0,10],[1,10]} overlap heavily; [12,22] sits nearby but disjoint.
  const auto ps = make_proposals({{0, 10}, {1, 10}, {12, 22}});
  const auto g = pgcn::build_graph(ps, GraphConfig{});

  std::map<std::pair<int, int>, EdgeKind> kinds;
  for (const auto& e : g.edges) {
    kinds[{e.src, e.dst}] = e.kind;
    EXPECT_DOUBLE_EQ(e.weight, 1.0);  // unit features everywhere
  }
  ASSERT_EQ(kinds.size(), 6u);
  EXPECT_EQ(kinds.at({0, 1}), EdgeKind::contextual);
  EXPECT_EQ(kinds.at({1, 0}), EdgeKind::contextual);
  EXPECT_EQ(kinds.at({0, 2}), EdgeKind::surrounding);
  EXPECT_EQ(kinds.at({2, 0}), EdgeKind::surrounding);
  EXPECT_EQ(kinds.at({1, 2}), EdgeKind::surrounding);
  EXPECT_EQ(kinds.at({2, 1}), EdgeKind::surrounding);
}

TEST(BuildGraph, BoundaryDistanceExcluded) {
  // [20,30] is at normalized distance exactly 1.0 from [0,10]: no edge.
  const auto ps = make_proposals({{0, 10}, {1, 10}, {20, 30}});
  const auto g = pgcn::build_graph(ps, GraphConfig{});
  for (const auto& e : g.edges) EXPECT_EQ(e.kind, EdgeKind::contextual);
  EXPECT_EQ(g.edges.size(), 2u);
}

TEST(BuildGraph, DeterministicAndCandidateEquivalent) {
  pgcn::Rng rng(7);
  const auto ps = random_proposals(50, rng);
  const auto g1 = pgcn::build_graph(ps, GraphConfig{});
  const auto g2 = pgcn::build_graph(ps, GraphConfig{});
  ASSERT_EQ(g1.edges.size(), g2.edges.size());
  for (std::size_t i = 0; i < g1.edges.size(); ++i) {
    EXPECT_EQ(g1.edges[i].src, g2.edges[i].src);
    EXPECT_EQ(g1.edges[i].dst, g2.edges[i].dst);
    EXPECT_EQ(g1.edges[i].weight, g2.edges[i].weight);
  }

  // with the cap lifted, the edge set equals the raw candidate union
  GraphConfig uncapped;
  uncapped.cap_enabled = false;
  const auto gu = pgcn::build_graph(ps, uncapped);
  PairSet ref_ctx, ref_sur;
  reference_candidates(ps, 0.7, 1.0, &ref_ctx, &ref_sur);
  PairSet got;
  for (const auto& e : gu.edges) {
    got.insert({e.src, e.dst});
    EXPECT_GE(e.weight, 0.0);
    EXPECT_LE(e.weight, 1.0);
  }
  PairSet want = ref_ctx;
  want.insert(ref_sur.begin(), ref_sur.end());
  EXPECT_EQ(got, want);
}

TEST(BuildGraph, EdgeTypeToggles) {
  const auto ps = make_proposals({{0, 10}, {1, 10}, {12, 22}});
  GraphConfig no_ctx;
  no_ctx.include_contextual = false;
  for (const auto& e : pgcn::build_graph(ps, no_ctx).edges)
    EXPECT_EQ(e.kind, EdgeKind::surrounding);

  GraphConfig no_sur;
  no_sur.include_surrounding = false;
  for (const auto& e : pgcn::build_graph(ps, no_sur).edges)
    EXPECT_EQ(e.kind, EdgeKind::contextual);
}

}  // namespace
