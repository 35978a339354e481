#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgcn/matrix.hpp"
#include "pgcn/proposal.hpp"

namespace pgcn {

enum class EdgeKind { contextual, surrounding };

inline const char* to_string(EdgeKind k) {
  return k == EdgeKind::contextual ? "contextual" : "surrounding";
}

// Directed edge: `src` is aggregated into `dst`. `score` carries the measure
// that selected the edge (tIoU for contextual, center distance for
// surrounding); `weight` is the clamped feature cosine used as the adjacency
// coefficient.
struct Edge {
  int src;
  int dst;
  EdgeKind kind;
  double score;
  double weight;
};

struct GraphConfig {
  double theta_ctx = 0.7;       // contextual edge needs tIoU strictly above this
  double theta_sur = 1.0;       // surrounding edge needs distance strictly below this
  int max_neighbors = 10;       // incoming-neighbor cap per node
  int ctx_ratio = 4;            // contextual share of the cap
  int sur_ratio = 1;            // surrounding share of the cap
  bool cap_enabled = true;      // capping applies to both training and test graphs
  bool include_contextual = true;
  bool include_surrounding = true;

  int contextual_quota() const { return max_neighbors * ctx_ratio / (ctx_ratio + sur_ratio); }
  int surrounding_quota() const { return max_neighbors - contextual_quota(); }

  void validate() const {
    if (!(theta_ctx >= 0.0 && theta_ctx < 1.0))
      throw std::invalid_argument("GraphConfig: theta_ctx must be in [0, 1)");
    if (!(theta_sur > 0.0))
      throw std::invalid_argument("GraphConfig: theta_sur must be positive");
    if (max_neighbors <= 0)
      throw std::invalid_argument("GraphConfig: max_neighbors must be positive");
    if (ctx_ratio <= 0 || sur_ratio <= 0)
      throw std::invalid_argument("GraphConfig: edge-type ratio parts must be positive");
  }
};

// Per-video proposal graph. Edges are grouped by destination node so that a
// node's incoming neighbor list is contiguous; the graph is immutable once
// built and safe to share across readers.
struct ProposalGraph {
  int num_nodes = 0;
  std::vector<Edge> edges;                 // grouped by dst, contextual before surrounding
  std::vector<int> neighbor_offsets;       // size num_nodes + 1, indexes into `edges`

  std::span<const Edge> neighbors(int node) const {
    return {edges.data() + neighbor_offsets[node],
            static_cast<std::size_t>(neighbor_offsets[node + 1] - neighbor_offsets[node])};
  }

  int neighbor_count(int node) const {
    return neighbor_offsets[node + 1] - neighbor_offsets[node];
  }
};

// Candidate edge before capping.
struct EdgeCandidate {
  int src;
  int dst;
  double score;
};

// All ordered pairs (src, dst), src != dst, with tIoU strictly above the
// threshold. Quadratic over proposals; fine at the scales this runs at.
inline std::vector<EdgeCandidate> find_contextual_edges(const std::vector<Proposal>& proposals,
                                                        double theta_ctx) {
  std::vector<EdgeCandidate> out;
  const int n = static_cast<int>(proposals.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = tiou(proposals[i].interval, proposals[j].interval);
      if (r > theta_ctx) out.push_back({proposals[i].id, proposals[j].id, r});
    }
  return out;
}

// All ordered pairs of disjoint proposals (tIoU == 0) whose normalized center
// distance is strictly below the threshold.
inline std::vector<EdgeCandidate> find_surrounding_edges(const std::vector<Proposal>& proposals,
                                                         double theta_sur) {
  std::vector<EdgeCandidate> out;
  const int n = static_cast<int>(proposals.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (tiou(proposals[i].interval, proposals[j].interval) != 0.0) continue;
      const double d = surround_distance(proposals[i].interval, proposals[j].interval);
      if (d < theta_sur) out.push_back({proposals[i].id, proposals[j].id, d});
    }
  return out;
}

// Cosine similarity clamped below at zero. A zero vector has no direction and
// gets weight 0.
inline double adjacency_weight(std::span<const double> xi, std::span<const double> xj) {
  if (xi.size() != xj.size())
    throw std::invalid_argument("adjacency_weight: feature dimensions differ");
  const double ni = norm2(xi);
  const double nj = norm2(xj);
  if (ni == 0.0 || nj == 0.0) return 0.0;
  return std::max(0.0, dot(xi, xj) / (ni * nj));
}

namespace detail {

// Keep the per-node quota of candidates, best score first. Ties at the quota
// boundary break toward the lower src id so graph construction stays
// deterministic.
template <typename Better>
inline void keep_top(std::vector<EdgeCandidate>& cands, int quota, Better better) {
  std::sort(cands.begin(), cands.end(), [&](const EdgeCandidate& a, const EdgeCandidate& b) {
    if (a.score != b.score) return better(a.score, b.score);
    return a.src < b.src;
  });
  if (static_cast<int>(cands.size()) > quota) cands.resize(quota);
}

}  // namespace detail

// Per-destination capping: at most contextual_quota() contextual edges (by
// largest tIoU) and surrounding_quota() surrounding edges (by smallest
// distance). Slack in one type is not given to the other.
inline ProposalGraph cap_neighbors(int num_nodes,
                                   const std::vector<EdgeCandidate>& contextual,
                                   const std::vector<EdgeCandidate>& surrounding,
                                   const GraphConfig& config) {
  std::vector<std::vector<EdgeCandidate>> ctx_by_dst(num_nodes), sur_by_dst(num_nodes);
  for (const EdgeCandidate& c : contextual) ctx_by_dst[c.dst].push_back(c);
  for (const EdgeCandidate& c : surrounding) sur_by_dst[c.dst].push_back(c);

  ProposalGraph graph;
  graph.num_nodes = num_nodes;
  graph.neighbor_offsets.assign(num_nodes + 1, 0);
  for (int v = 0; v < num_nodes; ++v) {
    auto& ctx = ctx_by_dst[v];
    auto& sur = sur_by_dst[v];
    if (config.cap_enabled) {
      detail::keep_top(ctx, config.contextual_quota(), [](double a, double b) { return a > b; });
      detail::keep_top(sur, config.surrounding_quota(), [](double a, double b) { return a < b; });
    } else {
      detail::keep_top(ctx, static_cast<int>(ctx.size()), [](double a, double b) { return a > b; });
      detail::keep_top(sur, static_cast<int>(sur.size()), [](double a, double b) { return a < b; });
    }
    for (const EdgeCandidate& c : ctx)
      graph.edges.push_back({c.src, c.dst, EdgeKind::contextual, c.score, 0.0});
    for (const EdgeCandidate& c : sur)
      graph.edges.push_back({c.src, c.dst, EdgeKind::surrounding, c.score, 0.0});
    graph.neighbor_offsets[v + 1] = static_cast<int>(graph.edges.size());
  }
  return graph;
}

// Full construction: candidate discovery, per-node capping, then cosine
// adjacency weights from the original (non-extended) features. Pure function
// of its inputs.
inline ProposalGraph build_graph(const std::vector<Proposal>& proposals,
                                 const GraphConfig& config) {
  config.validate();
  check_feature_dims(proposals);

  const int n = static_cast<int>(proposals.size());
  for (int i = 0; i < n; ++i)
    if (proposals[i].id != i)
      throw std::invalid_argument("build_graph: proposal ids must be the dense range 0..N-1");

  std::vector<EdgeCandidate> ctx, sur;
  if (config.include_contextual) ctx = find_contextual_edges(proposals, config.theta_ctx);
  if (config.include_surrounding) sur = find_surrounding_edges(proposals, config.theta_sur);

  ProposalGraph graph = cap_neighbors(n, ctx, sur, config);
  for (Edge& e : graph.edges)
    e.weight = adjacency_weight(proposals[e.src].feature, proposals[e.dst].feature);
  return graph;
}

}  // namespace pgcn
