#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgcn/graph.hpp"
#include "pgcn/matrix.hpp"
#include "pgcn/rng.hpp"

namespace pgcn {

// How a branch propagates features: graph convolution with neighbor
// aggregation, a plain per-proposal MLP (adjacency dropped), or an MLP
// followed by mean pooling over graph neighbors.
enum class BranchMode { gcn, mlp, mean_pool };

inline BranchMode branch_mode_from_string(const std::string& s) {
  if (s == "gcn") return BranchMode::gcn;
  if (s == "mlp") return BranchMode::mlp;
  if (s == "mean-pool" || s == "mean_pool") return BranchMode::mean_pool;
  throw std::invalid_argument("unknown mode '" + s + "' (expected gcn | mlp | mean-pool)");
}

inline const char* to_string(BranchMode m) {
  switch (m) {
    case BranchMode::gcn: return "gcn";
    case BranchMode::mlp: return "mlp";
    default: return "mean-pool";
  }
}

struct GcnLayerParams {
  Matrix weight;  // d_in x d_out
};

struct GcnStackConfig {
  std::vector<int> dims;      // d_0, d_1, ..., d_K
  double dropout_rate = 0.8;  // applied to layer inputs in training
  bool concat_input = true;   // final output is X^(K) || X^(0)
  BranchMode mode = BranchMode::gcn;

  int depth() const { return static_cast<int>(dims.size()) - 1; }

  void validate() const {
    if (dims.size() < 2) throw std::invalid_argument("GcnStackConfig: need at least one layer");
    for (int d : dims)
      if (d <= 0) throw std::invalid_argument("GcnStackConfig: dimensions must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("GcnStackConfig: dropout_rate must be in [0, 1)");
  }
};

struct GcnStack {
  GcnStackConfig config;
  std::vector<GcnLayerParams> layers;

  int input_dim() const { return config.dims.front(); }
  int output_dim() const {
    return config.dims.back() + (config.concat_input ? config.dims.front() : 0);
  }
};

// Scaled uniform init in +-sqrt(6 / (d_in + d_out)).
inline Matrix init_weight(int d_in, int d_out, Rng& rng) {
  Matrix w(d_in, d_out);
  const double bound = std::sqrt(6.0 / (d_in + d_out));
  for (int i = 0; i < d_in; ++i)
    for (int j = 0; j < d_out; ++j) w(i, j) = rng.uniform(-bound, bound);
  return w;
}

inline GcnStack make_stack(const GcnStackConfig& config, Rng& rng) {
  config.validate();
  GcnStack stack;
  stack.config = config;
  for (int k = 1; k <= config.depth(); ++k)
    stack.layers.push_back({init_weight(config.dims[k - 1], config.dims[k], rng)});
  return stack;
}

struct Gradients {
  std::vector<Matrix> layer_grads;

  static Gradients zeros_like(const GcnStack& stack) {
    Gradients g;
    for (const auto& layer : stack.layers)
      g.layer_grads.emplace_back(layer.weight.rows(), layer.weight.cols());
    return g;
  }
};

// One dense graph-convolution layer: A * X * W, nothing else. The activation
// between layers is the caller's job.
inline Matrix gcn_layer_forward(const Matrix& adjacency, const Matrix& features,
                                const Matrix& weight) {
  if (adjacency.cols() != features.rows())
    throw std::invalid_argument("gcn_layer_forward: adjacency/features shape mismatch");
  if (features.cols() != weight.rows())
    throw std::invalid_argument("gcn_layer_forward: features/weight shape mismatch");
  return matmul(matmul(adjacency, features), weight);
}

// Identity plus the row-mean of weighted incoming edges. The self term is
// folded into the matrix so the dense path matches the sampled path's
// "mean of neighbors plus self" aggregation.
inline Matrix effective_adjacency(const ProposalGraph& graph) {
  Matrix m = Matrix::identity(graph.num_nodes);
  for (int v = 0; v < graph.num_nodes; ++v) {
    const auto nbrs = graph.neighbors(v);
    if (nbrs.empty()) continue;
    const double scale = 1.0 / static_cast<double>(nbrs.size());
    for (const Edge& e : nbrs) m(v, e.src) += scale * e.weight;
  }
  return m;
}

// Uniform draw with replacement from the node's capped incoming neighbors.
// An isolated node yields an empty sample.
inline std::vector<int> sample_neighbors(const ProposalGraph& graph, int node, int sample_size,
                                         Rng& rng) {
  const auto nbrs = graph.neighbors(node);
  std::vector<int> sample;
  if (nbrs.empty()) return sample;
  sample.reserve(sample_size);
  for (int s = 0; s < sample_size; ++s)
    sample.push_back(nbrs[rng.uniform_index(nbrs.size())].src);
  return sample;
}

// Aggregate one node: (scale * sum_s w_s x_{j_s} + x_self) * W. `scale` is
// 1/N_s on the sampled path and 1/|N(i)| on the full path.
inline std::vector<double> sampled_aggregate(const Matrix& features, int self_row,
                                             std::span<const int> sample_rows,
                                             std::span<const double> sample_weights, double scale,
                                             const Matrix& weight) {
  if (features.cols() != weight.rows())
    throw std::invalid_argument("sampled_aggregate: feature/weight dimension mismatch");
  std::vector<double> u(features.cols(), 0.0);
  for (std::size_t s = 0; s < sample_rows.size(); ++s) {
    const auto xj = features.row(sample_rows[s]);
    const double w = scale * sample_weights[s];
    for (int c = 0; c < features.cols(); ++c) u[c] += w * xj[c];
  }
  const auto xi = features.row(self_row);
  for (int c = 0; c < features.cols(); ++c) u[c] += xi[c];

  std::vector<double> out(weight.cols(), 0.0);
  for (int r = 0; r < weight.rows(); ++r) {
    if (u[r] == 0.0) continue;
    for (int c = 0; c < weight.cols(); ++c) out[c] += u[r] * weight(r, c);
  }
  return out;
}

// --- Training-path plan -----------------------------------------------------
//
// The sampled forward touches only the nodes a mini-batch actually needs:
// active node sets are built top-down (the layer-(k-1) set is the layer-k set
// plus its sampled neighborhoods) and features are then aggregated bottom-up.
// Freezing the draws and dropout masks in a plan keeps one iteration's
// computation a deterministic function, which the finite-difference tests
// rely on.

struct LayerPlan {
  std::vector<int> self_rows;        // per output node: its row in the level below
  std::vector<int> sample_offsets;   // per output node: range into sample_rows
  std::vector<int> sample_rows;      // rows in the level below
  std::vector<double> sample_weights;
  std::vector<double> agg_scale;     // per output node
};

struct ForwardPlan {
  BranchMode mode = BranchMode::gcn;
  std::vector<int> batch;                 // node ids the loss is computed on
  std::vector<std::vector<int>> active;   // K+1 levels of node ids, ascending
  std::vector<LayerPlan> layers;          // layers[k-1] feeds level k
  std::vector<Matrix> dropout_masks;      // per layer, over the level-(k-1) rows; empty = off
  // mean-pool only: pooling of the topmost level's rows into batch outputs
  std::vector<int> pool_offsets;
  std::vector<int> pool_rows;
  std::vector<double> pool_scale;
  std::vector<int> batch_rows;            // row of each batch node in the topmost level
};

namespace detail {

inline std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline int row_of(const std::vector<int>& sorted_ids, int id) {
  const auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
  return static_cast<int>(it - sorted_ids.begin());
}

inline Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform() >= rate ? keep_scale : 0.0;
  return m;
}

}  // namespace detail

// Build the computation plan for one training iteration. With `sample` false
// the full capped neighborhood is used with 1/|N(i)| scaling, which matches
// the dense evaluation path exactly.
inline ForwardPlan make_train_plan(const GcnStack& stack, const ProposalGraph& graph,
                                   const std::vector<int>& batch, int sample_size, bool sample,
                                   Rng* rng, bool use_dropout = true) {
  if (batch.empty()) throw std::invalid_argument("make_train_plan: empty batch");
  for (int id : batch)
    if (id < 0 || id >= graph.num_nodes)
      throw std::invalid_argument("make_train_plan: batch node " + std::to_string(id) +
                                  " outside graph");
  if (sample && sample_size < 1)
    throw std::invalid_argument("make_train_plan: sample_size must be >= 1");
  if (sample && rng == nullptr)
    throw std::invalid_argument("make_train_plan: sampling requires an rng");

  const int depth = stack.config.depth();
  ForwardPlan plan;
  plan.mode = stack.config.mode;
  plan.batch = batch;
  plan.active.resize(depth + 1);
  plan.layers.resize(depth);

  const bool aggregates = stack.config.mode == BranchMode::gcn;

  if (stack.config.mode == BranchMode::mean_pool) {
    // MLP over the batch plus its one-hop neighbors, pooled at the end.
    std::vector<int> ext = batch;
    for (int id : batch)
      for (const Edge& e : graph.neighbors(id)) ext.push_back(e.src);
    const std::vector<int> nodes = detail::sorted_unique(ext);
    for (int k = 0; k <= depth; ++k) plan.active[k] = nodes;
    for (int id : batch) {
      plan.pool_offsets.push_back(static_cast<int>(plan.pool_rows.size()));
      plan.pool_rows.push_back(detail::row_of(nodes, id));
      for (const Edge& e : graph.neighbors(id))
        plan.pool_rows.push_back(detail::row_of(nodes, e.src));
      plan.pool_scale.push_back(1.0 /
                                static_cast<double>(1 + graph.neighbor_count(id)));
    }
    plan.pool_offsets.push_back(static_cast<int>(plan.pool_rows.size()));
  } else {
    plan.active[depth] = detail::sorted_unique(batch);
    // Top-down: choose which lower-level nodes each layer needs.
    std::vector<std::vector<std::vector<int>>> drawn(depth);  // [layer][node] -> sampled ids
    for (int k = depth; k >= 1; --k) {
      std::vector<int> below = plan.active[k];
      drawn[k - 1].resize(plan.active[k].size());
      if (aggregates) {
        for (std::size_t idx = 0; idx < plan.active[k].size(); ++idx) {
          const int node = plan.active[k][idx];
          if (sample) {
            drawn[k - 1][idx] = sample_neighbors(graph, node, sample_size, *rng);
          } else {
            for (const Edge& e : graph.neighbors(node)) drawn[k - 1][idx].push_back(e.src);
          }
          below.insert(below.end(), drawn[k - 1][idx].begin(), drawn[k - 1][idx].end());
        }
      }
      plan.active[k - 1] = detail::sorted_unique(below);
    }
    // Bottom-up wiring: resolve ids to rows and attach adjacency weights.
    for (int k = 1; k <= depth; ++k) {
      LayerPlan& lp = plan.layers[k - 1];
      const auto& out_nodes = plan.active[k];
      const auto& in_nodes = plan.active[k - 1];
      for (std::size_t idx = 0; idx < out_nodes.size(); ++idx) {
        const int node = out_nodes[idx];
        lp.self_rows.push_back(detail::row_of(in_nodes, node));
        lp.sample_offsets.push_back(static_cast<int>(lp.sample_rows.size()));
        if (aggregates) {
          const auto nbrs = graph.neighbors(node);
          for (int src : drawn[k - 1][idx]) {
            lp.sample_rows.push_back(detail::row_of(in_nodes, src));
            // weight of the (src -> node) edge; linear scan over a capped list
            double w = 0.0;
            for (const Edge& e : nbrs)
              if (e.src == src) {
                w = e.weight;
                break;
              }
            lp.sample_weights.push_back(w);
          }
          const int count = static_cast<int>(drawn[k - 1][idx].size());
          lp.agg_scale.push_back(sample ? 1.0 / sample_size
                                        : (count > 0 ? 1.0 / count : 1.0));
        } else {
          lp.agg_scale.push_back(1.0);
        }
      }
      lp.sample_offsets.push_back(static_cast<int>(lp.sample_rows.size()));
    }
  }

  plan.batch_rows.reserve(batch.size());
  for (int id : batch) plan.batch_rows.push_back(detail::row_of(plan.active[depth], id));

  if (use_dropout && stack.config.dropout_rate > 0.0) {
    if (rng == nullptr)
      throw std::invalid_argument("make_train_plan: dropout requires an rng");
    for (int k = 1; k <= depth; ++k)
      plan.dropout_masks.push_back(detail::dropout_mask(
          static_cast<int>(plan.active[k - 1].size()), stack.config.dims[k - 1],
          stack.config.dropout_rate, *rng));
  }

  // mean-pool layers carry self rows too (identity wiring)
  if (stack.config.mode == BranchMode::mean_pool) {
    for (int k = 1; k <= depth; ++k) {
      LayerPlan& lp = plan.layers[k - 1];
      const int n = static_cast<int>(plan.active[k].size());
      for (int r = 0; r < n; ++r) {
        lp.self_rows.push_back(r);
        lp.sample_offsets.push_back(0);
        lp.agg_scale.push_back(1.0);
      }
      lp.sample_offsets.push_back(0);
    }
  }

  return plan;
}

struct StackForwardCache {
  std::vector<Matrix> dropped_inputs;  // per layer: level-(k-1) features after dropout
  std::vector<Matrix> aggregated;      // per layer: U = scale * sum + self
  std::vector<Matrix> preact;          // per layer: H = U * W
  Matrix topmost;                      // post-ReLU features of the topmost level
  Matrix output;                       // batch x output_dim (after concat / pooling)
};

// Forward pass over a frozen plan. `features` holds the full per-video
// feature matrix; rows are gathered per the plan's active sets.
inline StackForwardCache forward_with_plan(const GcnStack& stack, const ForwardPlan& plan,
                                           const Matrix& features) {
  const int depth = stack.config.depth();
  if (features.cols() != stack.input_dim())
    throw std::invalid_argument("forward_with_plan: feature dim " +
                                std::to_string(features.cols()) + " != stack input dim " +
                                std::to_string(stack.input_dim()));

  StackForwardCache cache;
  Matrix x(static_cast<int>(plan.active[0].size()), features.cols());
  for (std::size_t r = 0; r < plan.active[0].size(); ++r)
    std::copy_n(features.row(plan.active[0][r]).data(), features.cols(), x.row(static_cast<int>(r)).data());

  for (int k = 1; k <= depth; ++k) {
    const LayerPlan& lp = plan.layers[k - 1];
    Matrix xin = x;
    if (!plan.dropout_masks.empty()) {
      const Matrix& mask = plan.dropout_masks[k - 1];
      for (int r = 0; r < xin.rows(); ++r)
        for (int c = 0; c < xin.cols(); ++c) xin(r, c) *= mask(r, c);
    }
    const int n_out = static_cast<int>(plan.active[k].size());
    Matrix u(n_out, xin.cols());
    for (int i = 0; i < n_out; ++i) {
      const double scale = lp.agg_scale[i];
      auto urow = u.row(i);
      for (int s = lp.sample_offsets[i]; s < lp.sample_offsets[i + 1]; ++s) {
        const auto xj = xin.row(lp.sample_rows[s]);
        const double w = scale * lp.sample_weights[s];
        for (int c = 0; c < xin.cols(); ++c) urow[c] += w * xj[c];
      }
      const auto xi = xin.row(lp.self_rows[i]);
      for (int c = 0; c < xin.cols(); ++c) urow[c] += xi[c];
    }
    Matrix h = matmul(u, stack.layers[k - 1].weight);
    cache.dropped_inputs.push_back(std::move(xin));
    cache.aggregated.push_back(std::move(u));
    x = h;
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) x(r, c) = std::max(0.0, x(r, c));
    cache.preact.push_back(std::move(h));
  }
  cache.topmost = x;

  // Assemble per-row [X^(K) || X^(0)], then pool if this is the mean-pool mode.
  const int d_top = stack.config.dims.back();
  const int d_in = stack.config.dims.front();
  const int out_dim = stack.output_dim();
  const auto assemble_row = [&](int top_row, int node_id, std::span<double> dst) {
    std::copy_n(cache.topmost.row(top_row).data(), d_top, dst.data());
    if (stack.config.concat_input)
      std::copy_n(features.row(node_id).data(), d_in, dst.data() + d_top);
  };

  const int batch_size = static_cast<int>(plan.batch.size());
  cache.output = Matrix(batch_size, out_dim);
  if (plan.mode == BranchMode::mean_pool) {
    const auto& top_nodes = plan.active[depth];
    Matrix assembled(static_cast<int>(top_nodes.size()), out_dim);
    for (std::size_t r = 0; r < top_nodes.size(); ++r)
      assemble_row(static_cast<int>(r), top_nodes[r], assembled.row(static_cast<int>(r)));
    for (int b = 0; b < batch_size; ++b) {
      auto dst = cache.output.row(b);
      for (int s = plan.pool_offsets[b]; s < plan.pool_offsets[b + 1]; ++s) {
        const auto src = assembled.row(plan.pool_rows[s]);
        for (int c = 0; c < out_dim; ++c) dst[c] += plan.pool_scale[b] * src[c];
      }
    }
  } else {
    for (int b = 0; b < batch_size; ++b)
      assemble_row(plan.batch_rows[b], plan.batch[b], cache.output.row(b));
  }
  return cache;
}

// Exact gradients of the plan's forward pass with respect to every layer
// weight. The concatenated input half of the output routes no gradient into
// the weights by construction.
inline Gradients stack_backward(const GcnStack& stack, const ForwardPlan& plan,
                                const StackForwardCache& cache, const Matrix& d_output) {
  const int depth = stack.config.depth();
  const int d_top = stack.config.dims.back();
  if (d_output.rows() != cache.output.rows() || d_output.cols() != cache.output.cols())
    throw std::invalid_argument("stack_backward: output gradient shape mismatch");

  Gradients grads = Gradients::zeros_like(stack);

  // Gradient w.r.t. the topmost post-ReLU features (drop the concat half).
  Matrix dx(cache.topmost.rows(), cache.topmost.cols());
  if (plan.mode == BranchMode::mean_pool) {
    for (int b = 0; b < d_output.rows(); ++b)
      for (int s = plan.pool_offsets[b]; s < plan.pool_offsets[b + 1]; ++s) {
        const int r = plan.pool_rows[s];
        for (int c = 0; c < d_top; ++c) dx(r, c) += plan.pool_scale[b] * d_output(b, c);
      }
  } else {
    for (int b = 0; b < d_output.rows(); ++b) {
      const int r = plan.batch_rows[b];
      for (int c = 0; c < d_top; ++c) dx(r, c) += d_output(b, c);
    }
  }

  for (int k = depth; k >= 1; --k) {
    const LayerPlan& lp = plan.layers[k - 1];
    const Matrix& h = cache.preact[k - 1];
    Matrix dh = dx;
    for (int r = 0; r < dh.rows(); ++r)
      for (int c = 0; c < dh.cols(); ++c)
        if (h(r, c) <= 0.0) dh(r, c) = 0.0;

    grads.layer_grads[k - 1] += matmul_tn(cache.aggregated[k - 1], dh);
    Matrix du = matmul_nt(dh, stack.layers[k - 1].weight);

    Matrix dxin(cache.dropped_inputs[k - 1].rows(), cache.dropped_inputs[k - 1].cols());
    const int n_out = static_cast<int>(plan.active[k].size());
    for (int i = 0; i < n_out; ++i) {
      const double scale = lp.agg_scale[i];
      const auto du_i = du.row(i);
      for (int s = lp.sample_offsets[i]; s < lp.sample_offsets[i + 1]; ++s) {
        auto dst = dxin.row(lp.sample_rows[s]);
        const double w = scale * lp.sample_weights[s];
        for (int c = 0; c < dxin.cols(); ++c) dst[c] += w * du_i[c];
      }
      auto self = dxin.row(lp.self_rows[i]);
      for (int c = 0; c < dxin.cols(); ++c) self[c] += du_i[c];
    }
    if (!plan.dropout_masks.empty()) {
      const Matrix& mask = plan.dropout_masks[k - 1];
      for (int r = 0; r < dxin.rows(); ++r)
        for (int c = 0; c < dxin.cols(); ++c) dxin(r, c) *= mask(r, c);
    }
    dx = std::move(dxin);
  }
  return grads;
}

// --- Dense evaluation path ---------------------------------------------------

// Full-graph forward used at test time: no sampling, no dropout, every node.
// The gcn route multiplies through the mean-normalized adjacency; mlp uses
// the identity; mean-pool runs the mlp then averages outputs over neighbors.
inline Matrix stack_forward_eval(const GcnStack& stack, const ProposalGraph& graph,
                                 const Matrix& features) {
  stack.config.validate();
  if (features.rows() != graph.num_nodes)
    throw std::invalid_argument("stack_forward_eval: feature rows != graph nodes");
  if (features.cols() != stack.input_dim())
    throw std::invalid_argument("stack_forward_eval: feature dim mismatch");

  const Matrix adjacency = stack.config.mode == BranchMode::gcn
                               ? effective_adjacency(graph)
                               : Matrix::identity(graph.num_nodes);
  Matrix x = features;
  for (const auto& layer : stack.layers) {
    x = gcn_layer_forward(adjacency, x, layer.weight);
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) x(r, c) = std::max(0.0, x(r, c));
  }

  Matrix out(features.rows(), stack.output_dim());
  for (int r = 0; r < out.rows(); ++r) {
    std::copy_n(x.row(r).data(), x.cols(), out.row(r).data());
    if (stack.config.concat_input)
      std::copy_n(features.row(r).data(), features.cols(), out.row(r).data() + x.cols());
  }

  if (stack.config.mode == BranchMode::mean_pool) {
    Matrix pooled(out.rows(), out.cols());
    for (int v = 0; v < graph.num_nodes; ++v) {
      const auto nbrs = graph.neighbors(v);
      const double scale = 1.0 / static_cast<double>(1 + nbrs.size());
      for (int c = 0; c < out.cols(); ++c) pooled(v, c) = scale * out(v, c);
      for (const Edge& e : nbrs)
        for (int c = 0; c < out.cols(); ++c) pooled(v, c) += scale * out(e.src, c);
    }
    return pooled;
  }
  return out;
}

// W <- W - lr * grad. Non-finite gradients indicate a diverged run and are
// reported rather than written into the parameters.
inline void sgd_update(Matrix& weight, const Matrix& grad, double learning_rate) {
  if (!weight.same_shape(grad)) throw std::invalid_argument("sgd_update: shape mismatch");
  if (!grad.all_finite()) throw std::runtime_error("sgd_update: non-finite gradient");
  weight.add_scaled(grad, -learning_rate);
}

inline void sgd_step(GcnStack& stack, const Gradients& grads, double learning_rate) {
  if (grads.layer_grads.size() != stack.layers.size())
    throw std::invalid_argument("sgd_step: gradient/layer count mismatch");
  for (std::size_t k = 0; k < stack.layers.size(); ++k)
    sgd_update(stack.layers[k].weight, grads.layer_grads[k], learning_rate);
}

}  // namespace pgcn
