#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgcn/interval.hpp"
#include "pgcn/matrix.hpp"
#include "pgcn/rng.hpp"

namespace pgcn {

// Which denominator "best overlap" uses when labeling training samples.
enum class OverlapDenominator { proposal_length, gt_length };

struct LossConfig {
  double lambda1 = 0.5;  // regression term weight
  double lambda2 = 0.5;  // completeness term weight
  double ce_weight = 1.0;

  // sample-labeling thresholds: theta1 foreground tIoU, theta2 incomplete
  // overlap, theta3 incomplete tIoU ceiling, theta4 background tIoU ceiling
  double theta1 = 0.7;
  double theta2 = 0.7;
  double theta3 = 0.3;
  double theta4 = 0.0;
  OverlapDenominator overlap_denominator = OverlapDenominator::proposal_length;

  static LossConfig thumos() { return LossConfig{}; }

  static LossConfig activitynet() {
    LossConfig c;
    c.theta3 = 0.6;
    c.theta4 = 0.1;
    return c;
  }

  void validate() const {
    if (!(theta3 < theta1))
      throw std::invalid_argument("LossConfig: require theta3 < theta1");
    if (!(theta4 < theta3))
      throw std::invalid_argument("LossConfig: require theta4 < theta3");
    if (lambda1 < 0.0 || lambda2 < 0.0 || ce_weight < 0.0)
      throw std::invalid_argument("LossConfig: negative loss weights");
  }
};

// One linear head: y = x W + b.
struct LinearHead {
  Matrix weight;  // d_in x d_out
  std::vector<double> bias;

  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }
};

inline LinearHead make_head(int d_in, int d_out, Rng& rng) {
  LinearHead h;
  const double bound = std::sqrt(6.0 / (d_in + d_out));
  h.weight = Matrix(d_in, d_out);
  for (int i = 0; i < d_in; ++i)
    for (int j = 0; j < d_out; ++j) h.weight(i, j) = rng.uniform(-bound, bound);
  h.bias.assign(d_out, 0.0);
  return h;
}

inline Matrix head_forward(const LinearHead& head, const Matrix& x) {
  if (x.cols() != head.in_dim())
    throw std::invalid_argument("head_forward: input dim " + std::to_string(x.cols()) +
                                " != head dim " + std::to_string(head.in_dim()));
  Matrix y = matmul(x, head.weight);
  for (int r = 0; r < y.rows(); ++r)
    for (int c = 0; c < y.cols(); ++c) y(r, c) += head.bias[c];
  return y;
}

// The three prediction heads. Action classification spans the background
// class (N_class + 1 outputs); completeness and boundary regression are
// per-action-class.
struct HeadParams {
  LinearHead action;        // -> N_class + 1 logits
  LinearHead completeness;  // -> N_class raw scores
  LinearHead regression;    // -> N_class * 2 offsets (center, length)
};

inline HeadParams make_heads(int cls_in, int loc_in, int n_class, Rng& rng) {
  HeadParams h;
  h.action = make_head(cls_in, n_class + 1, rng);
  h.completeness = make_head(loc_in, n_class, rng);
  h.regression = make_head(loc_in, 2 * n_class, rng);
  return h;
}

// Numerically stable softmax over a logits row.
inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Class probabilities for one proposal (softmax over FC output).
inline std::vector<double> classify_actions(const LinearHead& head,
                                            std::span<const double> features) {
  Matrix x(1, static_cast<int>(features.size()));
  std::copy(features.begin(), features.end(), x.row(0).data());
  const Matrix logits = head_forward(head, x);
  return softmax(logits.row(0));
}

// Per-class (center, length) offsets for one proposal; plain linear output.
inline std::vector<Offset> regress_boundaries(const LinearHead& head,
                                              std::span<const double> features) {
  Matrix x(1, static_cast<int>(features.size()));
  std::copy(features.begin(), features.end(), x.row(0).data());
  const Matrix out = head_forward(head, x);
  std::vector<Offset> offsets(out.cols() / 2);
  for (std::size_t m = 0; m < offsets.size(); ++m)
    offsets[m] = Offset{out(0, static_cast<int>(2 * m)), out(0, static_cast<int>(2 * m + 1))};
  return offsets;
}

// Per-class completeness scores for one proposal; unbounded, no softmax.
inline std::vector<double> score_completeness(const LinearHead& head,
                                              std::span<const double> features) {
  Matrix x(1, static_cast<int>(features.size()));
  std::copy(features.begin(), features.end(), x.row(0).data());
  const Matrix out = head_forward(head, x);
  return {out.row(0).begin(), out.row(0).end()};
}

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
}

// Margin-1 hinge on a completeness score against a +-1 target.
inline double hinge_completeness(int target, double score) {
  return std::max(0.0, 1.0 - target * score);
}

inline double hinge_grad(int target, double score) {
  return 1.0 - target * score > 0.0 ? -static_cast<double>(target) : 0.0;
}

// Per-sample targets for the multi-task loss, parallel to the batch rows.
struct BatchTargets {
  std::vector<int> class_target;                        // 0..N_class, 0 = background
  std::vector<int> completeness_target;                 // +-1, read when class >= 1
  std::vector<std::optional<Offset>> regression_target;  // set for foreground only

  int size() const { return static_cast<int>(class_target.size()); }
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double reg = 0.0;  // already scaled by lambda1
  double com = 0.0;  // already scaled by lambda2
  int correct = 0;   // argmax class hits, for accuracy logging
};

// Multi-task objective over one mini-batch: cross-entropy on every sample,
// smooth-L1 boundary regression on foreground samples (target-class slot
// only), hinge completeness on non-background samples. When gradient sinks
// are passed they receive d(loss)/d(head output).
inline LossBreakdown multitask_loss(const Matrix& action_logits, const Matrix& completeness_out,
                                    const Matrix& regression_out, const BatchTargets& targets,
                                    const LossConfig& config, Matrix* d_logits = nullptr,
                                    Matrix* d_completeness = nullptr,
                                    Matrix* d_regression = nullptr) {
  const int batch = targets.size();
  if (batch == 0) throw std::invalid_argument("multitask_loss: empty batch");
  if (action_logits.rows() != batch || completeness_out.rows() != batch ||
      regression_out.rows() != batch)
    throw std::invalid_argument("multitask_loss: prediction/target row mismatch");
  const int n_class = completeness_out.cols();
  if (action_logits.cols() != n_class + 1 || regression_out.cols() != 2 * n_class)
    throw std::invalid_argument("multitask_loss: head width mismatch");

  if (d_logits) *d_logits = Matrix(batch, n_class + 1);
  if (d_completeness) *d_completeness = Matrix(batch, n_class);
  if (d_regression) *d_regression = Matrix(batch, 2 * n_class);

  LossBreakdown out;
  for (int i = 0; i < batch; ++i) {
    const int y = targets.class_target[i];
    if (y < 0 || y > n_class)
      throw std::invalid_argument("multitask_loss: class target out of range");

    const auto p = softmax(action_logits.row(i));
    out.ce += config.ce_weight * -std::log(std::max(p[y], 1e-300));
    int argmax = 0;
    for (int c = 1; c <= n_class; ++c)
      if (p[c] > p[argmax]) argmax = c;
    out.correct += argmax == y;
    if (d_logits)
      for (int c = 0; c <= n_class; ++c)
        (*d_logits)(i, c) = config.ce_weight * (p[c] - (c == y ? 1.0 : 0.0));

    if (y >= 1) {
      const int e = targets.completeness_target[i];
      const double score = completeness_out(i, y - 1);
      out.com += config.lambda2 * hinge_completeness(e, score);
      if (d_completeness)
        (*d_completeness)(i, y - 1) = config.lambda2 * hinge_grad(e, score);

      if (targets.regression_target[i].has_value()) {
        const Offset& target = *targets.regression_target[i];
        const double dc = regression_out(i, 2 * (y - 1)) - target.center_offset;
        const double dl = regression_out(i, 2 * (y - 1) + 1) - target.length_offset;
        out.reg += config.lambda1 * (smooth_l1(dc) + smooth_l1(dl));
        if (d_regression) {
          (*d_regression)(i, 2 * (y - 1)) = config.lambda1 * smooth_l1_grad(dc);
          (*d_regression)(i, 2 * (y - 1) + 1) = config.lambda1 * smooth_l1_grad(dl);
        }
      }
    }
  }
  out.total = out.ce + out.reg + out.com;
  return out;
}

}  // namespace pgcn
