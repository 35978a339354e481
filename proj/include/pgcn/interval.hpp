#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pgcn {

// A temporal interval in seconds. Strictly positive length is enforced at
// construction so the interval algebra below never divides by zero.
struct Interval {
  double start;
  double end;

  Interval(double s, double e) : start(s), end(e) {
    if (!std::isfinite(s) || !std::isfinite(e))
      throw std::invalid_argument("Interval: non-finite endpoint");
    if (!(e > s))
      throw std::invalid_argument("Interval: end (" + std::to_string(e) +
                                  ") must be greater than start (" + std::to_string(s) + ")");
  }

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
};

inline double intersection_length(const Interval& a, const Interval& b) {
  return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

// Union as a measure: len(a) + len(b) - overlap. Disjoint intervals therefore
// contribute the sum of their lengths, not the spanning interval.
inline double union_length(const Interval& a, const Interval& b) {
  return a.length() + b.length() - intersection_length(a, b);
}

// Temporal intersection-over-union. Symmetric, in [0, 1].
inline double tiou(const Interval& a, const Interval& b) {
  return intersection_length(a, b) / union_length(a, b);
}

// Normalized center distance |c_a - c_b| / union used to relate disjoint
// but nearby proposals.
inline double surround_distance(const Interval& a, const Interval& b) {
  return std::abs(a.center() - b.center()) / union_length(a, b);
}

// Boundary-regression target: a proposal-relative encoding of a target
// interval as (normalized center shift, log length ratio).
struct Offset {
  double center_offset = 0.0;  // (c_proposal - c_target) / len_proposal
  double length_offset = 0.0;  // ln(len_proposal / len_target)
};

inline Offset encode_offset(const Interval& proposal, const Interval& target) {
  Offset o;
  o.center_offset = (proposal.center() - target.center()) / proposal.length();
  o.length_offset = std::log(proposal.length() / target.length());
  return o;
}

// Inverse of encode_offset: recover the target interval from a proposal and
// an offset. Guards against overflowed exp() producing a degenerate interval.
inline Interval decode_offset(const Interval& proposal, const Offset& offset) {
  if (!std::isfinite(offset.center_offset) || !std::isfinite(offset.length_offset))
    throw std::domain_error("decode_offset: non-finite offset");
  const double center = proposal.center() - offset.center_offset * proposal.length();
  const double length = proposal.length() * std::exp(-offset.length_offset);
  if (!std::isfinite(length) || !(length > 0.0))
    throw std::domain_error("decode_offset: decoded length is not a positive finite value");
  return Interval(center - 0.5 * length, center + 0.5 * length);
}

}  // namespace pgcn
