#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "pgcn/interval.hpp"

namespace pgcn {

// An annotated action instance. Class labels start at 1; 0 is reserved for
// the background class.
struct GroundTruthInstance {
  Interval interval;
  int label;

  GroundTruthInstance(Interval iv, int lbl) : interval(iv), label(lbl) {
    if (label < 1) throw std::invalid_argument("GroundTruthInstance: label must be >= 1");
  }
};

// A candidate action interval with its pooled feature vectors. `feature` is
// the d-dimensional descriptor of the interval itself; `extended_feature` is
// the 3d-dimensional start/center/end descriptor of the interval grown by
// half its length on each side.
struct Proposal {
  int id = 0;
  Interval interval;
  std::vector<double> feature;
  std::vector<double> extended_feature;
  double confidence = 1.0;  // upstream proposal confidence, 1 when absent
  std::optional<GroundTruthInstance> gt;  // matched instance, when known

  Proposal(int id_, Interval iv) : id(id_), interval(iv) {}
};

inline void check_feature_dims(const std::vector<Proposal>& proposals) {
  if (proposals.empty()) return;
  const std::size_t d = proposals.front().feature.size();
  for (const Proposal& p : proposals) {
    if (p.feature.size() != d)
      throw std::invalid_argument("proposal " + std::to_string(p.id) +
                                  ": feature dimension differs from the rest of the video");
    if (!p.extended_feature.empty() && p.extended_feature.size() != 3 * d)
      throw std::invalid_argument("proposal " + std::to_string(p.id) +
                                  ": extended feature must be exactly 3x the base dimension");
  }
}

}  // namespace pgcn
