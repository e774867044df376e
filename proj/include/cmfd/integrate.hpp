#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "cmfd/box.hpp"
#include "cmfd/core.hpp"
#include "cmfd/matchset.hpp"
#include "cmfd/superpixel.hpp"

namespace cmfd {

struct FusionParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = -0.5;
  double phi = 4.0;  // amplifying factor

  void validate() const { require(phi > 0, "FusionParams: phi must be positive"); }
};

// Spreads every matched point's score over its superpixel. Pixels reached by
// several matched points keep the maximum score; untouched pixels stay 0.
inline ScoreMap project_matches(const SuperpixelLabels& sp, const MatchSet& matches) {
  const int h = sp.labels.rows(), w = sp.labels.cols();
  ScoreMap out(h, w, 0.0);
  if (matches.points.empty()) return out;
  std::unordered_map<int, double> region_score;
  for (const MatchedPoint& m : matches.points) {
    require(m.x >= 0 && m.x < w && m.y >= 0 && m.y < h,
            "project_matches: matched point out of bounds");
    int label = sp.labels.at(m.y, m.x);
    auto it = region_score.find(label);
    if (it == region_score.end()) {
      region_score.emplace(label, m.score);
    } else if (m.score > it->second) {
      it->second = m.score;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto it = region_score.find(sp.labels.at(y, x));
      if (it != region_score.end()) out.at(y, x) = it->second;
    }
  }
  return out;
}

// Backbone scores kept inside the union of matched proposals, zero elsewhere.
inline ScoreMap proposal_score_mask(const ScoreMap& s,
                                    const std::vector<Box>& matched_proposals) {
  ScoreMap out(s.rows(), s.cols(), 0.0);
  for (const Box& b : matched_proposals) {
    require(b.valid_within(s.cols(), s.rows()), "proposal_score_mask: box out of bounds");
    for (int y = b.y1; y < b.y2; ++y) {
      for (int x = b.x1; x < b.x2; ++x) out.at(y, x) = s.at(y, x);
    }
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Integrated score map: sigmoid(phi * (alpha*S_sp + beta*S_p + gamma)).
inline ScoreMap integrate(const ScoreMap& s_sp, const ScoreMap& s_p,
                          const FusionParams& params = {}) {
  params.validate();
  require(s_sp.same_shape(s_p), "integrate: shape mismatch");
  ScoreMap out(s_sp.rows(), s_sp.cols());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = sigmoid(params.phi *
                     (params.alpha * s_sp[i] + params.beta * s_p[i] + params.gamma));
  }
  return out;
}

}  // namespace cmfd
