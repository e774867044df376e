#pragma once

#include <vector>

#include "cmfd/core.hpp"

namespace cmfd {

// A matched point in image coordinates with its match confidence.
struct MatchedPoint {
  int x = 0, y = 0;
  double score = 0;  // in [0,1]
};

// One correspondence between two keypoints (image frame).
struct Correspondence {
  int x1 = 0, y1 = 0;
  int x2 = 0, y2 = 0;
  double score = 0;
};

// Aggregated matching result across all proposal pairs. Both endpoints of
// every correspondence contribute a MatchedPoint.
struct MatchSet {
  std::vector<MatchedPoint> points;
  std::vector<Correspondence> correspondences;
  std::vector<int> matched_proposals;  // indices of proposals with >= 1 matched point

  bool empty() const { return points.empty(); }
};

}  // namespace cmfd
