#pragma once

#include <algorithm>
#include <cstdint>

#include "cmfd/core.hpp"

namespace cmfd {

// Axis-aligned box over the half-open pixel grid [x1,x2) x [y1,y2).
struct Box {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  long long area() const {
    return static_cast<long long>(x2 - x1) * (y2 - y1);
  }

  bool valid_within(int width, int height) const {
    return 0 <= x1 && x1 < x2 && x2 <= width && 0 <= y1 && y1 < y2 && y2 <= height;
  }

  bool contains(int x, int y) const {
    return x >= x1 && x < x2 && y >= y1 && y < y2;
  }

  friend bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

inline long long intersection_area(const Box& a, const Box& b) {
  long long w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  long long h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0;
  return w * h;
}

inline double iou(const Box& a, const Box& b) {
  long long inter = intersection_area(a, b);
  long long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Smallest box covering both inputs.
inline Box merge_boxes(const Box& a, const Box& b) {
  return Box{std::min(a.x1, b.x1), std::min(a.y1, b.y1),
             std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

// Arithmetic mean of the score map over the box pixels.
inline double avg_score(const ScoreMap& s, const Box& b) {
  require(b.valid_within(s.cols(), s.rows()), "avg_score: box out of bounds");
  double sum = 0.0;
  for (int y = b.y1; y < b.y2; ++y) {
    const double* row = s.data() + static_cast<size_t>(y) * s.cols();
    for (int x = b.x1; x < b.x2; ++x) sum += row[x];
  }
  return sum / static_cast<double>(b.area());
}

}  // namespace cmfd
