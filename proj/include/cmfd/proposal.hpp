#pragma once

#include <vector>

#include "cmfd/box.hpp"
#include "cmfd/core.hpp"

namespace cmfd {

struct SelectionParams {
  double s_t = 0.4;      // proposal score threshold
  double iou_t = 0.5;    // IoU threshold for the replace branch
  double inter_t = 0.8;  // intersection-rate threshold for merging
  double max_area_fraction = 0.5;

  void validate() const {
    require(s_t > 0 && s_t <= 1, "SelectionParams: s_t out of (0,1]");
    require(iou_t > 0 && iou_t <= 1, "SelectionParams: iou_t out of (0,1]");
    require(inter_t > 0 && inter_t <= 1, "SelectionParams: inter_t out of (0,1]");
    require(max_area_fraction > 0 && max_area_fraction <= 1,
            "SelectionParams: max_area_fraction out of (0,1]");
  }
};

namespace detail {

inline bool area_ok(const Box& b, long long image_area, double max_fraction) {
  return static_cast<double>(b.area()) < max_fraction * static_cast<double>(image_area);
}

}  // namespace detail

// Two-phase proposal selection over externally generated boxes.
//
// Phase 1 walks the proposals in input order. A proposal whose average score
// exceeds s_t either replaces an accepted box it strongly overlaps (IoU >
// iou_t, strictly higher score), merges into one it intersects heavily
// (either intersection rate > inter_t and the merged box still scores above
// s_t), or is appended. The IoU branch is evaluated before the intersection
// branch for each accepted box, and the first action taken ends the scan.
//
// Phase 2 sweeps pairs of accepted boxes, merging any pair with a large
// intersection rate. A merge whose combined box scores above s_t replaces the
// pair; otherwise the box with the higher intersection rate survives. Sweeps
// repeat until a pass makes no change; each acting sweep shortens the list,
// so at most |input| sweeps run.
//
// Boxes at least max_area_fraction of the image are dropped up front, and
// merged boxes that grow past that bound are treated as if their score
// failed.
inline std::vector<Box> select_proposals(const ScoreMap& score_map,
                                         const std::vector<Box>& proposals,
                                         const SelectionParams& params = {},
                                         int* phase2_sweeps = nullptr) {
  params.validate();
  const long long image_area =
      static_cast<long long>(score_map.rows()) * score_map.cols();
  for (const Box& b : proposals) {
    require(b.valid_within(score_map.cols(), score_map.rows()),
            "select_proposals: proposal out of bounds");
  }

  struct Scored {
    Box box;
    double score;
  };

  const auto fits = [&](const Box& b) {
    return detail::area_ok(b, image_area, params.max_area_fraction);
  };

  // Phase 1: select / replace / merge against the accepted list.
  std::vector<Scored> accepted;
  for (const Box& p : proposals) {
    if (!fits(p)) continue;
    double sp = avg_score(score_map, p);
    if (!(sp > params.s_t)) continue;
    bool append = true;
    for (auto& entry : accepted) {
      long long inter = intersection_area(entry.box, p);
      double v_iou = iou(entry.box, p);
      if (v_iou > params.iou_t) {
        if (sp > entry.score) {
          entry = {p, sp};
          append = false;
          break;
        }
      }
      double rate_p = static_cast<double>(inter) / static_cast<double>(p.area());
      double rate_e = static_cast<double>(inter) / static_cast<double>(entry.box.area());
      if (rate_p > params.inter_t || rate_e > params.inter_t) {
        Box merged = merge_boxes(p, entry.box);
        if (fits(merged) && avg_score(score_map, merged) > params.s_t) {
          entry = {merged, avg_score(score_map, merged)};
          append = false;
          break;
        }
      }
    }
    if (append) accepted.push_back({p, sp});
  }

  // Phase 2: pairwise merge sweeps until the list is stable.
  std::vector<Box> current;
  current.reserve(accepted.size());
  for (const auto& e : accepted) current.push_back(e.box);

  int sweeps = 0;
  while (true) {
    ++sweeps;
    const size_t n = current.size();
    std::vector<Box> next;
    std::vector<char> consumed(n, 0);
    for (size_t i = 0; i < n; ++i) {
      if (consumed[i]) continue;
      bool acted = false;
      for (size_t j = i + 1; j < n && !acted; ++j) {
        if (consumed[j]) continue;
        long long inter = intersection_area(current[i], current[j]);
        double rate_i = static_cast<double>(inter) / static_cast<double>(current[i].area());
        double rate_j = static_cast<double>(inter) / static_cast<double>(current[j].area());
        if (!(rate_i > params.inter_t || rate_j > params.inter_t)) continue;
        Box merged = merge_boxes(current[i], current[j]);
        if (fits(merged) && avg_score(score_map, merged) > params.s_t) {
          next.push_back(merged);
        } else {
          // Keep the box with the higher intersection rate; ties keep the
          // earlier-indexed box.
          next.push_back(rate_j > rate_i ? current[j] : current[i]);
        }
        consumed[i] = consumed[j] = 1;
        acted = true;
      }
      if (!acted) {
        next.push_back(current[i]);
        consumed[i] = 1;
      }
    }
    bool stable = next.size() == current.size();
    current = std::move(next);
    if (stable) break;
  }

  if (phase2_sweeps) *phase2_sweeps = sweeps;
  return current;
}

}  // namespace cmfd
