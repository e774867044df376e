#pragma once

// Independent transcription of the proposal selection strategy, kept
// deliberately naive (no caching, per-pixel rescoring everywhere) so the
// production implementation can be checked against it. Test-only code.

#include <array>
#include <vector>

#include "cmfd/core.hpp"
#include "cmfd/tensor.hpp"

namespace reference {

using IBox = std::array<int, 4>;  // x1, y1, x2, y2 over [x1,x2) x [y1,y2)

inline double ref_avg(const cmfd::ScoreMap& s, const IBox& b) {
  double total = 0;
  int count = 0;
  for (int y = b[1]; y < b[3]; ++y) {
    for (int x = b[0]; x < b[2]; ++x) {
      total += s.at(y, x);
      ++count;
    }
  }
  return total / count;
}

inline long long ref_area(const IBox& b) {
  return (long long)(b[2] - b[0]) * (long long)(b[3] - b[1]);
}

inline long long ref_inter(const IBox& a, const IBox& b) {
  int x1 = a[0] > b[0] ? a[0] : b[0];
  int y1 = a[1] > b[1] ? a[1] : b[1];
  int x2 = a[2] < b[2] ? a[2] : b[2];
  int y2 = a[3] < b[3] ? a[3] : b[3];
  if (x2 <= x1 || y2 <= y1) return 0;
  return (long long)(x2 - x1) * (long long)(y2 - y1);
}

inline double ref_iou(const IBox& a, const IBox& b) {
  long long inter = ref_inter(a, b);
  long long uni = ref_area(a) + ref_area(b) - inter;
  return uni > 0 ? (double)inter / (double)uni : 0.0;
}

inline IBox ref_merge(const IBox& a, const IBox& b) {
  return {a[0] < b[0] ? a[0] : b[0], a[1] < b[1] ? a[1] : b[1],
          a[2] > b[2] ? a[2] : b[2], a[3] > b[3] ? a[3] : b[3]};
}

inline bool ref_small_enough(const IBox& b, const cmfd::ScoreMap& s, double max_frac) {
  return (double)ref_area(b) < max_frac * (double)s.rows() * (double)s.cols();
}

inline std::vector<IBox> ref_select(const cmfd::ScoreMap& s, const std::vector<IBox>& proposals,
                                    double s_t, double iou_t, double inter_t,
                                    double max_frac, int* sweeps_out = nullptr) {
  // ---- phase 1 ----
  std::vector<IBox> pt;
  for (size_t p = 0; p < proposals.size(); ++p) {
    IBox pp = proposals[p];
    if (!ref_small_enough(pp, s, max_frac)) continue;
    double sp = ref_avg(s, pp);
    if (!(sp > s_t)) continue;
    int flag = 1;
    for (size_t i = 0; i < pt.size(); ++i) {
      double v_iou = ref_iou(pt[i], pp);
      long long v_inter = ref_inter(pt[i], pp);
      if (v_iou > iou_t) {
        if (sp > ref_avg(s, pt[i])) {
          pt[i] = pp;
          flag = 0;
          break;
        }
      }
      if ((double)v_inter / (double)ref_area(pp) > inter_t ||
          (double)v_inter / (double)ref_area(pt[i]) > inter_t) {
        IBox pm = ref_merge(pp, pt[i]);
        if (ref_small_enough(pm, s, max_frac) && ref_avg(s, pm) > s_t) {
          pt[i] = pm;
          flag = 0;
          break;
        }
      }
    }
    if (flag == 1) pt.push_back(pp);
  }

  // ---- phase 2 ----
  int sweeps = 0;
  while (true) {
    ++sweeps;
    std::vector<IBox> ps;
    std::vector<int> used(pt.size(), 0);
    for (size_t i1 = 0; i1 < pt.size(); ++i1) {
      if (used[i1]) continue;
      bool merged_this = false;
      for (size_t i2 = i1 + 1; i2 < pt.size(); ++i2) {
        if (used[i2]) continue;
        long long v_inter = ref_inter(pt[i1], pt[i2]);
        double r1 = (double)v_inter / (double)ref_area(pt[i1]);
        double r2 = (double)v_inter / (double)ref_area(pt[i2]);
        if (r1 > inter_t || r2 > inter_t) {
          IBox pm = ref_merge(pt[i1], pt[i2]);
          if (ref_small_enough(pm, s, max_frac) && ref_avg(s, pm) > s_t) {
            ps.push_back(pm);
          } else {
            // insert the one with higher intersection rate; ties keep i1
            ps.push_back(r2 > r1 ? pt[i2] : pt[i1]);
          }
          used[i1] = used[i2] = 1;
          merged_this = true;
          break;
        }
      }
      if (!merged_this) {
        ps.push_back(pt[i1]);
        used[i1] = 1;
      }
    }
    bool stable = ps.size() == pt.size();
    pt = ps;
    if (stable) break;
  }
  if (sweeps_out) *sweeps_out = sweeps;
  return pt;
}

// Blobby random score map: a few Gaussian bumps over a noise floor.
inline cmfd::ScoreMap fuzz_score_map(int size, cmfd::Rng& rng) {
  cmfd::ScoreMap s(size, size);
  for (size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(0.0, 0.35);
  int blobs = rng.uniform_int(1, 4);
  for (int b = 0; b < blobs; ++b) {
    double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
    double sigma = rng.uniform(3.0, size / 3.0);
    double amp = rng.uniform(0.4, 0.9);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        s.at(y, x) = std::min(1.0, s.at(y, x) + amp * std::exp(-d2 / (2 * sigma * sigma)));
      }
    }
  }
  return s;
}

inline IBox fuzz_box(int size, cmfd::Rng& rng) {
  int x1 = rng.uniform_int(0, size - 2);
  int y1 = rng.uniform_int(0, size - 2);
  int x2 = rng.uniform_int(x1 + 1, size);
  int y2 = rng.uniform_int(y1 + 1, size);
  return {x1, y1, x2, y2};
}

}  // namespace reference
