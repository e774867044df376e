#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cmfd/box.hpp"
#include "cmfd/core.hpp"
#include "cmfd/matchset.hpp"

namespace cmfd {

using GrayImage = Mat2D<double>;  // luminance in 0..255

struct Keypoint {
  int x = 0, y = 0;               // image frame
  std::vector<double> descriptor;  // unit L2 norm
  double detection_score = 0;
};

struct KeypointSet {
  std::vector<Keypoint> points;
  int descriptor_dim = 0;
  bool empty() const { return points.empty(); }
};

struct PairMatch {
  int index1 = 0, index2 = 0;
  double score = 0;  // in [0,1]
};

using ExtractorFn = std::function<KeypointSet(const GrayImage&, const Box&)>;
using MatcherFn = std::function<std::vector<PairMatch>(const KeypointSet&, const KeypointSet&)>;

namespace detail {

inline void sobel_gradients(const GrayImage& img, Mat2D<double>& gx, Mat2D<double>& gy) {
  const int h = img.rows(), w = img.cols();
  gx = Mat2D<double>(h, w, 0.0);
  gy = Mat2D<double>(h, w, 0.0);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return img.at(y, x);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gx.at(y, x) = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                    (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      gy.at(y, x) = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                    (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
    }
  }
}

inline void box_blur3(Mat2D<double>& m) {
  const int h = m.rows(), w = m.cols();
  Mat2D<double> out(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          sum += m.at(ny, nx);
          ++n;
        }
      }
      out.at(y, x) = sum / n;
    }
  }
  m = std::move(out);
}

// 8x8 grid of 3px cells around the keypoint; each cell accumulates the
// positive and negative parts of both gradient components -> 256 dims.
inline std::vector<double> patch_gradient_descriptor(const Mat2D<double>& gx,
                                                     const Mat2D<double>& gy,
                                                     int cx, int cy) {
  constexpr int kGrid = 8, kCell = 3;
  constexpr int kHalf = kGrid * kCell / 2;
  std::vector<double> desc(kGrid * kGrid * 4, 0.0);
  const int h = gx.rows(), w = gx.cols();
  for (int oy = 0; oy < kGrid * kCell; ++oy) {
    int y = cy - kHalf + oy;
    if (y < 0 || y >= h) continue;
    for (int ox = 0; ox < kGrid * kCell; ++ox) {
      int x = cx - kHalf + ox;
      if (x < 0 || x >= w) continue;
      int cell = (oy / kCell) * kGrid + (ox / kCell);
      double vx = gx.at(y, x), vy = gy.at(y, x);
      desc[cell * 4 + 0] += std::max(vx, 0.0);
      desc[cell * 4 + 1] += std::max(-vx, 0.0);
      desc[cell * 4 + 2] += std::max(vy, 0.0);
      desc[cell * 4 + 3] += std::max(-vy, 0.0);
    }
  }
  double norm = 0;
  for (double v : desc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-9) return {};
  for (double& v : desc) v /= norm;
  return desc;
}

inline double descriptor_distance2(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  double d = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace detail

struct HarrisOptions {
  double k = 0.04;
  double relative_threshold = 0.01;  // of the max response in the crop
  double absolute_floor = 1e3;       // rejects flat crops entirely
  int max_keypoints = 512;
  int crop_pad = 8;  // context around the proposal for border stability
};

// Fallback extractor: Harris corners with normalized patch-gradient
// descriptors. Coordinates are reported in the full-image frame and clipped
// to the proposal interior.
inline KeypointSet extract_keypoints_harris(const GrayImage& image, const Box& box,
                                            const HarrisOptions& opt = {}) {
  require(box.valid_within(image.cols(), image.rows()),
          "extract_keypoints: box out of bounds");
  KeypointSet out;
  out.descriptor_dim = 256;

  Box crop{std::max(0, box.x1 - opt.crop_pad), std::max(0, box.y1 - opt.crop_pad),
           std::min(image.cols(), box.x2 + opt.crop_pad),
           std::min(image.rows(), box.y2 + opt.crop_pad)};
  const int ch = crop.y2 - crop.y1, cw = crop.x2 - crop.x1;
  if (ch < 8 || cw < 8) return out;  // degenerate box

  GrayImage patch(ch, cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) patch.at(y, x) = image.at(crop.y1 + y, crop.x1 + x);

  Mat2D<double> gx, gy;
  detail::sobel_gradients(patch, gx, gy);
  Mat2D<double> ixx(ch, cw), iyy(ch, cw), ixy(ch, cw);
  for (size_t i = 0; i < ixx.size(); ++i) {
    ixx[i] = gx[i] * gx[i];
    iyy[i] = gy[i] * gy[i];
    ixy[i] = gx[i] * gy[i];
  }
  detail::box_blur3(ixx);
  detail::box_blur3(iyy);
  detail::box_blur3(ixy);

  Mat2D<double> response(ch, cw);
  double max_r = 0;
  for (size_t i = 0; i < response.size(); ++i) {
    double det = ixx[i] * iyy[i] - ixy[i] * ixy[i];
    double tr = ixx[i] + iyy[i];
    response[i] = det - opt.k * tr * tr;
    max_r = std::max(max_r, response[i]);
  }
  if (max_r <= opt.absolute_floor) return out;

  struct Candidate {
    double r;
    int x, y;
  };
  std::vector<Candidate> candidates;
  const double threshold = std::max(opt.absolute_floor, opt.relative_threshold * max_r);
  for (int y = 1; y < ch - 1; ++y) {
    for (int x = 1; x < cw - 1; ++x) {
      double r = response.at(y, x);
      if (r <= threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (response.at(y + dy, x + dx) > r) {
            is_max = false;
            break;
          }
        }
      int ix = crop.x1 + x, iy = crop.y1 + y;
      if (is_max && box.contains(ix, iy)) candidates.push_back({r, ix, iy});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.r != b.r) return a.r > b.r;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(candidates.size()) > opt.max_keypoints)
    candidates.resize(opt.max_keypoints);

  for (const Candidate& c : candidates) {
    auto desc = detail::patch_gradient_descriptor(gx, gy, c.x - crop.x1, c.y - crop.y1);
    if (desc.empty()) continue;
    out.points.push_back({c.x, c.y, std::move(desc), c.r / max_r});
  }
  return out;
}

struct RatioMatchOptions {
  double ratio = 0.75;
  double min_separation = 0.0;  // spatial floor, used for intra-set matching
  bool same_set = false;        // exclude identical indices
};

// Mutual nearest neighbour matching with Lowe's ratio test. Match score is
// 1 - ratio. Returns a partial one-to-one assignment.
inline std::vector<PairMatch> match_ratio_mutual(const KeypointSet& k1,
                                                 const KeypointSet& k2,
                                                 const RatioMatchOptions& opt = {}) {
  if (k1.empty() || k2.empty()) return {};
  require(k1.descriptor_dim == k2.descriptor_dim,
          "match_pair: descriptor dimension mismatch");

  const double min_sep2 = opt.min_separation * opt.min_separation;
  auto admissible = [&](int i, int j) {
    if (opt.same_set && i == j) return false;
    double dx = k1.points[i].x - k2.points[j].x;
    double dy = k1.points[i].y - k2.points[j].y;
    return dx * dx + dy * dy >= min_sep2;
  };

  struct Best {
    int idx = -1;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
  };
  auto nearest = [&](const KeypointSet& from, const KeypointSet& to, bool swap_args) {
    std::vector<Best> best(from.points.size());
    for (size_t i = 0; i < from.points.size(); ++i) {
      for (size_t j = 0; j < to.points.size(); ++j) {
        bool ok = swap_args ? admissible((int)j, (int)i) : admissible((int)i, (int)j);
        if (!ok) continue;
        double d = detail::descriptor_distance2(from.points[i].descriptor,
                                                to.points[j].descriptor);
        if (d < best[i].d1) {
          best[i].d2 = best[i].d1;
          best[i].d1 = d;
          best[i].idx = (int)j;
        } else if (d < best[i].d2) {
          best[i].d2 = d;
        }
      }
    }
    return best;
  };

  auto fwd = nearest(k1, k2, false);
  auto bwd = nearest(k2, k1, true);

  // Ratio of best to second-best distance, 0 when only one candidate exists.
  auto ratio_of = [](const Best& b) {
    double d1 = std::sqrt(b.d1), d2 = std::sqrt(b.d2);
    if (std::isinf(d2)) return 0.0;
    if (d2 > 0) return d1 / d2;
    return d1 > 0 ? 1.0 : 0.0;
  };

  std::vector<PairMatch> matches;
  for (size_t i = 0; i < fwd.size(); ++i) {
    int j = fwd[i].idx;
    if (j < 0) continue;
    if (bwd[j].idx != (int)i) continue;  // mutual check
    // Test both directions so match_pair(K1,K2) mirrors match_pair(K2,K1).
    double ratio = std::max(ratio_of(fwd[i]), ratio_of(bwd[j]));
    if (ratio >= opt.ratio) continue;
    double score = std::clamp(1.0 - ratio, 0.0, 1.0);
    matches.push_back({(int)i, j, score});
  }
  return matches;
}

// Named plug-in registries. Only the classical fallback ships; deep
// extractors/matchers can be registered by embedding applications.
class KeypointPlugins {
 public:
  static KeypointPlugins& instance() {
    static KeypointPlugins reg;
    return reg;
  }

  void register_extractor(const std::string& name, ExtractorFn fn) {
    extractors_[name] = std::move(fn);
  }
  void register_matcher(const std::string& name, MatcherFn fn) {
    matchers_[name] = std::move(fn);
  }

  ExtractorFn extractor(const std::string& name) const {
    auto it = extractors_.find(name);
    require(it != extractors_.end(), "unknown keypoint extractor '" + name +
                                         "' (registered: " + names(extractors_) + ")");
    return it->second;
  }
  MatcherFn matcher(const std::string& name) const {
    auto it = matchers_.find(name);
    require(it != matchers_.end(), "unknown keypoint matcher '" + name +
                                       "' (registered: " + names(matchers_) + ")");
    return it->second;
  }

 private:
  KeypointPlugins() {
    extractors_["classical"] = [](const GrayImage& img, const Box& box) {
      return extract_keypoints_harris(img, box);
    };
    matchers_["classical"] = [](const KeypointSet& a, const KeypointSet& b) {
      return match_ratio_mutual(a, b);
    };
  }

  template <typename M>
  static std::string names(const M& m) {
    std::string s;
    for (const auto& [k, v] : m) {
      if (!s.empty()) s += ", ";
      s += k;
    }
    return s;
  }

  std::map<std::string, ExtractorFn> extractors_;
  std::map<std::string, MatcherFn> matchers_;
};

struct MatchAllOptions {
  std::string extractor = "classical";
  std::string matcher = "classical";
  double self_separation_fraction = 0.1;  // of the proposal diagonal
};

// Pairwise matching over all unordered proposal pairs plus intra-proposal
// self matching. A merged proposal can hold both the source and the pasted
// copy, so self matches are kept but constrained by a separation floor.
inline MatchSet match_all_pairs(const GrayImage& image, const std::vector<Box>& proposals,
                                const MatchAllOptions& opt = {}) {
  MatchSet out;
  if (proposals.empty()) return out;
  auto extractor = KeypointPlugins::instance().extractor(opt.extractor);
  auto matcher = KeypointPlugins::instance().matcher(opt.matcher);

  std::vector<KeypointSet> sets;
  sets.reserve(proposals.size());
  for (const Box& b : proposals) sets.push_back(extractor(image, b));

  std::vector<char> matched(proposals.size(), 0);
  auto add = [&](const KeypointSet& a, const KeypointSet& b,
                 const std::vector<PairMatch>& pm, int pa, int pb) {
    for (const PairMatch& m : pm) {
      const Keypoint& p1 = a.points[m.index1];
      const Keypoint& p2 = b.points[m.index2];
      out.correspondences.push_back({p1.x, p1.y, p2.x, p2.y, m.score});
      out.points.push_back({p1.x, p1.y, m.score});
      out.points.push_back({p2.x, p2.y, m.score});
      matched[pa] = matched[pb] = 1;
    }
  };

  for (size_t i = 0; i < proposals.size(); ++i) {
    for (size_t j = i + 1; j < proposals.size(); ++j) {
      add(sets[i], sets[j], matcher(sets[i], sets[j]), (int)i, (int)j);
    }
    // Intra-proposal self matching goes through the fallback matcher with a
    // spatial separation floor regardless of the configured pair matcher.
    const Box& b = proposals[i];
    double diag = std::hypot(double(b.x2 - b.x1), double(b.y2 - b.y1));
    RatioMatchOptions self_opt;
    self_opt.same_set = true;
    self_opt.min_separation = opt.self_separation_fraction * diag;
    auto self_matches = match_ratio_mutual(sets[i], sets[i], self_opt);
    // A self pair appears twice (i->j and j->i); keep one orientation.
    self_matches.erase(std::remove_if(self_matches.begin(), self_matches.end(),
                                      [](const PairMatch& m) { return m.index1 >= m.index2; }),
                       self_matches.end());
    add(sets[i], sets[i], self_matches, (int)i, (int)i);
  }
  for (size_t i = 0; i < proposals.size(); ++i) {
    if (matched[i]) out.matched_proposals.push_back((int)i);
  }
  return out;
}

}  // namespace cmfd
