#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "cmfd/core.hpp"
#include "cmfd/crf.hpp"  // ColorImage

namespace cmfd {

struct SuperpixelLabels {
  LabelMap labels;
  int count = 0;
};

namespace detail {

// Flood-fill relabeling: guarantees contiguous regions, compact ids in
// [0,count) and no empty label. Fragments smaller than min_size are absorbed
// into the neighboring region discovered first.
inline SuperpixelLabels enforce_connectivity(const LabelMap& raw, int min_size) {
  const int h = raw.rows(), w = raw.cols();
  SuperpixelLabels out{LabelMap(h, w, -1), 0};
  const int dx[] = {1, -1, 0, 0};
  const int dy[] = {0, 0, 1, -1};
  std::vector<int> component;
  component.reserve(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (out.labels.at(y, x) >= 0) continue;
      component.clear();
      int adjacent = -1;  // a finished neighboring region, if any
      std::deque<int> queue{y * w + x};
      out.labels.at(y, x) = out.count;
      while (!queue.empty()) {
        int p = queue.front();
        queue.pop_front();
        component.push_back(p);
        int py = p / w, px = p % w;
        for (int k = 0; k < 4; ++k) {
          int ny = py + dy[k], nx = px + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          int nl = out.labels.at(ny, nx);
          if (nl >= 0 && nl != out.count) adjacent = nl;
          if (nl < 0 && raw.at(ny, nx) == raw.at(y, x)) {
            out.labels.at(ny, nx) = out.count;
            queue.push_back(ny * w + nx);
          }
        }
      }
      if (static_cast<int>(component.size()) < min_size && adjacent >= 0) {
        for (int p : component) out.labels[p] = adjacent;
      } else {
        ++out.count;
      }
    }
  }
  return out;
}

}  // namespace detail

// Grid-seeded iterative color clustering: k-means over (color, position)
// with seeds on a regular grid and a local search window. The fallback
// segmenter behind the pluggable superpixel interface.
inline SuperpixelLabels superpixel_segment_grid(const ColorImage& image,
                                                int target_regions,
                                                double compactness = 10.0,
                                                int iterations = 10) {
  const int h = image.rows(), w = image.cols();
  const long long n = static_cast<long long>(h) * w;
  require(target_regions >= 1, "superpixel_segment: target_regions must be >= 1");
  require(target_regions <= n, "superpixel_segment: target_regions exceeds pixel count");

  int ny = std::max(1, (int)std::lround(std::sqrt((double)target_regions * h / w)));
  int nx = std::max(1, (int)std::lround((double)target_regions / ny));
  ny = std::min(ny, h);
  nx = std::min(nx, w);
  const double step_x = double(w) / nx, step_y = double(h) / ny;
  const double step = std::max(step_x, step_y);

  struct Center {
    double x, y;
    Color3 color;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<size_t>(nx) * ny);
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      int cx = std::min(w - 1, (int)((gx + 0.5) * step_x));
      int cy = std::min(h - 1, (int)((gy + 0.5) * step_y));
      centers.push_back({double(cx), double(cy), image.at(cy, cx)});
    }
  }

  LabelMap labels(h, w, 0);
  Mat2D<double> best(h, w);
  const double spatial_weight = (compactness * compactness) / (step * step);
  for (int iter = 0; iter < iterations; ++iter) {
    best.fill(std::numeric_limits<double>::infinity());
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      int x0 = std::max(0, (int)(c.x - 2 * step)), x1 = std::min(w - 1, (int)(c.x + 2 * step));
      int y0 = std::max(0, (int)(c.y - 2 * step)), y1 = std::min(h - 1, (int)(c.y + 2 * step));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Color3& p = image.at(y, x);
          double dc = (p[0] - c.color[0]) * (p[0] - c.color[0]) +
                      (p[1] - c.color[1]) * (p[1] - c.color[1]) +
                      (p[2] - c.color[2]) * (p[2] - c.color[2]);
          double ds = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
          double d = dc + spatial_weight * ds;
          if (d < best.at(y, x)) {
            best.at(y, x) = d;
            labels.at(y, x) = (int)ci;
          }
        }
      }
    }
    // recompute centers
    std::vector<double> sx(centers.size(), 0), sy(centers.size(), 0), cnt(centers.size(), 0);
    std::vector<Color3> sc(centers.size(), Color3{0, 0, 0});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int l = labels.at(y, x);
        sx[l] += x;
        sy[l] += y;
        for (int k = 0; k < 3; ++k) sc[l][k] += image.at(y, x)[k];
        cnt[l] += 1;
      }
    }
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      if (cnt[ci] <= 0) continue;
      centers[ci].x = sx[ci] / cnt[ci];
      centers[ci].y = sy[ci] / cnt[ci];
      for (int k = 0; k < 3; ++k) centers[ci].color[k] = sc[ci][k] / cnt[ci];
    }
  }

  int min_size = std::max(1, (int)(n / (4LL * centers.size())));
  return detail::enforce_connectivity(labels, min_size);
}

}  // namespace cmfd
