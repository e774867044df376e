#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cmfd/core.hpp"

namespace cmfd {

struct CrfParams {
  double w1 = 3.0;       // appearance kernel weight
  double w2 = 1.0;       // smoothness kernel weight
  double theta_alpha = 13.0;  // appearance position bandwidth (pixels)
  double theta_beta = 13.0;   // appearance color bandwidth (8-bit units)
  double theta_gamma = 3.0;   // smoothness position bandwidth (pixels)
  int window = 11;       // truncation window width (odd)
  int iters = 5;

  void validate() const {
    require(theta_alpha > 0 && theta_beta > 0 && theta_gamma > 0,
            "CrfParams: bandwidths must be positive");
    require(window >= 3 && window % 2 == 1, "CrfParams: window must be odd >= 3");
    require(iters >= 1, "CrfParams: iters must be >= 1");
  }
};

// Two-label potential pair per pixel; channel 1 is the forged class.
struct UnaryField {
  Mat2D<double> u0, u1;
  int rows() const { return u0.rows(); }
  int cols() const { return u0.cols(); }
};

// Factorized two-label marginals; q0 + q1 = 1 per pixel.
struct MarginalField {
  Mat2D<double> q0, q1;
  int rows() const { return q0.rows(); }
  int cols() const { return q0.cols(); }
};

// Negative log-probabilities of the two classes with scores clamped away
// from {0,1}.
inline UnaryField unary_from_scores(const ScoreMap& s_in) {
  constexpr double kEps = 1e-6;
  UnaryField u{Mat2D<double>(s_in.rows(), s_in.cols()),
               Mat2D<double>(s_in.rows(), s_in.cols())};
  for (size_t i = 0; i < s_in.size(); ++i) {
    double s = std::min(std::max(s_in[i], kEps), 1.0 - kEps);
    u.u1[i] = -std::log(s);
    u.u0[i] = -std::log(1.0 - s);
  }
  return u;
}

// Contrast-sensitive two-kernel potential: appearance + smoothness.
inline double pairwise_kernel(double xi, double yi, double xj, double yj,
                              const Color3& ci, const Color3& cj,
                              const CrfParams& p) {
  double dp2 = (xi - xj) * (xi - xj) + (yi - yj) * (yi - yj);
  double dc2 = 0;
  for (int k = 0; k < 3; ++k) dc2 += (ci[k] - cj[k]) * (ci[k] - cj[k]);
  double appearance =
      std::exp(-dp2 / (2 * p.theta_alpha * p.theta_alpha) -
               dc2 / (2 * p.theta_beta * p.theta_beta));
  double smoothness = std::exp(-dp2 / (2 * p.theta_gamma * p.theta_gamma));
  return p.w1 * appearance + p.w2 * smoothness;
}

// Gibbs energy of a labeling. The pairwise sum runs once per unordered pair
// within the truncation window; the mean-field update below is the exact
// coordinate update for this energy.
inline double crf_energy(const BinaryMask& labels, const UnaryField& unary,
                         const ColorImage& image, const CrfParams& p) {
  require(labels.rows() == unary.rows() && labels.cols() == unary.cols(),
          "crf_energy: shape mismatch");
  const int h = labels.rows(), w = labels.cols();
  const int r = p.window / 2;
  double energy = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      energy += labels.at(y, x) ? unary.u1.at(y, x) : unary.u0.at(y, x);
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          // count each unordered pair once
          if (ny * w + nx <= y * w + x) continue;
          if (labels.at(y, x) == labels.at(ny, nx)) continue;
          energy += pairwise_kernel(x, y, nx, ny, image.at(y, x), image.at(ny, nx), p);
        }
      }
    }
  }
  return energy;
}

// Truncated-window mean-field inference. Each sweep recomputes every pixel's
// marginal from the previous sweep's field (synchronous update):
//   Q_i(a) <- normalize( exp(-u_i(a) - sum_{j != i, |j-i|_inf <= r} k(i,j) Q_j(1-a)) )
inline MarginalField meanfield_infer(const UnaryField& unary, const ColorImage& image,
                                     const CrfParams& p) {
  p.validate();
  require(unary.rows() == image.rows() && unary.cols() == image.cols(),
          "meanfield_infer: unary/image shape mismatch");
  const int h = unary.rows(), w = unary.cols();
  const int r = p.window / 2;

  MarginalField q{Mat2D<double>(h, w), Mat2D<double>(h, w)};
  for (size_t i = 0; i < q.q0.size(); ++i) {
    double e0 = std::exp(-unary.u0[i]), e1 = std::exp(-unary.u1[i]);
    q.q0[i] = e0 / (e0 + e1);
    q.q1[i] = e1 / (e0 + e1);
  }

  // Spatial kernel factors depend only on the offset; hoist them out of the
  // pixel loop.
  const int wsize = 2 * r + 1;
  std::vector<double> app_spatial(wsize * wsize), smooth_spatial(wsize * wsize);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      double dp2 = double(dx) * dx + double(dy) * dy;
      int idx = (dy + r) * wsize + (dx + r);
      app_spatial[idx] = std::exp(-dp2 / (2 * p.theta_alpha * p.theta_alpha));
      smooth_spatial[idx] = std::exp(-dp2 / (2 * p.theta_gamma * p.theta_gamma));
    }
  }
  const double inv_2tb2 = 1.0 / (2 * p.theta_beta * p.theta_beta);

  Mat2D<double> next_q0(h, w), next_q1(h, w);
  for (int iter = 0; iter < p.iters; ++iter) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Color3& ci = image.at(y, x);
        double msg0 = 0, msg1 = 0;  // messages for labels 0 and 1
        for (int dy = -r; dy <= r; ++dy) {
          int ny = y + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            if (dx == 0 && dy == 0) continue;
            int nx = x + dx;
            if (nx < 0 || nx >= w) continue;
            const Color3& cj = image.at(ny, nx);
            double dc2 = (ci[0] - cj[0]) * (ci[0] - cj[0]) +
                         (ci[1] - cj[1]) * (ci[1] - cj[1]) +
                         (ci[2] - cj[2]) * (ci[2] - cj[2]);
            int idx = (dy + r) * wsize + (dx + r);
            double k = p.w1 * app_spatial[idx] * std::exp(-dc2 * inv_2tb2) +
                       p.w2 * smooth_spatial[idx];
            // Potts compatibility: label a is penalized by mass on the
            // opposite label.
            msg0 += k * q.q1.at(ny, nx);
            msg1 += k * q.q0.at(ny, nx);
          }
        }
        double l0 = -unary.u0.at(y, x) - msg0;
        double l1 = -unary.u1.at(y, x) - msg1;
        double m = std::max(l0, l1);
        double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        double z = e0 + e1;
        if (!std::isfinite(z) || z <= 0) {
          throw std::runtime_error(
              "meanfield_infer: non-finite normalizer at pixel (" +
              std::to_string(x) + "," + std::to_string(y) + ") iter " +
              std::to_string(iter));
        }
        next_q0.at(y, x) = e0 / z;
        next_q1.at(y, x) = e1 / z;
      }
    }
    q.q0 = next_q0;
    q.q1 = next_q1;
  }
  return q;
}

// Per-pixel argmax; exact ties resolve to label 0.
inline BinaryMask map_labels(const MarginalField& q) {
  BinaryMask mask(q.rows(), q.cols());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = q.q1[i] > q.q0[i] ? 1 : 0;
  return mask;
}

struct ExactInference {
  MarginalField marginals;
  BinaryMask map_labeling;
  double map_energy = 0;
};

// Enumerates all 2^N labelings of a tiny field; the test oracle for
// meanfield_infer. Uses the same windowed energy as crf_energy.
inline ExactInference exact_infer_bruteforce(const UnaryField& unary,
                                             const ColorImage& image,
                                             const CrfParams& p) {
  const int h = unary.rows(), w = unary.cols();
  const int n = h * w;
  require(n >= 1 && n <= 20, "exact_infer_bruteforce: pixel count must be in [1,20]");
  require(image.rows() == h && image.cols() == w,
          "exact_infer_bruteforce: image shape mismatch");

  ExactInference out;
  out.marginals = {Mat2D<double>(h, w, 0.0), Mat2D<double>(h, w, 0.0)};
  BinaryMask labels(h, w);
  double z = 0;
  double best_energy = std::numeric_limits<double>::infinity();
  uint32_t best_state = 0;

  // Offset energies by the minimum for a stable partition sum.
  std::vector<double> energies(static_cast<size_t>(1) << n);
  for (uint32_t state = 0; state < (1u << n); ++state) {
    for (int i = 0; i < n; ++i) labels[i] = (state >> i) & 1u;
    double e = crf_energy(labels, unary, image, p);
    energies[state] = e;
    if (e < best_energy) {
      best_energy = e;
      best_state = state;
    }
  }
  for (uint32_t state = 0; state < (1u << n); ++state) {
    double weight = std::exp(-(energies[state] - best_energy));
    z += weight;
    for (int i = 0; i < n; ++i) {
      if ((state >> i) & 1u) {
        out.marginals.q1[i] += weight;
      } else {
        out.marginals.q0[i] += weight;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    out.marginals.q0[i] /= z;
    out.marginals.q1[i] /= z;
  }
  out.map_labeling = BinaryMask(h, w);
  for (int i = 0; i < n; ++i) out.map_labeling[i] = (best_state >> i) & 1u;
  out.map_energy = best_energy;
  return out;
}

}  // namespace cmfd
