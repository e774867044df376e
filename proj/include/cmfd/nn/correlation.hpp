#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cmfd/nn/layers.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

// L2-normalizes the c-dimensional descriptor at every spatial location.
// An all-zero descriptor stays all-zero.
class L2NormalizeDescriptors {
 public:
  Tensor forward(const Tensor& x) {
    const int c = x.channels(), hw = x.locations();
    norms_.assign(hw, 0.0);
    out_ = Tensor(c, x.height(), x.width());
    for (int m = 0; m < hw; ++m) {
      double n2 = 0;
      for (int ch = 0; ch < c; ++ch) {
        double v = x[static_cast<size_t>(ch) * hw + m];
        n2 += v * v;
      }
      double norm = std::sqrt(n2);
      norms_[m] = norm;
      if (norm > 0) {
        for (int ch = 0; ch < c; ++ch)
          out_[static_cast<size_t>(ch) * hw + m] = x[static_cast<size_t>(ch) * hw + m] / norm;
      }
    }
    return out_;
  }

  Tensor backward(const Tensor& gy) {
    const int c = out_.channels(), hw = out_.locations();
    Tensor gx(c, out_.height(), out_.width());
    for (int m = 0; m < hw; ++m) {
      if (norms_[m] <= 0) continue;
      double dot = 0;
      for (int ch = 0; ch < c; ++ch)
        dot += gy[static_cast<size_t>(ch) * hw + m] * out_[static_cast<size_t>(ch) * hw + m];
      for (int ch = 0; ch < c; ++ch) {
        size_t i = static_cast<size_t>(ch) * hw + m;
        gx[i] = (gy[i] - dot * out_[i]) / norms_[m];
      }
    }
    return gx;
  }

 private:
  Tensor out_;
  std::vector<double> norms_;
};

inline Tensor l2_normalize_descriptors(const Tensor& x) {
  L2NormalizeDescriptors op;
  return op.forward(x);
}

// Raw self-correlation: scalar products between every pair of locations.
// Output channel n at location m holds c(m,n); the materialized Gram tensor
// is meant for small maps and tests, the network path uses CorrelationTopT.
inline Tensor self_correlation(const Tensor& x) {
  const int c = x.channels(), hw = x.locations();
  Tensor out(hw, x.height(), x.width());
  ECMap d(x.data(), c, hw);
  EMap g(out.data(), hw, hw);
  g.noalias() = d.transpose() * d;
  return out;
}

// Per-location top-T selection over the correlation channels, sorted
// non-increasing. Ties break toward the lower source channel.
inline Tensor top_t_pool(const Tensor& raw, int t) {
  const int hw = raw.locations(), n = raw.channels();
  require(t >= 1 && t <= n, "top_t_pool: T must be in [1, channel count]");
  Tensor out(t, raw.height(), raw.width());
  std::vector<int> order(n);
  for (int m = 0; m < hw; ++m) {
    std::iota(order.begin(), order.end(), 0);
    auto cmp = [&](int a, int b) {
      double va = raw[static_cast<size_t>(a) * hw + m];
      double vb = raw[static_cast<size_t>(b) * hw + m];
      if (va != vb) return va > vb;
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + t, order.end(), cmp);
    for (int k = 0; k < t; ++k)
      out[static_cast<size_t>(k) * hw + m] = raw[static_cast<size_t>(order[k]) * hw + m];
  }
  return out;
}

// Zero-out (rectify) then L2-normalize each top-T fiber; zero fibers stay 0.
class ZeroOutNormalize {
 public:
  Tensor forward(const Tensor& x) {
    const int t = x.channels(), hw = x.locations();
    rectified_ = x;
    for (size_t i = 0; i < rectified_.size(); ++i)
      if (rectified_[i] < 0) rectified_[i] = 0;
    norms_.assign(hw, 0.0);
    out_ = Tensor(t, x.height(), x.width());
    for (int m = 0; m < hw; ++m) {
      double n2 = 0;
      for (int ch = 0; ch < t; ++ch) {
        double v = rectified_[static_cast<size_t>(ch) * hw + m];
        n2 += v * v;
      }
      double norm = std::sqrt(n2);
      norms_[m] = norm;
      if (norm > 0) {
        for (int ch = 0; ch < t; ++ch) {
          size_t i = static_cast<size_t>(ch) * hw + m;
          out_[i] = rectified_[i] / norm;
        }
      }
    }
    return out_;
  }

  Tensor backward(const Tensor& gy) {
    const int t = out_.channels(), hw = out_.locations();
    Tensor gx(t, out_.height(), out_.width());
    for (int m = 0; m < hw; ++m) {
      if (norms_[m] <= 0) continue;
      double dot = 0;
      for (int ch = 0; ch < t; ++ch) {
        size_t i = static_cast<size_t>(ch) * hw + m;
        dot += gy[i] * out_[i];
      }
      for (int ch = 0; ch < t; ++ch) {
        size_t i = static_cast<size_t>(ch) * hw + m;
        double g = (gy[i] - dot * out_[i]) / norms_[m];
        gx[i] = rectified_[i] > 0 ? g : 0.0;
      }
    }
    return gx;
  }

 private:
  Tensor rectified_, out_;
  std::vector<double> norms_;
};

inline Tensor zero_out_normalize(const Tensor& x) {
  ZeroOutNormalize op;
  return op.forward(x);
}

// Fused self-correlation + top-T layer. Never materializes the full
// (h*w) x (h*w) Gram tensor: correlations are computed in row blocks and only
// the selected source indices are kept for the backward pass.
class CorrelationTopT {
 public:
  explicit CorrelationTopT(int t) : t_(t) {}

  Tensor forward(const Tensor& x) {
    input_ = x;
    const int c = x.channels(), hw = x.locations();
    require(t_ <= hw, "CorrelationTopT: T exceeds h*w");
    Tensor out(t_, x.height(), x.width());
    indices_.assign(static_cast<size_t>(t_) * hw, 0);

    ECMap d(x.data(), c, hw);
    const int block = std::max(1, std::min(hw, (1 << 22) / std::max(hw, 1)));
    EMat rows;
    std::vector<int> order(hw);
    for (int m0 = 0; m0 < hw; m0 += block) {
      const int mb = std::min(block, hw - m0);
      rows.resize(mb, hw);
      rows.noalias() = d.middleCols(m0, mb).transpose() * d;
      for (int r = 0; r < mb; ++r) {
        const double* vals = rows.data() + static_cast<size_t>(r) * hw;
        std::iota(order.begin(), order.end(), 0);
        auto cmp = [&](int a, int b) {
          if (vals[a] != vals[b]) return vals[a] > vals[b];
          return a < b;
        };
        std::partial_sort(order.begin(), order.begin() + t_, order.end(), cmp);
        const int m = m0 + r;
        for (int k = 0; k < t_; ++k) {
          out[static_cast<size_t>(k) * hw + m] = vals[order[k]];
          indices_[static_cast<size_t>(k) * hw + m] = order[k];
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    const int c = input_.channels(), hw = input_.locations();
    Tensor gx(c, input_.height(), input_.width());
    ECMap d(input_.data(), c, hw);
    EMap g(gx.data(), c, hw);
    for (int m = 0; m < hw; ++m) {
      for (int k = 0; k < t_; ++k) {
        size_t i = static_cast<size_t>(k) * hw + m;
        double gv = gy[i];
        if (gv == 0) continue;
        int n = indices_[i];
        g.col(m) += gv * d.col(n);
        g.col(n) += gv * d.col(m);
      }
    }
    return gx;
  }

  int t() const { return t_; }

 private:
  int t_;
  Tensor input_;
  std::vector<int> indices_;
};

}  // namespace cmfd::nn
