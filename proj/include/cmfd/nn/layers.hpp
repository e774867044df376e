#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cmfd/core.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// A learnable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.channels(), value.height(), value.width());
  }

  void zero_grad() { grad.fill(0.0); }
};

// Atrous 2-D convolution of one channel bank, zero padded to keep the
// spatial size: out(i,j) = sum_k w(k1,k2) * x(i + rate*k1, j + rate*k2).
// rate = 1 is a dense convolution.
inline Tensor atrous_conv2d(const Tensor& x, const Tensor& w, int rate) {
  require(rate >= 1, "atrous_conv2d: rate must be positive");
  require(w.height() == w.width() && w.height() % 2 == 1,
          "atrous_conv2d: filter must be square with odd size");
  require(!x.empty(), "atrous_conv2d: empty input");
  const int k = w.height();
  const int span = 2 * rate * (k / 2) + 1;
  const int pad = rate * (k / 2);
  require(span <= x.height() + 2 * pad && span <= x.width() + 2 * pad,
          "atrous_conv2d: filter larger than padded input");
  require(w.channels() == x.channels(), "atrous_conv2d: channel mismatch");

  Tensor out(1, x.height(), x.width());
  const int half = k / 2;
  for (int y = 0; y < x.height(); ++y) {
    for (int xx = 0; xx < x.width(); ++xx) {
      double acc = 0;
      for (int c = 0; c < x.channels(); ++c) {
        for (int k1 = -half; k1 <= half; ++k1) {
          int sy = y + rate * k1;
          if (sy < 0 || sy >= x.height()) continue;
          for (int k2 = -half; k2 <= half; ++k2) {
            int sx = xx + rate * k2;
            if (sx < 0 || sx >= x.width()) continue;
            acc += w.at(c, k1 + half, k2 + half) * x.at(c, sy, sx);
          }
        }
      }
      out.at(0, y, xx) = acc;
    }
  }
  return out;
}

// Trainable atrous convolution layer; im2col + GEMM with cached columns.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int rate, const std::string& name)
      : in_c_(in_c), out_c_(out_c), k_(k), rate_(rate) {
    require(k >= 1 && k % 2 == 1, "Conv2d: kernel size must be odd");
    require(rate >= 1, "Conv2d: rate must be positive");
    weight_ = Param(name + ".w", Tensor(out_c, in_c, k * k));
    bias_ = Param(name + ".b", Tensor(out_c, 1, 1));
  }

  void init_he(Rng& rng) {
    double std = std::sqrt(2.0 / (in_c_ * k_ * k_));
    for (size_t i = 0; i < weight_.value.size(); ++i) weight_.value[i] = std * rng.normal();
    bias_.value.fill(0.0);
  }

  void init_zero() {
    weight_.value.fill(0.0);
    bias_.value.fill(0.0);
  }

  Tensor forward(const Tensor& x) {
    require(x.channels() == in_c_, "Conv2d: input channel mismatch");
    h_ = x.height();
    w_ = x.width();
    const int hw = h_ * w_;
    const int patch = in_c_ * k_ * k_;
    cols_.assign(static_cast<size_t>(patch) * hw, 0.0);

    const int half = k_ / 2;
    for (int c = 0; c < in_c_; ++c) {
      for (int k1 = 0; k1 < k_; ++k1) {
        for (int k2 = 0; k2 < k_; ++k2) {
          const int row = (c * k_ + k1) * k_ + k2;
          double* dst = cols_.data() + static_cast<size_t>(row) * hw;
          const int oy = rate_ * (k1 - half), ox = rate_ * (k2 - half);
          for (int y = 0; y < h_; ++y) {
            int sy = y + oy;
            if (sy < 0 || sy >= h_) continue;
            const double* src = x.data() + (static_cast<size_t>(c) * h_ + sy) * w_;
            double* drow = dst + static_cast<size_t>(y) * w_;
            int x0 = std::max(0, -ox), x1 = std::min(w_, w_ - ox);
            for (int xx = x0; xx < x1; ++xx) drow[xx] = src[xx + ox];
          }
        }
      }
    }

    Tensor out(out_c_, h_, w_);
    EMap y(out.data(), out_c_, hw);
    ECMap wmat(weight_.value.data(), out_c_, patch);
    ECMap cmat(cols_.data(), patch, hw);
    y.noalias() = wmat * cmat;
    for (int oc = 0; oc < out_c_; ++oc) y.row(oc).array() += bias_.value[oc];
    return out;
  }

  Tensor backward(const Tensor& gy) {
    const int hw = h_ * w_;
    const int patch = in_c_ * k_ * k_;
    ECMap gmat(gy.data(), out_c_, hw);
    ECMap cmat(cols_.data(), patch, hw);
    EMap gw(weight_.grad.data(), out_c_, patch);
    gw.noalias() += gmat * cmat.transpose();
    for (int oc = 0; oc < out_c_; ++oc) bias_.grad[oc] += gmat.row(oc).sum();

    std::vector<double> gcols(static_cast<size_t>(patch) * hw);
    EMap gc(gcols.data(), patch, hw);
    ECMap wmat(weight_.value.data(), out_c_, patch);
    gc.noalias() = wmat.transpose() * gmat;

    Tensor gx(in_c_, h_, w_);
    const int half = k_ / 2;
    for (int c = 0; c < in_c_; ++c) {
      for (int k1 = 0; k1 < k_; ++k1) {
        for (int k2 = 0; k2 < k_; ++k2) {
          const int row = (c * k_ + k1) * k_ + k2;
          const double* src = gcols.data() + static_cast<size_t>(row) * hw;
          const int oy = rate_ * (k1 - half), ox = rate_ * (k2 - half);
          for (int y = 0; y < h_; ++y) {
            int sy = y + oy;
            if (sy < 0 || sy >= h_) continue;
            double* dst = gx.data() + (static_cast<size_t>(c) * h_ + sy) * w_;
            const double* srow = src + static_cast<size_t>(y) * w_;
            int x0 = std::max(0, -ox), x1 = std::min(w_, w_ - ox);
            for (int xx = x0; xx < x1; ++xx) dst[xx + ox] += srow[xx];
          }
        }
      }
    }
    return gx;
  }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  int out_channels() const { return out_c_; }

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 1, rate_ = 1;
  int h_ = 0, w_ = 0;
  Param weight_, bias_;
  std::vector<double> cols_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x) {
    mask_.assign(x.size(), 0);
    Tensor out = x;
    for (size_t i = 0; i < out.size(); ++i) {
      if (out[i] > 0) {
        mask_[i] = 1;
      } else {
        out[i] = 0;
      }
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = gy;
    for (size_t i = 0; i < gx.size(); ++i) {
      if (!mask_[i]) gx[i] = 0;
    }
    return gx;
  }

 private:
  std::vector<char> mask_;
};

// 2x2 max pooling with stride 2; input dims must be even.
class MaxPool2 {
 public:
  Tensor forward(const Tensor& x) {
    require(x.height() % 2 == 0 && x.width() % 2 == 0, "MaxPool2: odd input size");
    c_ = x.channels();
    h_ = x.height();
    w_ = x.width();
    Tensor out(c_, h_ / 2, w_ / 2);
    argmax_.assign(out.size(), 0);
    size_t o = 0;
    for (int c = 0; c < c_; ++c) {
      for (int y = 0; y < h_; y += 2) {
        for (int x2 = 0; x2 < w_; x2 += 2, ++o) {
          size_t base = (static_cast<size_t>(c) * h_ + y) * w_ + x2;
          size_t idx[4] = {base, base + 1, base + w_, base + w_ + 1};
          size_t best = idx[0];
          for (int k = 1; k < 4; ++k) {
            if (x[idx[k]] > x[best]) best = idx[k];
          }
          argmax_[o] = best;
          out[o] = x[best];
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(c_, h_, w_);
    for (size_t o = 0; o < gy.size(); ++o) gx[argmax_[o]] += gy[o];
    return gx;
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<size_t> argmax_;
};

// Bilinear upsampling by an integer factor, half-pixel aligned.
class BilinearUpsample {
 public:
  explicit BilinearUpsample(int factor = 2) : factor_(factor) {}

  Tensor forward(const Tensor& x) {
    c_ = x.channels();
    h_ = x.height();
    w_ = x.width();
    const int oh = h_ * factor_, ow = w_ * factor_;
    build_taps(oh, h_, taps_y_);
    build_taps(ow, w_, taps_x_);
    Tensor out(c_, oh, ow);
    for (int c = 0; c < c_; ++c) {
      for (int y = 0; y < oh; ++y) {
        const Tap& ty = taps_y_[y];
        for (int x2 = 0; x2 < ow; ++x2) {
          const Tap& tx = taps_x_[x2];
          out.at(c, y, x2) = ty.w0 * (tx.w0 * x.at(c, ty.i0, tx.i0) + tx.w1 * x.at(c, ty.i0, tx.i1)) +
                             ty.w1 * (tx.w0 * x.at(c, ty.i1, tx.i0) + tx.w1 * x.at(c, ty.i1, tx.i1));
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(c_, h_, w_);
    const int oh = h_ * factor_, ow = w_ * factor_;
    for (int c = 0; c < c_; ++c) {
      for (int y = 0; y < oh; ++y) {
        const Tap& ty = taps_y_[y];
        for (int x2 = 0; x2 < ow; ++x2) {
          const Tap& tx = taps_x_[x2];
          double g = gy.at(c, y, x2);
          gx.at(c, ty.i0, tx.i0) += g * ty.w0 * tx.w0;
          gx.at(c, ty.i0, tx.i1) += g * ty.w0 * tx.w1;
          gx.at(c, ty.i1, tx.i0) += g * ty.w1 * tx.w0;
          gx.at(c, ty.i1, tx.i1) += g * ty.w1 * tx.w1;
        }
      }
    }
    return gx;
  }

 private:
  struct Tap {
    int i0, i1;
    double w0, w1;
  };

  void build_taps(int out_size, int in_size, std::vector<Tap>& taps) {
    taps.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
      double src = (o + 0.5) / factor_ - 0.5;
      int i0 = (int)std::floor(src);
      double f = src - i0;
      int i1 = i0 + 1;
      i0 = std::clamp(i0, 0, in_size - 1);
      i1 = std::clamp(i1, 0, in_size - 1);
      taps[o] = {i0, i1, 1.0 - f, f};
    }
  }

  int factor_;
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<Tap> taps_y_, taps_x_;
};

// Global average pooling to a 1x1 map.
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x) {
    c_ = x.channels();
    h_ = x.height();
    w_ = x.width();
    Tensor out(c_, 1, 1);
    const double inv = 1.0 / (h_ * w_);
    for (int c = 0; c < c_; ++c) {
      double sum = 0;
      const double* p = x.data() + static_cast<size_t>(c) * h_ * w_;
      for (int i = 0; i < h_ * w_; ++i) sum += p[i];
      out[c] = sum * inv;
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(c_, h_, w_);
    const double inv = 1.0 / (h_ * w_);
    for (int c = 0; c < c_; ++c) {
      double g = gy[c] * inv;
      double* p = gx.data() + static_cast<size_t>(c) * h_ * w_;
      for (int i = 0; i < h_ * w_; ++i) p[i] = g;
    }
    return gx;
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

// Replicates a 1x1 map across a spatial extent.
class Broadcast {
 public:
  Tensor forward(const Tensor& x, int h, int w) {
    c_ = x.channels();
    h_ = h;
    w_ = w;
    Tensor out(c_, h, w);
    for (int c = 0; c < c_; ++c) {
      double v = x[c];
      double* p = out.data() + static_cast<size_t>(c) * h * w;
      for (int i = 0; i < h * w; ++i) p[i] = v;
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(c_, 1, 1);
    for (int c = 0; c < c_; ++c) {
      const double* p = gy.data() + static_cast<size_t>(c) * h_ * w_;
      double sum = 0;
      for (int i = 0; i < h_ * w_; ++i) sum += p[i];
      gx[c] = sum;
    }
    return gx;
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

// Channel concatenation helpers used by the skip-matching and ASPP joins.
inline Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  int h = parts[0]->height(), w = parts[0]->width(), c = 0;
  for (const Tensor* t : parts) {
    require(t->height() == h && t->width() == w, "concat_channels: spatial mismatch");
    c += t->channels();
  }
  Tensor out(c, h, w);
  size_t offset = 0;
  for (const Tensor* t : parts) {
    std::copy(t->data(), t->data() + t->size(), out.data() + offset);
    offset += t->size();
  }
  return out;
}

inline std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& channels) {
  std::vector<Tensor> parts;
  size_t offset = 0;
  for (int c : channels) {
    Tensor t(c, x.height(), x.width());
    std::copy(x.data() + offset, x.data() + offset + t.size(), t.data());
    offset += t.size();
    parts.push_back(std::move(t));
  }
  require(offset == x.size(), "split_channels: channel counts do not cover input");
  return parts;
}

}  // namespace cmfd::nn
