#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cmfd/core.hpp"

namespace cmfd {

// CHW double tensor. Index layout: value(ch, y, x) = data[(ch*h + y)*w + x].
// Channel fibers at a spatial location are strided; matrix views over the
// (c) x (h*w) layout map directly onto GEMM operands.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int c, int h, int w, double value = 0.0)
      : c_(c), h_(h), w_(w), data_(static_cast<size_t>(c) * h * w, value) {
    require(c >= 0 && h >= 0 && w >= 0, "Tensor: negative shape");
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int locations() const { return h_ * w_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int ch, int y, int x) {
    return data_[(static_cast<size_t>(ch) * h_ + y) * w_ + x];
  }
  double at(int ch, int y, int x) const {
    return data_[(static_cast<size_t>(ch) * h_ + y) * w_ + x];
  }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void add_scaled(const Tensor& o, double s) {
    require(same_shape(o), "Tensor::add_scaled: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.c_ == b.c_ && a.h_ == b.h_ && a.w_ == b.w_ && a.data_ == b.data_;
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

// Splittable deterministic RNG. Thin wrapper so that sampling is identical
// across platforms (std::uniform_real_distribution is not pinned by the
// standard).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Derives an independent stream, e.g. per dataset sample.
  static Rng derive(uint64_t seed, uint64_t index) {
    std::mt19937_64 mix(seed);
    uint64_t a = mix();
    return Rng(a ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    if (hi <= lo) return lo;
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline Tensor random_normal(int c, int h, int w, Rng& rng, double stddev = 1.0) {
  Tensor t(c, h, w);
  for (size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

}  // namespace cmfd
