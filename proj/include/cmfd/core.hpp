#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmfd {

struct NotImplementedError : std::logic_error {
  using std::logic_error::logic_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Dense row-major 2-D array. Score maps, masks and label maps are all
// instances of this with different element types.
template <typename T>
class Mat2D {
 public:
  Mat2D() = default;
  Mat2D(int rows, int cols, T value = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, value) {
    require(rows >= 0 && cols >= 0, "Mat2D: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int y, int x) { return data_[static_cast<size_t>(y) * cols_ + x]; }
  const T& at(int y, int x) const { return data_[static_cast<size_t>(y) * cols_ + x]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Mat2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Mat2D& a, const Mat2D& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// Per-pixel suspicion probabilities in [0,1], same spatial size as the image.
using ScoreMap = Mat2D<double>;
// {0,1} per-pixel labeling; 1 marks forged locations and their genuine sources.
using BinaryMask = Mat2D<uint8_t>;
// Superpixel / region label map.
using LabelMap = Mat2D<int32_t>;

// Color pixels. ByteImage carries 8-bit channels, ColorImage the same values
// as doubles for kernel math.
using Color3 = std::array<double, 3>;
using ColorImage = Mat2D<Color3>;
using ByteColor3 = std::array<uint8_t, 3>;
using ByteImage = Mat2D<ByteColor3>;

inline ColorImage to_color_image(const ByteImage& img) {
  ColorImage out(img.rows(), img.cols());
  for (size_t i = 0; i < img.size(); ++i) {
    out[i] = {double(img[i][0]), double(img[i][1]), double(img[i][2])};
  }
  return out;
}

inline Mat2D<double> to_gray(const ByteImage& img) {
  Mat2D<double> out(img.rows(), img.cols());
  for (size_t i = 0; i < img.size(); ++i) {
    out[i] = 0.299 * img[i][2] + 0.587 * img[i][1] + 0.114 * img[i][0];
  }
  return out;
}

inline size_t count_positive(const BinaryMask& m) {
  size_t n = 0;
  for (size_t i = 0; i < m.size(); ++i) n += (m[i] != 0);
  return n;
}

}  // namespace cmfd
