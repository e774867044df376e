#include <catch2/catch_amalgamated.hpp>

#include "cmfd/nn/correlation.hpp"
#include "cmfd/nn/layers.hpp"
#include "cmfd/tensor.hpp"

using namespace cmfd;
using namespace cmfd::nn;

namespace {

Tensor make_fiber_tensor(const std::vector<double>& values) {
  // one spatial location, channels = fiber
  Tensor t((int)values.size(), 1, 1);
  for (size_t i = 0; i < values.size(); ++i) t[i] = values[i];
  return t;
}

// Dense reference convolution, direct loop transcription of the defining sum.
Tensor reference_conv(const Tensor& x, const Tensor& w, int rate) {
  const int k = w.height(), half = k / 2;
  Tensor out(1, x.height(), x.width());
  for (int y = 0; y < x.height(); ++y) {
    for (int xx = 0; xx < x.width(); ++xx) {
      double acc = 0;
      for (int c = 0; c < x.channels(); ++c)
        for (int k1 = -half; k1 <= half; ++k1)
          for (int k2 = -half; k2 <= half; ++k2) {
            int sy = y + rate * k1, sx = xx + rate * k2;
            if (sy < 0 || sy >= x.height() || sx < 0 || sx >= x.width()) continue;
            acc += w.at(c, k1 + half, k2 + half) * x.at(c, sy, sx);
          }
      out.at(0, y, xx) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("atrous_conv2d: 1x1 filter is pointwise scaling at any rate") {
  Tensor x(1, 3, 3, 1.0);
  Tensor w(1, 1, 1);
  w[0] = 2.0;
  Tensor y = atrous_conv2d(x, w, 2);
  for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 2.0);
}

TEST_CASE("atrous_conv2d: dilated 3x3 spreads an impulse to rate-offset taps") {
  Tensor x(1, 5, 5);
  x.at(0, 2, 2) = 1.0;
  Tensor w(1, 3, 3, 1.0);
  Tensor y = atrous_conv2d(x, w, 2);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      bool hit = (i == 0 || i == 2 || i == 4) && (j == 0 || j == 2 || j == 4);
      CHECK(y.at(0, i, j) == (hit ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("atrous_conv2d: rate 1 equals a dense reference convolution") {
  Rng rng(11);
  Tensor x = random_normal(2, 7, 6, rng);
  Tensor w = random_normal(2, 3, 3, rng);
  Tensor got = atrous_conv2d(x, w, 1);
  Tensor want = reference_conv(x, w, 1);
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("atrous_conv2d: rejects bad arguments") {
  Tensor x(1, 3, 3, 1.0);
  Tensor w(1, 1, 1, 1.0);
  CHECK_THROWS_AS(atrous_conv2d(x, w, 0), std::invalid_argument);
  CHECK_THROWS_AS(atrous_conv2d(x, w, -2), std::invalid_argument);
  Tensor even(1, 2, 2, 1.0);
  CHECK_THROWS_AS(atrous_conv2d(x, even, 1), std::invalid_argument);
}

TEST_CASE("l2_normalize_descriptors: 3-4-5 triangle") {
  Tensor t(2, 1, 1);
  t[0] = 3.0;
  t[1] = 4.0;
  Tensor n = l2_normalize_descriptors(t);
  CHECK(n[0] == Catch::Approx(0.6).epsilon(1e-12));
  CHECK(n[1] == Catch::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l2_normalize_descriptors: zero descriptor stays zero") {
  Tensor t(8, 1, 1, 0.0);
  Tensor n = l2_normalize_descriptors(t);
  for (size_t i = 0; i < n.size(); ++i) CHECK(n[i] == 0.0);
}

TEST_CASE("l2_normalize_descriptors: every fiber norm is 0 or 1") {
  Rng rng(3);
  Tensor t = random_normal(6, 4, 5, rng);
  // plant one zero fiber
  for (int c = 0; c < 6; ++c) t.at(c, 1, 2) = 0.0;
  Tensor n = l2_normalize_descriptors(t);
  const int hw = t.locations();
  for (int m = 0; m < hw; ++m) {
    double norm2 = 0;
    for (int c = 0; c < 6; ++c) {
      double v = n[static_cast<size_t>(c) * hw + m];
      norm2 += v * v;
    }
    double norm = std::sqrt(norm2);
    CHECK((std::abs(norm - 1.0) < 1e-6 || norm < 1e-12));
  }
}

TEST_CASE("self_correlation: Gram matrix matches brute-force products") {
  Rng rng(5);
  Tensor f = random_normal(3, 2, 2, rng);
  Tensor corr = self_correlation(f);
  const int hw = 4;
  REQUIRE(corr.channels() == hw);
  for (int m = 0; m < hw; ++m) {
    for (int n = 0; n < hw; ++n) {
      double want = 0;
      for (int c = 0; c < 3; ++c)
        want += f[static_cast<size_t>(c) * hw + m] * f[static_cast<size_t>(c) * hw + n];
      CHECK(corr[static_cast<size_t>(n) * hw + m] == Catch::Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("self_correlation: symmetric, unit self-products for unit descriptors") {
  Rng rng(6);
  Tensor f = l2_normalize_descriptors(random_normal(8, 3, 3, rng));
  Tensor corr = self_correlation(f);
  const int hw = 9;
  for (int m = 0; m < hw; ++m) {
    CHECK(corr[static_cast<size_t>(m) * hw + m] == Catch::Approx(1.0).margin(1e-9));
    for (int n = 0; n < hw; ++n) {
      CHECK(corr[static_cast<size_t>(n) * hw + m] ==
            Catch::Approx(corr[static_cast<size_t>(m) * hw + n]).margin(1e-6));
      CHECK(corr[static_cast<size_t>(n) * hw + m] <= 1.0 + 1e-6);  // Cauchy-Schwarz
    }
  }
}

TEST_CASE("self_correlation: orthogonal descriptors give zero") {
  Tensor f(2, 1, 2, 0.0);
  const int hw = 2;
  f[0 * hw + 0] = 1.0;  // location 0 = e0
  f[1 * hw + 1] = 1.0;  // location 1 = e1
  Tensor corr = self_correlation(f);
  CHECK(corr[static_cast<size_t>(1) * hw + 0] == 0.0);
  CHECK(corr[static_cast<size_t>(0) * hw + 1] == 0.0);
}

TEST_CASE("top_t_pool: hand-sorted fiber") {
  Tensor raw = make_fiber_tensor({0.9, 0.1, 0.5, 0.3});
  Tensor top = top_t_pool(raw, 2);
  CHECK(top[0] == 0.9);
  CHECK(top[1] == 0.5);
}

TEST_CASE("top_t_pool: ties keep the value, full-T is a descending sort") {
  Tensor ties = make_fiber_tensor({0.7, 0.7, 0.7});
  Tensor top = top_t_pool(ties, 2);
  CHECK(top[0] == 0.7);
  CHECK(top[1] == 0.7);

  Tensor raw = make_fiber_tensor({0.2, 0.9, -0.3, 0.5});
  Tensor full = top_t_pool(raw, 4);
  CHECK(full[0] == 0.9);
  CHECK(full[1] == 0.5);
  CHECK(full[2] == 0.2);
  CHECK(full[3] == -0.3);
}

TEST_CASE("top_t_pool: rejects T above the channel count") {
  Tensor raw = make_fiber_tensor({0.2, 0.9});
  CHECK_THROWS_AS(top_t_pool(raw, 3), std::invalid_argument);
}

TEST_CASE("top_t_pool: permutation invariance and below-threshold inserts") {
  Rng rng(9);
  std::vector<double> fiber(12);
  for (double& v : fiber) v = rng.uniform(-1.0, 1.0);
  Tensor top = top_t_pool(make_fiber_tensor(fiber), 4);

  // permute the comparison locations
  std::vector<double> shuffled = fiber;
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.next_u64() % i]);
  Tensor top_shuffled = top_t_pool(make_fiber_tensor(shuffled), 4);
  for (int k = 0; k < 4; ++k) CHECK(top[k] == top_shuffled[k]);

  // extra values below the current T-th keep the output unchanged
  std::vector<double> extended = fiber;
  double tth = top[3];
  extended.push_back(tth - 0.5);
  extended.push_back(tth - 0.01);
  Tensor top_ext = top_t_pool(make_fiber_tensor(extended), 4);
  for (int k = 0; k < 4; ++k) CHECK(top[k] == top_ext[k]);

  // fibers are non-increasing
  for (int k = 1; k < 4; ++k) CHECK(top[k] <= top[k - 1]);
}

TEST_CASE("zero_out_normalize: fiber (0.9, 0.5)") {
  Tensor t = make_fiber_tensor({0.9, 0.5});
  Tensor n = zero_out_normalize(t);
  CHECK(n[0] == Catch::Approx(0.874157).margin(1e-5));
  CHECK(n[1] == Catch::Approx(0.485643).margin(1e-5));
}

TEST_CASE("zero_out_normalize: all-negative fiber maps to zero") {
  Tensor t = make_fiber_tensor({-1.0, -2.0});
  Tensor n = zero_out_normalize(t);
  CHECK(n[0] == 0.0);
  CHECK(n[1] == 0.0);
}

TEST_CASE("zero_out_normalize: mixed fiber rectifies then normalizes") {
  Tensor t = make_fiber_tensor({-0.5, 0.5});
  Tensor n = zero_out_normalize(t);
  CHECK(n[0] == 0.0);
  CHECK(n[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("zero_out_normalize: fiber norms are 0 or 1") {
  Rng rng(17);
  Tensor t = random_normal(16, 3, 4, rng);
  Tensor n = zero_out_normalize(t);
  const int hw = t.locations();
  for (int m = 0; m < hw; ++m) {
    double norm2 = 0;
    for (int c = 0; c < 16; ++c) {
      double v = n[static_cast<size_t>(c) * hw + m];
      CHECK(v >= 0.0);
      norm2 += v * v;
    }
    double norm = std::sqrt(norm2);
    CHECK((std::abs(norm - 1.0) < 1e-6 || norm < 1e-12));
  }
}

TEST_CASE("skip concat: block-ordered channels, slicing recovers the inputs") {
  Rng rng(23);
  Tensor a = random_normal(4, 2, 2, rng);
  Tensor b = random_normal(4, 2, 2, rng);
  Tensor c = random_normal(4, 2, 2, rng);
  Tensor cat = concat_channels({&a, &b, &c});
  REQUIRE(cat.channels() == 12);
  auto parts = split_channels(cat, {4, 4, 4});
  CHECK(parts[0] == a);
  CHECK(parts[1] == b);
  CHECK(parts[2] == c);

  // identical inputs repeat block-wise
  Tensor rep = concat_channels({&a, &a, &a});
  for (int ch = 0; ch < 4; ++ch)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        CHECK(rep.at(ch, y, x) == a.at(ch, y, x));
        CHECK(rep.at(ch + 4, y, x) == a.at(ch, y, x));
        CHECK(rep.at(ch + 8, y, x) == a.at(ch, y, x));
      }

  Tensor bad(4, 3, 2);
  CHECK_THROWS_AS(concat_channels({&a, &bad}), std::invalid_argument);
}

TEST_CASE("fused correlation top-T equals composed reference ops") {
  Rng rng(31);
  Tensor f = random_normal(6, 4, 4, rng);
  CorrelationTopT fused(5);
  Tensor got = fused.forward(f);
  Tensor want = top_t_pool(self_correlation(f), 5);
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("duplicated patch raises the best non-self correlation at both sites") {
  // The self channel is constant for unit descriptors, so the informative
  // value is the strongest match with another location (fiber rank 2).
  Rng rng(37);
  Tensor f = l2_normalize_descriptors(random_normal(8, 8, 8, rng));
  const int hw = 64;
  auto second_best = [&](const Tensor& t, int m) {
    Tensor top = top_t_pool(self_correlation(t), 2);
    return top[static_cast<size_t>(1) * hw + m];
  };
  // copy the descriptor at location 10 onto location 53
  Tensor dup = f;
  for (int c = 0; c < 8; ++c) {
    dup[static_cast<size_t>(c) * hw + 53] = f[static_cast<size_t>(c) * hw + 10];
  }
  CHECK(second_best(dup, 10) > second_best(f, 10));
  CHECK(second_best(dup, 53) > second_best(f, 53));
  CHECK(second_best(dup, 10) == Catch::Approx(1.0).margin(1e-9));
}
