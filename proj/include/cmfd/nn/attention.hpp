#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cmfd/nn/layers.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

// Spatial self-attention over a normalized feature map. Descriptors are
// projected into two c/8-dimensional spaces (f, g) and one c-dimensional
// space (h); softmax of f(m)^T g(n) over n weights the h values, and the
// result is added back through a learned residual scale that starts at 0.
class SpatialAttention {
 public:
  SpatialAttention() = default;
  SpatialAttention(int c, const std::string& name) : c_(c) {
    require(c % 8 == 0, "SpatialAttention: channel count must be divisible by 8");
    const int cr = c / 8;
    wf_ = Param(name + ".wf", Tensor(cr, c, 1));
    bf_ = Param(name + ".bf", Tensor(cr, 1, 1));
    wg_ = Param(name + ".wg", Tensor(cr, c, 1));
    bg_ = Param(name + ".bg", Tensor(cr, 1, 1));
    wh_ = Param(name + ".wh", Tensor(c, c, 1));
    bh_ = Param(name + ".bh", Tensor(c, 1, 1));
    lambda_ = Param(name + ".lambda", Tensor(1, 1, 1));  // starts at exactly 0
  }

  void init_random(Rng& rng) {
    auto fill = [&rng](Param& p, int fan_in) {
      double std = std::sqrt(1.0 / fan_in);
      for (size_t i = 0; i < p.value.size(); ++i) p.value[i] = std * rng.normal();
    };
    fill(wf_, c_);
    fill(wg_, c_);
    fill(wh_, c_);
    bf_.value.fill(0.0);
    bg_.value.fill(0.0);
    bh_.value.fill(0.0);
    lambda_.value.fill(0.0);
  }

  Tensor forward(const Tensor& x) {
    require(x.channels() == c_, "SpatialAttention: feature/parameter shape mismatch");
    input_ = x;
    const int hw = x.locations();
    const int cr = c_ / 8;

    f_.resize(static_cast<size_t>(cr) * hw);
    g_.resize(static_cast<size_t>(cr) * hw);
    h_.resize(static_cast<size_t>(c_) * hw);
    project(wf_, bf_, x, f_, cr);
    project(wg_, bg_, x, g_, cr);
    project(wh_, bh_, x, h_, c_);

    // s(m,n) = f(m) . g(n); beta = row softmax of s
    beta_.resize(static_cast<size_t>(hw) * hw);
    {
      ECMap fm(f_.data(), cr, hw), gm(g_.data(), cr, hw);
      EMap s(beta_.data(), hw, hw);
      s.noalias() = fm.transpose() * gm;
      for (int m = 0; m < hw; ++m) {
        double* row = beta_.data() + static_cast<size_t>(m) * hw;
        double mx = row[0];
        for (int n = 1; n < hw; ++n) mx = std::max(mx, row[n]);
        double z = 0;
        for (int n = 0; n < hw; ++n) {
          row[n] = std::exp(row[n] - mx);
          z += row[n];
        }
        for (int n = 0; n < hw; ++n) row[n] /= z;
      }
    }

    // o(m) = sum_n beta(m,n) h(n); out = lambda * o + x
    o_.resize(static_cast<size_t>(c_) * hw);
    {
      ECMap hm(h_.data(), c_, hw), bm(beta_.data(), hw, hw);
      EMap om(o_.data(), c_, hw);
      om.noalias() = hm * bm.transpose();
    }
    Tensor out = x;
    const double lambda = lambda_.value[0];
    for (size_t i = 0; i < out.size(); ++i) out[i] += lambda * o_[i];
    return out;
  }

  Tensor backward(const Tensor& gy) {
    const int hw = input_.locations();
    const int cr = c_ / 8;
    const double lambda = lambda_.value[0];

    // residual: gx starts as gy; lambda grad from o
    Tensor gx = gy;
    double glambda = 0;
    for (size_t i = 0; i < gy.size(); ++i) glambda += gy[i] * o_[i];
    lambda_.grad[0] += glambda;

    // go = lambda * gy
    std::vector<double> go(static_cast<size_t>(c_) * hw);
    for (size_t i = 0; i < go.size(); ++i) go[i] = lambda * gy[i];

    // o = h * beta^T  =>  gh = go * beta, gbeta = go^T * h
    std::vector<double> gh(static_cast<size_t>(c_) * hw);
    std::vector<double> gbeta(static_cast<size_t>(hw) * hw);
    {
      ECMap gom(go.data(), c_, hw), bm(beta_.data(), hw, hw), hm(h_.data(), c_, hw);
      EMap ghm(gh.data(), c_, hw);
      ghm.noalias() = gom * bm;
      EMap gbm(gbeta.data(), hw, hw);
      gbm.noalias() = gom.transpose() * hm;
    }

    // softmax backward per row: gs = beta .* (gbeta - rowdot(gbeta, beta))
    std::vector<double>& gs = gbeta;  // reuse storage
    for (int m = 0; m < hw; ++m) {
      double* grow = gs.data() + static_cast<size_t>(m) * hw;
      const double* brow = beta_.data() + static_cast<size_t>(m) * hw;
      double dot = 0;
      for (int n = 0; n < hw; ++n) dot += grow[n] * brow[n];
      for (int n = 0; n < hw; ++n) grow[n] = brow[n] * (grow[n] - dot);
    }

    // s = f^T g  =>  gf = g * gs^T, gg = f * gs
    std::vector<double> gf(static_cast<size_t>(cr) * hw), gg(static_cast<size_t>(cr) * hw);
    {
      ECMap fm(f_.data(), cr, hw), gm(g_.data(), cr, hw), gsm(gs.data(), hw, hw);
      EMap gfm(gf.data(), cr, hw), ggm(gg.data(), cr, hw);
      gfm.noalias() = gm * gsm.transpose();
      ggm.noalias() = fm * gsm;
    }

    // back through the three 1x1 projections into gx
    project_backward(wf_, bf_, gf, cr, gx);
    project_backward(wg_, bg_, gg, cr, gx);
    project_backward(wh_, bh_, gh, c_, gx);
    return gx;
  }

  std::vector<Param*> params() {
    return {&wf_, &bf_, &wg_, &bg_, &wh_, &bh_, &lambda_};
  }

  double lambda_value() const { return lambda_.value[0]; }
  Param& lambda_param() { return lambda_; }
  int channels() const { return c_; }

  // Row-softmax weights from the last forward; exposed for tests.
  const std::vector<double>& last_beta() const { return beta_; }

 private:
  void project(const Param& w, const Param& b, const Tensor& x, std::vector<double>& out,
               int out_c) const {
    const int hw = x.locations();
    ECMap wm(w.value.data(), out_c, c_);
    ECMap xm(x.data(), c_, hw);
    EMap om(out.data(), out_c, hw);
    om.noalias() = wm * xm;
    for (int oc = 0; oc < out_c; ++oc) om.row(oc).array() += b.value[oc];
  }

  void project_backward(Param& w, Param& b, const std::vector<double>& gout, int out_c,
                        Tensor& gx) {
    const int hw = input_.locations();
    ECMap gm(gout.data(), out_c, hw);
    ECMap xm(input_.data(), c_, hw);
    EMap gwm(w.grad.data(), out_c, c_);
    gwm.noalias() += gm * xm.transpose();
    for (int oc = 0; oc < out_c; ++oc) b.grad[oc] += gm.row(oc).sum();
    EMap gxm(gx.data(), c_, hw);
    ECMap wm(w.value.data(), out_c, c_);
    gxm.noalias() += wm.transpose() * gm;
  }

  int c_ = 0;
  Param wf_, bf_, wg_, bg_, wh_, bh_, lambda_;
  Tensor input_;
  std::vector<double> f_, g_, h_, o_, beta_;
};

}  // namespace cmfd::nn
