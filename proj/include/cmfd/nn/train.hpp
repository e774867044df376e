#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cmfd/core.hpp"
#include "cmfd/nn/backbone.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

// Spatial cross-entropy between two-class logits and a binary mask,
// averaged over pixels.
class SpatialCrossEntropy {
 public:
  double forward(const Tensor& logits, const BinaryMask& mask) {
    require(logits.channels() == 2, "SpatialCrossEntropy: expected two-class logits");
    require(logits.height() == mask.rows() && logits.width() == mask.cols(),
            "SpatialCrossEntropy: logits/mask shape mismatch");
    h_ = logits.height();
    w_ = logits.width();
    const int hw = h_ * w_;
    p1_.assign(hw, 0.0);
    mask_ = mask;
    double loss = 0;
    for (int i = 0; i < hw; ++i) {
      double l0 = logits[i], l1 = logits[static_cast<size_t>(hw) + i];
      double m = std::max(l0, l1);
      double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      double p1 = e1 / (e0 + e1);
      p1_[i] = p1;
      double p = mask[i] ? p1 : 1.0 - p1;
      loss -= std::log(std::max(p, 1e-300));
    }
    return loss / hw;
  }

  Tensor backward() const {
    const int hw = h_ * w_;
    Tensor g(2, h_, w_);
    const double inv = 1.0 / hw;
    for (int i = 0; i < hw; ++i) {
      double y = mask_[i] ? 1.0 : 0.0;
      g[static_cast<size_t>(hw) + i] = (p1_[i] - y) * inv;
      g[i] = (y - p1_[i]) * inv;  // = (1 - y) - p0
    }
    return g;
  }

 private:
  int h_ = 0, w_ = 0;
  std::vector<double> p1_;
  BinaryMask mask_;
};

// Adadelta: per-element running averages of squared gradients and squared
// updates; no global learning-rate schedule beyond the optional multiplier.
class Adadelta {
 public:
  explicit Adadelta(std::vector<Param*> params, double rho = 0.95, double eps = 1e-6,
                    double lr = 1.0)
      : params_(std::move(params)), rho_(rho), eps_(eps), lr_(lr) {
    for (Param* p : params_) {
      accum_grad_.emplace_back(p->value.channels(), p->value.height(), p->value.width());
      accum_update_.emplace_back(p->value.channels(), p->value.height(), p->value.width());
    }
  }

  void step() {
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Param& p = *params_[pi];
      Tensor& eg = accum_grad_[pi];
      Tensor& ex = accum_update_[pi];
      for (size_t i = 0; i < p.value.size(); ++i) {
        double g = p.grad[i];
        eg[i] = rho_ * eg[i] + (1.0 - rho_) * g * g;
        double dx = -std::sqrt((ex[i] + eps_) / (eg[i] + eps_)) * g * lr_;
        ex[i] = rho_ * ex[i] + (1.0 - rho_) * dx * dx;
        p.value[i] += dx;
      }
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> accum_grad_, accum_update_;
  double rho_, eps_, lr_;
};

struct TrainSample {
  ByteImage image;
  BinaryMask mask;
};

inline Tensor image_to_tensor(const ByteImage& img) {
  Tensor t(3, img.rows(), img.cols());
  const int hw = img.rows() * img.cols();
  for (int i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      t[static_cast<size_t>(c) * hw + i] = img[i][c] / 255.0;
    }
  }
  return t;
}

struct TrainOptions {
  int epochs = 1;
  int batch = 6;
  double lr = 1.0;
  double rho = 0.95;
  double eps = 1e-6;
  uint64_t shuffle_seed = 7;
  // Called after every optimizer step with (step index, mean batch loss).
  std::function<void(int, double)> on_step;
};

struct LossTrace {
  std::vector<double> per_step;
  double initial() const { return per_step.empty() ? 0.0 : per_step.front(); }
  double final_loss() const { return per_step.empty() ? 0.0 : per_step.back(); }
};

// Single-writer training loop: gradients accumulate over each mini-batch and
// one Adadelta step applies per batch.
inline LossTrace train(SelfMatchNet& net, const std::vector<TrainSample>& dataset,
                       const TrainOptions& opt = {}) {
  require(!dataset.empty(), "train: empty dataset");
  require(opt.epochs >= 1 && opt.batch >= 1, "train: epochs and batch must be >= 1");

  Adadelta optimizer(net.params(), opt.rho, opt.eps, opt.lr);
  LossTrace trace;
  Rng rng(opt.shuffle_seed);

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  int step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // Fisher-Yates with the project RNG for reproducible shuffles.
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }
    for (size_t pos = 0; pos < order.size(); pos += opt.batch) {
      size_t end = std::min(order.size(), pos + opt.batch);
      optimizer.zero_grad();
      double batch_loss = 0;
      int n = 0;
      for (size_t s = pos; s < end; ++s, ++n) {
        const TrainSample& sample = dataset[order[s]];
        Tensor input = image_to_tensor(sample.image);
        Tensor logits = net.forward_logits(input);
        SpatialCrossEntropy loss;
        batch_loss += loss.forward(logits, sample.mask);
        Tensor glogits = loss.backward();
        // average over the batch
        for (size_t i = 0; i < glogits.size(); ++i) glogits[i] /= double(end - pos);
        net.backward(glogits);
      }
      batch_loss /= n;
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 " (epoch " + std::to_string(epoch) + ")");
      }
      optimizer.step();
      trace.per_step.push_back(batch_loss);
      if (opt.on_step) opt.on_step(step, batch_loss);
      ++step;
    }
  }
  return trace;
}

}  // namespace cmfd::nn
