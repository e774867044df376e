#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cmfd/core.hpp"
#include "cmfd/nn/attention.hpp"
#include "cmfd/nn/correlation.hpp"
#include "cmfd/nn/layers.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

struct BackboneConfig {
  int t = 48;
  bool attention_enabled = true;
  std::string extractor = "vgg16";
  std::array<int, 3> aspp_rates{6, 12, 18};
  int aspp_channels = 48;
  uint64_t init_seed = 1234;

  void validate() const {
    require(t == 16 || t == 32 || t == 48 || t == 64,
            "BackboneConfig: supported T values are {16,32,48,64}");
    require(aspp_channels >= 1, "BackboneConfig: aspp_channels must be >= 1");
    for (int r : aspp_rates) require(r >= 1, "BackboneConfig: aspp rates must be >= 1");
  }
};

struct ExtractorLayout {
  std::array<int, 5> widths;
  std::array<int, 5> convs;
};

// VGG16-style default: pools close blocks 1-3, blocks 4-5 keep full
// resolution, block 5 runs at atrous rate 2. The tiny layout shares the
// structure with one narrow convolution per block for desk-scale training.
inline ExtractorLayout extractor_layout(const std::string& name) {
  if (name == "vgg16") return {{64, 128, 256, 512, 512}, {2, 2, 3, 3, 3}};
  if (name == "tiny") return {{8, 16, 16, 16, 16}, {1, 1, 1, 1, 1}};
  if (name == "resnet50" || name == "resnet101" || name == "mobilenetv2" ||
      name == "mobilenetv3" || name == "shufflenetv2") {
    throw NotImplementedError("extractor '" + name + "' is a config hook only");
  }
  throw std::invalid_argument("unknown extractor '" + name + "'");
}

constexpr int kExtractorStride = 8;

// Feature extraction trunk emitting the three same-sized map groups. The
// third group is the pooled block-3 output so all groups share the /8 grid.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  explicit FeatureExtractor(const ExtractorLayout& layout) : layout_(layout) {
    int in_c = 3;
    for (int b = 0; b < 5; ++b) {
      int rate = (b == 4) ? 2 : 1;  // block 5 keeps its field-of-view via atrous
      for (int k = 0; k < layout.convs[b]; ++k) {
        convs_.emplace_back(std::make_unique<Conv2d>(
            in_c, layout.widths[b], 3, rate,
            "extractor.b" + std::to_string(b + 1) + ".c" + std::to_string(k)));
        in_c = layout.widths[b];
      }
    }
    relus_.resize(convs_.size());
  }

  void init_random(Rng& rng) {
    for (auto& c : convs_) c->init_he(rng);
  }

  // Returns (F3, F4, F5), each at 1/8 of the input resolution.
  std::array<Tensor, 3> forward(const Tensor& image) {
    require(image.channels() == 3, "FeatureExtractor: expected a 3-channel image tensor");
    require(image.height() % kExtractorStride == 0 && image.width() % kExtractorStride == 0,
            "FeatureExtractor: input size must be divisible by the stride (8)");
    Tensor x = image;
    size_t li = 0;
    auto run_block = [&](int b) {
      for (int k = 0; k < layout_.convs[b]; ++k, ++li) {
        x = convs_[li]->forward(x);
        x = relus_[li].forward(x);
      }
    };
    run_block(0);
    x = pool1_.forward(x);
    run_block(1);
    x = pool2_.forward(x);
    run_block(2);
    x = pool3_.forward(x);
    Tensor f3 = x;
    run_block(3);
    Tensor f4 = x;
    run_block(4);
    return {std::move(f3), std::move(f4), std::move(x)};
  }

  // Gradients arrive for each emitted group; returns the image gradient.
  Tensor backward(const Tensor& g3, const Tensor& g4, const Tensor& g5) {
    size_t li = convs_.size();
    Tensor g = g5;
    auto back_block = [&](int b) {
      for (int k = layout_.convs[b] - 1; k >= 0; --k) {
        --li;
        g = relus_[li].backward(g);
        g = convs_[li]->backward(g);
      }
    };
    back_block(4);
    g.add_scaled(g4, 1.0);
    back_block(3);
    g.add_scaled(g3, 1.0);
    g = pool3_.backward(g);
    back_block(2);
    g = pool2_.backward(g);
    back_block(1);
    g = pool1_.backward(g);
    back_block(0);
    return g;
  }

  int feature_channels(int level) const {
    // level in {3,4,5}
    return layout_.widths[level - 1];
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& c : convs_) {
      out.push_back(&c->weight());
      out.push_back(&c->bias());
    }
    return out;
  }

 private:
  ExtractorLayout layout_{};
  std::vector<std::unique_ptr<Conv2d>> convs_;
  std::vector<ReLU> relus_;
  MaxPool2 pool1_, pool2_, pool3_;
};

// ASPP over the concatenated correlation maps followed by the decoding head:
// three atrous branches, a 1x1 branch and a pooled image-level branch, each
// producing aspp_channels maps, concatenated and decoded up to the input
// resolution as two-class logits.
class AsppDecoder {
 public:
  AsppDecoder() = default;
  AsppDecoder(int in_c, const std::array<int, 3>& rates, int channels)
      : channels_(channels),
        up4_(4),
        up2_(2),
        rate0_(in_c, channels, 3, rates[0], "aspp.r0"),
        rate1_(in_c, channels, 3, rates[1], "aspp.r1"),
        rate2_(in_c, channels, 3, rates[2], "aspp.r2"),
        point_(in_c, channels, 1, 1, "aspp.point"),
        image_(in_c, channels, 1, 1, "aspp.image"),
        head0_(channels * 5, channels, 3, 1, "decoder.c0"),
        head1_(channels, channels, 3, 1, "decoder.c1"),
        head2_(channels, channels, 3, 1, "decoder.c2"),
        logits_(channels, 2, 1, 1, "decoder.logits") {}

  void init_random(Rng& rng) {
    rate0_.init_he(rng);
    rate1_.init_he(rng);
    rate2_.init_he(rng);
    point_.init_he(rng);
    image_.init_he(rng);
    head0_.init_he(rng);
    head1_.init_he(rng);
    head2_.init_he(rng);
    logits_.init_he(rng);
  }

  Tensor forward(const Tensor& corr) {
    const int h = corr.height(), w = corr.width();
    Tensor b0 = relu0_.forward(rate0_.forward(corr));
    Tensor b1 = relu1_.forward(rate1_.forward(corr));
    Tensor b2 = relu2_.forward(rate2_.forward(corr));
    Tensor b3 = relu3_.forward(point_.forward(corr));
    Tensor pooled = gap_.forward(corr);
    Tensor b4 = broadcast_.forward(relu4_.forward(image_.forward(pooled)), h, w);
    Tensor cat = concat_channels({&b0, &b1, &b2, &b3, &b4});

    Tensor y = relu5_.forward(head0_.forward(cat));
    y = relu6_.forward(head1_.forward(y));
    y = up4_.forward(y);
    y = relu7_.forward(head2_.forward(y));
    y = up2_.forward(y);
    return logits_.forward(y);
  }

  Tensor backward(const Tensor& glogits) {
    Tensor g = logits_.backward(glogits);
    g = up2_.backward(g);
    g = head2_.backward(relu7_.backward(g));
    g = up4_.backward(g);
    g = head1_.backward(relu6_.backward(g));
    g = head0_.backward(relu5_.backward(g));

    auto parts = split_channels(g, {channels_, channels_, channels_, channels_, channels_});
    Tensor gc = rate0_.backward(relu0_.backward(parts[0]));
    gc.add_scaled(rate1_.backward(relu1_.backward(parts[1])), 1.0);
    gc.add_scaled(rate2_.backward(relu2_.backward(parts[2])), 1.0);
    gc.add_scaled(point_.backward(relu3_.backward(parts[3])), 1.0);
    Tensor gpooled = image_.backward(relu4_.backward(broadcast_.backward(parts[4])));
    gc.add_scaled(gap_.backward(gpooled), 1.0);
    return gc;
  }

  void zero_init_logits() { logits_.init_zero(); }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (Conv2d* c : {&rate0_, &rate1_, &rate2_, &point_, &image_, &head0_, &head1_,
                      &head2_, &logits_}) {
      out.push_back(&c->weight());
      out.push_back(&c->bias());
    }
    return out;
  }

 private:
  int channels_ = 0;
  BilinearUpsample up4_{4}, up2_{2};
  Conv2d rate0_, rate1_, rate2_, point_, image_;
  Conv2d head0_, head1_, head2_, logits_;
  ReLU relu0_, relu1_, relu2_, relu3_, relu4_, relu5_, relu6_, relu7_;
  GlobalAvgPool gap_;
  Broadcast broadcast_;
};

// The stage-1 self deep matching network: extract -> normalize -> attend ->
// correlate -> top-T -> rectify/normalize -> skip concat -> ASPP decode.
class SelfMatchNet {
 public:
  SelfMatchNet() = default;

  explicit SelfMatchNet(const BackboneConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    extractor_ = FeatureExtractor(extractor_layout(cfg.extractor));
    for (int l = 0; l < 3; ++l) {
      const int c = extractor_.feature_channels(l + 3);
      attention_[l] = SpatialAttention(c, "attn" + std::to_string(l + 3));
      corr_[l] = std::make_unique<CorrelationTopT>(cfg.t);
    }
    decoder_ = AsppDecoder(3 * cfg.t, cfg.aspp_rates, cfg.aspp_channels);
  }

  const BackboneConfig& config() const { return cfg_; }

  void init_random() {
    Rng rng(cfg_.init_seed);
    extractor_.init_random(rng);
    for (auto& a : attention_) a.init_random(rng);
    decoder_.init_random(rng);
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  std::array<Tensor, 3> extract_features(const Tensor& image) {
    ensure_ready(image);
    return extractor_.forward(image);
  }

  // Two-class logits at input resolution.
  Tensor forward_logits(const Tensor& image) {
    ensure_ready(image);
    auto features = extractor_.forward(image);
    const int hw = features[0].locations();
    require(cfg_.t <= hw, "SelfMatchNet: T exceeds the feature map area");

    std::array<Tensor, 3> corr_maps;
    for (int l = 0; l < 3; ++l) {
      Tensor f = norm_[l].forward(features[l]);
      if (cfg_.attention_enabled) f = attention_[l].forward(f);
      Tensor c = corr_[l]->forward(f);
      corr_maps[l] = rectnorm_[l].forward(c);
    }
    Tensor cat = concat_channels({&corr_maps[0], &corr_maps[1], &corr_maps[2]});
    return decoder_.forward(cat);
  }

  // Per-pixel forged-class probability.
  ScoreMap forward(const Tensor& image) {
    Tensor logits = forward_logits(image);
    return scores_from_logits(logits);
  }

  // Backward from a logits gradient; accumulates into parameter grads.
  void backward(const Tensor& glogits) {
    Tensor gcat = decoder_.backward(glogits);
    auto parts = split_channels(gcat, {cfg_.t, cfg_.t, cfg_.t});
    std::array<Tensor, 3> gf;
    for (int l = 0; l < 3; ++l) {
      Tensor g = rectnorm_[l].backward(parts[l]);
      g = corr_[l]->backward(g);
      if (cfg_.attention_enabled) g = attention_[l].backward(g);
      gf[l] = norm_[l].backward(g);
    }
    extractor_.backward(gf[0], gf[1], gf[2]);
  }

  static ScoreMap scores_from_logits(const Tensor& logits) {
    ScoreMap s(logits.height(), logits.width());
    const int hw = logits.height() * logits.width();
    for (int i = 0; i < hw; ++i) {
      double l0 = logits[i], l1 = logits[static_cast<size_t>(hw) + i];
      double m = std::max(l0, l1);
      double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      s[i] = e1 / (e0 + e1);
    }
    return s;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out = extractor_.params();
    if (cfg_.attention_enabled) {
      for (auto& a : attention_) {
        auto p = a.params();
        out.insert(out.end(), p.begin(), p.end());
      }
    }
    auto p = decoder_.params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  SpatialAttention& attention(int level) { return attention_[level - 3]; }
  AsppDecoder& decoder() { return decoder_; }
  FeatureExtractor& extractor() { return extractor_; }

 private:
  void ensure_ready(const Tensor& image) const {
    if (!initialized_) {
      throw StateError("SelfMatchNet: parameters not initialized (init_random or load)");
    }
    require(image.channels() == 3, "SelfMatchNet: expected 3-channel input");
    require(image.height() % kExtractorStride == 0 && image.width() % kExtractorStride == 0,
            "SelfMatchNet: input size must be divisible by 8 (caller resizes)");
  }

  BackboneConfig cfg_;
  bool initialized_ = false;
  FeatureExtractor extractor_;
  std::array<L2NormalizeDescriptors, 3> norm_;
  std::array<SpatialAttention, 3> attention_;
  std::array<std::unique_ptr<CorrelationTopT>, 3> corr_;
  std::array<ZeroOutNormalize, 3> rectnorm_;
  AsppDecoder decoder_;
};

}  // namespace cmfd::nn
