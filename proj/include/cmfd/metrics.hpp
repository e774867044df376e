#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cmfd/core.hpp"

namespace cmfd {

struct PixelMetrics {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double iou = 0, precision = 0, recall = 0, f1 = 0;
};

// Confusion counts over pixels plus the derived ratios.
//
// Zero-denominator conventions: empty ground truth and empty prediction count
// as a perfect negative (all ratios 1); any other 0/0 ratio resolves to 0.
inline PixelMetrics pixel_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  require(pred.same_shape(gt), "pixel_metrics: shape mismatch");
  PixelMetrics m;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    m.tp += (p && g);
    m.fp += (p && !g);
    m.fn += (!p && g);
    m.tn += (!p && !g);
  }
  if (m.tp == 0 && m.fp == 0 && m.fn == 0) {
    m.iou = m.precision = m.recall = m.f1 = 1.0;
    return m;
  }
  m.precision = (m.tp + m.fp) > 0 ? double(m.tp) / double(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? double(m.tp) / double(m.tp + m.fn) : 0.0;
  m.iou = double(m.tp) / double(m.tp + m.fp + m.fn);
  m.f1 = 2.0 * double(m.tp) / double(2 * m.tp + m.fp + m.fn);
  return m;
}

struct MeanMetrics {
  double iou = 0, precision = 0, recall = 0, f1 = 0;
  size_t count = 0;
  bool defined() const { return count > 0; }
};

struct ImageLevelMetrics {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double tpr = 0, fpr = 0, f1 = 0;
};

struct AggregateReport {
  MeanMetrics protocol_all;        // mean over every evaluated image
  MeanMetrics protocol_detected;   // mean over images passing the detected rule
  MeanMetrics correctly_detected;  // mean over images with F1 > 0.5
  double detected_rate = 0;        // fraction of images with F1 > 0.5
  std::optional<ImageLevelMetrics> image_level;
};

// Detected rule for Protocol-Detected. The default treats an image as
// detected when its prediction has at least one positive pixel.
struct DetectedRule {
  long long min_predicted_pixels = 1;
  bool operator()(const PixelMetrics& m) const {
    return (m.tp + m.fp) >= min_predicted_pixels;
  }
};

namespace detail {

inline MeanMetrics mean_over(const std::vector<PixelMetrics>& items,
                             const std::vector<char>& select) {
  MeanMetrics out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (!select[i]) continue;
    out.iou += items[i].iou;
    out.precision += items[i].precision;
    out.recall += items[i].recall;
    out.f1 += items[i].f1;
    ++out.count;
  }
  if (out.count > 0) {
    out.iou /= out.count;
    out.precision /= out.count;
    out.recall /= out.count;
    out.f1 /= out.count;
  }
  return out;
}

}  // namespace detail

inline AggregateReport aggregate(const std::vector<PixelMetrics>& per_image,
                                 const DetectedRule& detected_rule = {}) {
  require(!per_image.empty(), "aggregate: empty metric list");
  AggregateReport report;
  std::vector<char> all(per_image.size(), 1);
  std::vector<char> detected(per_image.size(), 0);
  std::vector<char> correct(per_image.size(), 0);
  size_t n_correct = 0;
  for (size_t i = 0; i < per_image.size(); ++i) {
    detected[i] = detected_rule(per_image[i]) ? 1 : 0;
    correct[i] = per_image[i].f1 > 0.5 ? 1 : 0;
    n_correct += correct[i];
  }
  report.protocol_all = detail::mean_over(per_image, all);
  report.protocol_detected = detail::mean_over(per_image, detected);
  report.correctly_detected = detail::mean_over(per_image, correct);
  report.detected_rate = double(n_correct) / double(per_image.size());
  return report;
}

// Image-level TPR / FPR / F1 from per-image boolean decisions.
inline ImageLevelMetrics image_level_metrics(const std::vector<bool>& predictions,
                                             const std::vector<bool>& labels) {
  require(predictions.size() == labels.size(), "image_level_metrics: length mismatch");
  ImageLevelMetrics m;
  for (size_t i = 0; i < predictions.size(); ++i) {
    bool p = predictions[i], g = labels[i];
    m.tp += (p && g);
    m.fp += (p && !g);
    m.fn += (!p && g);
    m.tn += (!p && !g);
  }
  m.tpr = (m.tp + m.fn) > 0 ? double(m.tp) / double(m.tp + m.fn) : 0.0;
  m.fpr = (m.tn + m.fp) > 0 ? double(m.fp) / double(m.tn + m.fp) : 0.0;
  long long denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom > 0 ? 2.0 * double(m.tp) / double(denom) : 0.0;
  return m;
}

}  // namespace cmfd
