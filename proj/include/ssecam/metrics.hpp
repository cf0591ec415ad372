#pragma once

#include <cstdint>
#include <vector>

#include "ssecam/label_map.hpp"

namespace ssecam {

/// Per-class pixel counts. Class 0 is background.
struct ConfusionCounts {
  std::vector<std::uint64_t> tp;
  std::vector<std::uint64_t> fn;
  std::vector<std::uint64_t> fp;

  ConfusionCounts() = default;
  explicit ConfusionCounts(int num_classes)
      : tp(num_classes, 0), fn(num_classes, 0), fp(num_classes, 0) {}

  int num_classes() const { return static_cast<int>(tp.size()); }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

/// For each pixel with ground truth g and prediction p: p == g counts a TP
/// for g; otherwise an FN for g and an FP for p.
void accumulate_confusion(const LabelMap& pred, const LabelMap& gt, ConfusionCounts& counts);

struct ClassMean {
  double value = 0.0;
  std::vector<int> included;
  std::vector<int> skipped;
};

/// mean_c TP/(TP+FN+FP) over classes that occur in prediction or truth.
/// The sum is exact (rational) and rounded once. Throws std::domain_error if
/// no class occurs.
ClassMean miou(const ConfusionCounts& counts);

/// mean over foreground classes of FN/TP; classes with TP = 0 are skipped.
/// Throws std::domain_error if every foreground class has TP = 0.
ClassMean m_fn(const ConfusionCounts& counts);

/// mean over foreground classes of FP/TP; same exclusion rule as m_fn.
ClassMean m_fp(const ConfusionCounts& counts);

struct MetricsReport {
  double miou = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent everywhere
  double m_fn = 0.0;                  // NaN when no foreground class has TP > 0
  double m_fp = 0.0;
  std::vector<int> skipped_classes;   // foreground classes with TP = 0
};

MetricsReport make_report(const ConfusionCounts& counts);

}  // namespace ssecam
