#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "proxyforge/core.hpp"
#include "proxyforge/label_maps.hpp"

namespace proxyforge {

/// Rows are ground truth, columns prediction, over labels 0..L.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_labels = 21);

  int num_labels() const noexcept { return n_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  /// Pixels of ground-truth class `gt` that the prediction left unlabeled.
  std::uint64_t unlabeled(int gt) const { return unlabeled_[static_cast<std::size_t>(gt)]; }
  std::uint64_t total() const;
  void merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  friend void accumulate(ConfusionMatrix&, const SegmentationMask&, const SegmentationMask&);
  int n_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> unlabeled_;
};

/// Adds one image. Ground-truth ignore pixels are skipped. A predicted
/// ignore label counts against its ground-truth class only (a miss, never
/// a hit). Any other label outside 0..L is an InvalidArgument.
void accumulate(ConfusionMatrix& cm, const SegmentationMask& pred, const SegmentationMask& gt);

struct IouReport {
  std::vector<std::optional<double>> iou;  ///< per label 0..L; empty when the union is 0
  std::optional<double> mean;              ///< over defined entries
};

IouReport iou_report(const ConfusionMatrix& cm);

/// Header row of label names then "mean"; one data row in percent with one
/// decimal, "-" for undefined entries.
std::string format_report_csv(const IouReport& report, const CategoryTable& table);
std::string format_report_text(const IouReport& report, const CategoryTable& table);

}  // namespace proxyforge
