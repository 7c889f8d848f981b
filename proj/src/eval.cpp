#include "proxyforge/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace proxyforge {

ConfusionMatrix::ConfusionMatrix(int num_labels) : n_(num_labels) {
  if (num_labels < 1 || num_labels > CategoryTable::kIgnoreId) {
    throw InvalidArgument("ConfusionMatrix: label count out of range");
  }
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
  unlabeled_.assign(static_cast<std::size_t>(n_), 0);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}) +
         std::accumulate(unlabeled_.begin(), unlabeled_.end(), std::uint64_t{0});
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw InvalidArgument("ConfusionMatrix::merge: label counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (std::size_t i = 0; i < unlabeled_.size(); ++i) unlabeled_[i] += other.unlabeled_[i];
}

void accumulate(ConfusionMatrix& cm, const SegmentationMask& pred, const SegmentationMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.labels.size() != gt.labels.size()) {
    throw InvalidArgument("accumulate: prediction and ground truth sizes differ");
  }
  const int n = cm.n_;
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const int g = gt.labels[p];
    if (g == CategoryTable::kIgnoreId) continue;
    const int q = pred.labels[p];
    if (q == CategoryTable::kIgnoreId && g < n) {
      ++cm.unlabeled_[static_cast<std::size_t>(g)];
      continue;
    }
    if (g >= n || q >= n) {
      throw InvalidArgument("accumulate: label " + std::to_string(std::max(g, q)) + " outside 0.." +
                            std::to_string(n - 1));
    }
    ++cm.counts_[static_cast<std::size_t>(g) * n + q];
  }
}

IouReport iou_report(const ConfusionMatrix& cm) {
  const int n = cm.num_labels();
  IouReport r;
  r.iou.resize(static_cast<std::size_t>(n));
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t row = cm.unlabeled(c), col = 0;
    for (int k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t diag = cm.at(c, c);
    const std::uint64_t uni = row + col - diag;
    if (uni == 0) continue;
    const double v = static_cast<double>(diag) / static_cast<double>(uni);
    r.iou[static_cast<std::size_t>(c)] = v;
    sum += v;
    ++defined;
  }
  if (defined > 0) r.mean = sum / defined;
  return r;
}

namespace {

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

std::vector<std::pair<std::string, std::string>> columns(const IouReport& report, const CategoryTable& table) {
  if (report.iou.size() != static_cast<std::size_t>(table.num_labels())) {
    throw InvalidArgument("report does not match the category table");
  }
  std::vector<std::pair<std::string, std::string>> cols;
  for (int c = 0; c < table.num_labels(); ++c) cols.emplace_back(table.name_of(c), percent(report.iou[c]));
  cols.emplace_back("mean", percent(report.mean));
  return cols;
}

}  // namespace

std::string format_report_csv(const IouReport& report, const CategoryTable& table) {
  const auto cols = columns(report, table);
  std::string head, row;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) {
      head += ',';
      row += ',';
    }
    head += cols[i].first;
    row += cols[i].second;
  }
  return head + "\n" + row + "\n";
}

std::string format_report_text(const IouReport& report, const CategoryTable& table) {
  const auto cols = columns(report, table);
  std::string head, row;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::size_t w = std::max<std::size_t>(std::max(cols[i].first.size(), cols[i].second.size()), 5);
    const auto pad = [w](const std::string& s) { return std::string(w - s.size(), ' ') + s; };
    if (i) {
      head += ' ';
      row += ' ';
    }
    head += pad(cols[i].first);
    row += pad(cols[i].second);
  }
  return head + "\n" + row + "\n";
}

}  // namespace proxyforge
