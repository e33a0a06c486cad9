#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "more/errors.hpp"

namespace more {

// (C+1) x (C+1) counts, rows = ground truth, cols = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return n_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  std::uint64_t total() const;

  void accumulate(const std::vector<int>& pred, const std::vector<int>& gt);
  void merge(const ConfusionMatrix& other);

  std::uint64_t tp(std::size_t c) const { return at(c, c); }
  std::uint64_t fp(std::size_t c) const;
  std::uint64_t fn(std::size_t c) const;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double confusion_ratio = 0.0;  // FP / TP
  bool iou_defined = true;       // union > 0
  bool precision_defined = true;
  bool recall_defined = true;
  bool ratio_defined = true;     // TP > 0
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;  // size C+1, index 0 = background
  double miou = 0.0;
  bool miou_defined = true;

  // `class,iou,precision,recall,confusion_ratio` rows plus a summary row.
  std::string to_csv() const;
};

std::pair<std::vector<double>, double> miou(const ConfusionMatrix& cm);
double confusion_ratio(const ConfusionMatrix& cm, std::size_t c, bool* defined = nullptr);
std::pair<double, double> precision_recall(const ConfusionMatrix& cm, std::size_t c);

MetricsReport compute_report(const ConfusionMatrix& cm);

}  // namespace more
