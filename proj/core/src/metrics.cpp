#include "more/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace more {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ValueError("ConfusionMatrix: need at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t v : counts_) s += v;
  return s;
}

void ConfusionMatrix::accumulate(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("accumulate: grid sizes differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p < 0 || g < 0 || p >= static_cast<int>(n_) || g >= static_cast<int>(n_))
      throw ValueError("accumulate: label out of range [0, " + std::to_string(n_ - 1) + "]");
    ++counts_[static_cast<std::size_t>(g) * n_ + static_cast<std::size_t>(p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ShapeError("merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < n_; ++g)
    if (g != c) s += at(g, c);
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p)
    if (p != c) s += at(c, p);
  return s;
}

std::pair<std::vector<double>, double> miou(const ConfusionMatrix& cm) {
  std::vector<double> ious(cm.num_classes(), 0.0);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t uni = cm.tp(c) + cm.fp(c) + cm.fn(c);
    if (uni == 0) continue;  // zero-union classes excluded from the mean
    ious[c] = static_cast<double>(cm.tp(c)) / static_cast<double>(uni);
    sum += ious[c];
    ++counted;
  }
  return {ious, counted ? sum / static_cast<double>(counted) : 0.0};
}

double confusion_ratio(const ConfusionMatrix& cm, std::size_t c, bool* defined) {
  if (cm.tp(c) == 0) {
    if (defined) *defined = false;
    return std::numeric_limits<double>::infinity();
  }
  if (defined) *defined = true;
  return static_cast<double>(cm.fp(c)) / static_cast<double>(cm.tp(c));
}

std::pair<double, double> precision_recall(const ConfusionMatrix& cm, std::size_t c) {
  const std::uint64_t tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c);
  const double prec = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double rec = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return {prec, rec};
}

MetricsReport compute_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.per_class.resize(cm.num_classes());
  auto [ious, mean] = miou(cm);
  r.miou = mean;
  r.miou_defined = cm.total() > 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    ClassMetrics& m = r.per_class[c];
    m.iou = ious[c];
    m.iou_defined = cm.tp(c) + cm.fp(c) + cm.fn(c) > 0;
    auto [p, rec] = precision_recall(cm, c);
    m.precision = p;
    m.recall = rec;
    m.precision_defined = cm.tp(c) + cm.fp(c) > 0;
    m.recall_defined = cm.tp(c) + cm.fn(c) > 0;
    m.confusion_ratio = confusion_ratio(cm, c, &m.ratio_defined);
  }
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "class,iou,precision,recall,confusion_ratio\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const ClassMetrics& m = per_class[c];
    out << c << "," << m.iou << "," << m.precision << "," << m.recall << ",";
    if (m.ratio_defined)
      out << m.confusion_ratio;
    else
      out << "inf";
    out << "\n";
  }
  out << "mean," << miou << ",,,\n";
  return out.str();
}

}  // namespace more
