#include "more/optimizer.hpp"

#include <cmath>

#include "more/errors.hpp"

namespace more {

void AdamW::step(ParamSet& params, const std::vector<Tensor>& grads) {
  auto& items = params.items();
  if (grads.size() != items.size()) throw ShapeError("AdamW::step: gradient count mismatch");
  if (m_.empty()) {
    for (const auto& [name, t] : items) {
      m_.emplace_back(t.shape());
      v_.emplace_back(t.shape());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < items.size(); ++p) {
    Tensor& w = items[p].second;
    const Tensor& g = grads[p];
    if (!w.same_shape(g)) throw ShapeError("AdamW::step: gradient shape mismatch for " + items[p].first);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

}  // namespace more
