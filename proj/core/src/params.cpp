#include "more/params.hpp"

#include "more/errors.hpp"

namespace more {

void ParamSet::add(std::string name, Tensor value) {
  if (has(name)) throw ValueError("duplicate parameter name: " + name);
  items_.emplace_back(std::move(name), std::move(value));
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw ValueError("unknown parameter: " + name);
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ValueError("unknown parameter: " + name);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& [n, t] : other.items()) add(n, t);
}

ParamVars::ParamVars(Tape& tape, const ParamSet& params) {
  for (const auto& [name, t] : params.items())
    vars_.emplace_back(name, tape.leaf(t, name));
}

Var ParamVars::get(const std::string& name) const {
  for (const auto& [n, v] : vars_)
    if (n == name) return v;
  throw ValueError("unknown parameter: " + name);
}

double truncated_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(rng);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

Tensor truncated_normal_tensor(std::mt19937_64& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = truncated_normal(rng, stddev);
  return t;
}

Tensor identity_matrix(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace more
