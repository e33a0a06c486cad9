#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "more/autodiff.hpp"
#include "more/tensor.hpp"

namespace more {

// Ordered named tensor table. Iteration order is insertion order, which keeps
// optimizer updates and checkpoints deterministic.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t count() const { return items_.size(); }
  std::size_t scalar_count() const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  void append(const ParamSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Leaves of one tape, one per parameter, aligned with the ParamSet order.
class ParamVars {
 public:
  ParamVars(Tape& tape, const ParamSet& params);
  Var get(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }

 private:
  std::vector<std::pair<std::string, Var>> vars_;
};

// Truncated normal (resample outside 2 std), the usual transformer init.
double truncated_normal(std::mt19937_64& rng, double stddev);
Tensor truncated_normal_tensor(std::mt19937_64& rng, Shape shape, double stddev);
Tensor identity_matrix(std::size_t n);

}  // namespace more
