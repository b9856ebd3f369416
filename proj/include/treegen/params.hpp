#pragma once

#include <random>
#include <string>
#include <vector>

#include "treegen/tensor.hpp"

namespace treegen {

// Named trainable tensors. Names are dot-separated paths, stable across
// save/load; registration order is preserved for deterministic iteration.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 1) : rng_(seed) {}

  // Uniform(-1,1)/sqrt(fan_in) for projections, normal(0, 0.02) for embeddings.
  Tensor linear_weight(const std::string& name, int fan_in, int fan_out);
  Tensor bias(const std::string& name, int n);  // zeros
  Tensor embedding_table(const std::string& name, int vocab, int d);
  Tensor ones(const std::string& name, int n);  // layer-norm gains

  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::pair<std::string, Tensor>> items() const;
  std::int64_t total_size() const;

  void zero_grads();

  std::mt19937_64& rng() { return rng_; }

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<std::string> order_;
  std::vector<Tensor> tensors_;
  std::mt19937_64 rng_;
};

}  // namespace treegen
