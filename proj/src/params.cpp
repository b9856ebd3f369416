#include "treegen/params.hpp"

#include <algorithm>
#include <cmath>

namespace treegen {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw TensorError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  order_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParamStore::linear_weight(const std::string& name, int fan_in, int fan_out) {
  Tensor t = Tensor::zeros({fan_in, fan_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (auto& v : t.value()) v = uni(rng_);
  return add(name, t);
}

Tensor ParamStore::bias(const std::string& name, int n) {
  return add(name, Tensor::zeros({n}));
}

Tensor ParamStore::embedding_table(const std::string& name, int vocab, int d) {
  Tensor t = Tensor::zeros({vocab, d});
  std::normal_distribution<double> nrm(0.0, 0.02);
  for (auto& v : t.value()) v = nrm(rng_);
  return add(name, t);
}

Tensor ParamStore::ones(const std::string& name, int n) {
  Tensor t = Tensor::zeros({n});
  std::fill(t.value().begin(), t.value().end(), 1.0);
  return add(name, t);
}

bool ParamStore::has(const std::string& name) const {
  return std::find(order_.begin(), order_.end(), name) != order_.end();
}

Tensor ParamStore::get(const std::string& name) const {
  for (size_t i = 0; i < order_.size(); ++i)
    if (order_[i] == name) return tensors_[i];
  throw TensorError("unknown parameter: " + name);
}

std::vector<std::pair<std::string, Tensor>> ParamStore::items() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(order_.size());
  for (size_t i = 0; i < order_.size(); ++i) out.emplace_back(order_[i], tensors_[i]);
  return out;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& t : tensors_) t.zero_grad();
}

}  // namespace treegen
