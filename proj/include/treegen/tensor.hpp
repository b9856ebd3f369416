#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace treegen {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major tensor with reverse-mode differentiation. Value semantics:
// copying a Tensor copies a handle to the shared node, so graphs stay alive
// as long as any downstream result does.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward_fn;  // pushes node.grad into parents

    std::vector<double>& ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
      return grad;
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor constant_rows(Shape shape, const std::vector<double>& data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& grad() { return node_->ensure_grad(); }

  double item() const;
  double at(int i, int j) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  // Clears accumulated gradient (keeps allocation).
  void zero_grad();

  // Reverse-mode sweep from a scalar loss. Gradients accumulate additively
  // into every reachable requires_grad tensor.
  void backward() const;

  Node* raw() const { return node_.get(); }

  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }
  static std::shared_ptr<Node> make_node(Shape shape);

 private:
  std::shared_ptr<Node> node_;
};

// --- elementwise / algebra ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // [L,d] + [d]
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_colvec(const Tensor& x, const Tensor& c);  // [L,d] * [L] per row

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// --- shape surgery ---
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, int start, int len);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor reshape(const Tensor& x, Shape shape);

// Row gather; backward scatter-adds. Used for embeddings and ancestor walks.
Tensor take_rows(const Tensor& x, const std::vector<int>& idx);
// Embedding lookup of ids into [n,d] table.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
// Per row i: concat of table rows ids[i][0..m-1] -> [L, m*d].
Tensor gather_concat(const Tensor& table, const std::vector<std::vector<int>>& ids);

// --- nonlinearities ---
Tensor softmax_rows(const Tensor& x);  // softmax over last axis of 1-D/2-D x
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid_t(const Tensor& x);

// --- reductions / scalars ---
Tensor rowwise_dot(const Tensor& a, const Tensor& b);  // [L,d],[L,d] -> [L]
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor select_item(const Tensor& x, std::int64_t flat_index);
Tensor sum_items(const Tensor& x, const std::vector<std::int64_t>& flat_indices);
Tensor neg_log_floored(const Tensor& p_scalar, double floor = 1e-12);
Tensor stack_scalars(const std::vector<Tensor>& xs);

// --- misc ---
// Adds a constant bias matrix (not differentiated); used for attention masks.
Tensor add_const(const Tensor& x, const std::vector<double>& bias);
// Shift rows by `offset` with zero padding (offset>0 shifts downward).
Tensor shift_rows(const Tensor& x, int offset);
// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

}  // namespace treegen
