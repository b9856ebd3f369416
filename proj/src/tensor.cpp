#include "treegen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace treegen {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw TensorError("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::shared_ptr<Tensor::Node> Tensor::make_node(Shape shape) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
    throw TensorError("data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::constant_rows(Shape shape, const std::vector<double>& data) {
  return from(std::move(shape), data, false);
}

double Tensor::item() const {
  if (size() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(int i, int j) const {
  if (ndim() != 2) throw TensorError("at(i,j) needs a 2-D tensor");
  return node_->value[static_cast<size_t>(i) * dim(1) + j];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

namespace {

void topo_visit(Tensor::Node* n, std::unordered_set<Tensor::Node*>& seen,
                std::vector<Tensor::Node*>& order) {
  // Iterative DFS; graphs can be deep for long training sequences.
  struct Frame {
    Tensor::Node* node;
    size_t next_parent = 0;
  };
  std::vector<Frame> stack;
  if (seen.insert(n).second) stack.push_back({n});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor::Node* p = f.node->parents[f.next_parent++].raw();
      if (seen.insert(p).second) stack.push_back({p});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void Tensor::backward() const {
  if (size() != 1) throw TensorError("backward() requires a scalar loss, got shape " +
                                     shape_str(shape()));
  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  topo_visit(node_.get(), seen, order);
  for (Node* n : order) n->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

namespace {

Tensor make_result(Shape shape, std::vector<Tensor> parents,
                   std::function<void(Tensor::Node&)> backward) {
  auto n = Tensor::make_node(std::move(shape));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), {a, b}, [](Tensor::Node& n) {
    auto& ga = n.parents[0].grad();
    auto& gb = n.parents[1].grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] += n.grad[i];
    }
  });
  for (size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = a.value()[i] + b.value()[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), {a, b}, [](Tensor::Node& n) {
    auto& ga = n.parents[0].grad();
    auto& gb = n.parents[1].grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i];
      gb[i] -= n.grad[i];
    }
  });
  for (size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = a.value()[i] - b.value()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), {a, b}, [](Tensor::Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    auto& ga = pa.grad();
    auto& gb = pb.grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga[i] += n.grad[i] * pb.value()[i];
      gb[i] += n.grad[i] * pa.value()[i];
    }
  });
  for (size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = a.value()[i] * b.value()[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_result(a.shape(), {a}, [c](Tensor::Node& n) {
    auto& ga = n.parents[0].grad();
    for (size_t i = 0; i < n.grad.size(); ++i) ga[i] += c * n.grad[i];
  });
  for (size_t i = 0; i < out.value().size(); ++i) out.value()[i] = c * a.value()[i];
  return out;
}

namespace {

void check_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  if (x.ndim() != 2 || v.size() != x.dim(1))
    throw TensorError(std::string(op) + ": need [L,d] and [d], got " +
                      shape_str(x.shape()) + " and " + shape_str(v.shape()));
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "add_rowvec");
  const int L = x.dim(0), d = x.dim(1);
  Tensor out = make_result(x.shape(), {x, v}, [L, d](Tensor::Node& n) {
    auto& gx = n.parents[0].grad();
    auto& gv = n.parents[1].grad();
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        double g = n.grad[static_cast<size_t>(i) * d + j];
        gx[static_cast<size_t>(i) * d + j] += g;
        gv[static_cast<size_t>(j)] += g;
      }
  });
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j)
      out.value()[static_cast<size_t>(i) * d + j] =
          x.value()[static_cast<size_t>(i) * d + j] + v.value()[static_cast<size_t>(j)];
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  check_rowvec(x, v, "mul_rowvec");
  const int L = x.dim(0), d = x.dim(1);
  Tensor out = make_result(x.shape(), {x, v}, [L, d](Tensor::Node& n) {
    auto& px = n.parents[0];
    auto& pv = n.parents[1];
    auto& gx = px.grad();
    auto& gv = pv.grad();
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        size_t ij = static_cast<size_t>(i) * d + j;
        gx[ij] += n.grad[ij] * pv.value()[static_cast<size_t>(j)];
        gv[static_cast<size_t>(j)] += n.grad[ij] * px.value()[ij];
      }
  });
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j) {
      size_t ij = static_cast<size_t>(i) * d + j;
      out.value()[ij] = x.value()[ij] * v.value()[static_cast<size_t>(j)];
    }
  return out;
}

Tensor mul_colvec(const Tensor& x, const Tensor& c) {
  if (x.ndim() != 2 || c.size() != x.dim(0))
    throw TensorError("mul_colvec: need [L,d] and [L], got " + shape_str(x.shape()) +
                      " and " + shape_str(c.shape()));
  const int L = x.dim(0), d = x.dim(1);
  Tensor out = make_result(x.shape(), {x, c}, [L, d](Tensor::Node& n) {
    auto& px = n.parents[0];
    auto& pc = n.parents[1];
    auto& gx = px.grad();
    auto& gc = pc.grad();
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        size_t ij = static_cast<size_t>(i) * d + j;
        gx[ij] += n.grad[ij] * pc.value()[static_cast<size_t>(i)];
        gc[static_cast<size_t>(i)] += n.grad[ij] * px.value()[ij];
      }
  });
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j) {
      size_t ij = static_cast<size_t>(i) * d + j;
      out.value()[ij] = x.value()[ij] * c.value()[static_cast<size_t>(i)];
    }
  return out;
}

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A^T[m,k] * B[k,n] where A is [k,m]
void gemm_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<size_t>(p) * m;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B^T[k,n] where B is [n,k]
void gemm_a_bt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw TensorError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_result({m, n}, {a, b}, [m, k, n](Tensor::Node& nd) {
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    // dA[m,k] = dC[m,n] B^T ; dB[k,n] = A^T dC
    gemm_a_bt(nd.grad.data(), pb.value().data(), pa.grad().data(), m, n, k);
    gemm_at_b(pa.value().data(), nd.grad.data(), pb.grad().data(), k, m, n);
  });
  gemm_acc(a.value().data(), b.value().data(), out.value().data(), m, k, n);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw TensorError("transpose: need 2-D tensor");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = make_result({n, m}, {a}, [m, n](Tensor::Node& nd) {
    auto& ga = nd.parents[0].grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        ga[static_cast<size_t>(j) * n + i] += nd.grad[static_cast<size_t>(i) * m + j];
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.value()[static_cast<size_t>(j) * m + i] = a.value()[static_cast<size_t>(i) * n + j];
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw TensorError("concat_cols: empty input");
  const int L = xs[0].dim(0);
  int total = 0;
  for (const auto& x : xs) {
    if (x.ndim() != 2 || x.dim(0) != L)
      throw TensorError("concat_cols: row-count mismatch " + shape_str(x.shape()));
    total += x.dim(1);
  }
  std::vector<int> widths;
  for (const auto& x : xs) widths.push_back(x.dim(1));
  Tensor out = make_result({L, total}, xs, [L, total, widths](Tensor::Node& nd) {
    int off = 0;
    for (size_t p = 0; p < nd.parents.size(); ++p) {
      auto& g = nd.parents[p].grad();
      const int w = widths[p];
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < w; ++j)
          g[static_cast<size_t>(i) * w + j] +=
              nd.grad[static_cast<size_t>(i) * total + off + j];
      off += w;
    }
  });
  int off = 0;
  for (const auto& x : xs) {
    const int w = x.dim(1);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < w; ++j)
        out.value()[static_cast<size_t>(i) * total + off + j] =
            x.value()[static_cast<size_t>(i) * w + j];
    off += w;
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw TensorError("concat_rows: empty input");
  const int d = xs[0].ndim() == 2 ? xs[0].dim(1) : xs[0].dim(0);
  int rows = 0;
  std::vector<int> counts;
  for (const auto& x : xs) {
    int r = x.ndim() == 2 ? x.dim(0) : 1;
    int w = x.ndim() == 2 ? x.dim(1) : x.dim(0);
    if (w != d) throw TensorError("concat_rows: width mismatch " + shape_str(x.shape()));
    counts.push_back(r);
    rows += r;
  }
  Tensor out = make_result({rows, d}, xs, [d, counts](Tensor::Node& nd) {
    size_t off = 0;
    for (size_t p = 0; p < nd.parents.size(); ++p) {
      auto& g = nd.parents[p].grad();
      size_t len = static_cast<size_t>(counts[p]) * d;
      for (size_t i = 0; i < len; ++i) g[i] += nd.grad[off + i];
      off += len;
    }
  });
  size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.value().begin(), x.value().end(), out.value().begin() + off);
    off += x.value().size();
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  if (x.ndim() != 2 || start < 0 || len <= 0 || start + len > x.dim(1))
    throw TensorError("slice_cols: bad range [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") for " + shape_str(x.shape()));
  const int L = x.dim(0), d = x.dim(1);
  Tensor out = make_result({L, len}, {x}, [L, d, start, len](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < len; ++j)
        g[static_cast<size_t>(i) * d + start + j] += nd.grad[static_cast<size_t>(i) * len + j];
  });
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < len; ++j)
      out.value()[static_cast<size_t>(i) * len + j] =
          x.value()[static_cast<size_t>(i) * d + start + j];
  return out;
}

Tensor slice_rows(const Tensor& x, int start, int len) {
  if (x.ndim() != 2 || start < 0 || len <= 0 || start + len > x.dim(0))
    throw TensorError("slice_rows: bad range for " + shape_str(x.shape()));
  const int d = x.dim(1);
  Tensor out = make_result({len, d}, {x}, [d, start, len](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < static_cast<size_t>(len) * d; ++i)
      g[static_cast<size_t>(start) * d + i] += nd.grad[i];
  });
  std::copy(x.value().begin() + static_cast<size_t>(start) * d,
            x.value().begin() + static_cast<size_t>(start + len) * d, out.value().begin());
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw TensorError("reshape: size mismatch " + shape_str(x.shape()) + " -> " +
                      shape_str(shape));
  Tensor out = make_result(std::move(shape), {x}, [](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
  });
  out.value() = x.value();
  return out;
}

Tensor take_rows(const Tensor& x, const std::vector<int>& idx) {
  if (x.ndim() != 2) throw TensorError("take_rows: need 2-D tensor");
  const int d = x.dim(1), L = x.dim(0);
  for (int i : idx)
    if (i < 0 || i >= L) throw TensorError("take_rows: index " + std::to_string(i) +
                                           " out of range for " + shape_str(x.shape()));
  const int n = static_cast<int>(idx.size());
  Tensor out = make_result({n, d}, {x}, [d, idx](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < d; ++j)
        g[static_cast<size_t>(idx[i]) * d + j] += nd.grad[i * d + j];
  });
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(x.value().begin() + static_cast<size_t>(idx[i]) * d,
              x.value().begin() + static_cast<size_t>(idx[i] + 1) * d,
              out.value().begin() + i * d);
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  return take_rows(table, ids);
}

Tensor gather_concat(const Tensor& table, const std::vector<std::vector<int>>& ids) {
  if (table.ndim() != 2) throw TensorError("gather_concat: table must be 2-D");
  if (ids.empty()) throw TensorError("gather_concat: empty id list");
  const int d = table.dim(1), V = table.dim(0);
  const size_t m = ids[0].size();
  for (const auto& row : ids) {
    if (row.size() != m) throw TensorError("gather_concat: ragged id rows");
    for (int i : row)
      if (i < 0 || i >= V) throw TensorError("gather_concat: id out of range");
  }
  const int L = static_cast<int>(ids.size());
  const int width = static_cast<int>(m) * d;
  Tensor out = make_result({L, width}, {table}, [d, ids](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    const size_t m = ids[0].size();
    const size_t width = m * d;
    for (size_t i = 0; i < ids.size(); ++i)
      for (size_t s = 0; s < m; ++s)
        for (int j = 0; j < d; ++j)
          g[static_cast<size_t>(ids[i][s]) * d + j] += nd.grad[i * width + s * d + j];
  });
  for (size_t i = 0; i < ids.size(); ++i)
    for (size_t s = 0; s < m; ++s)
      std::copy(table.value().begin() + static_cast<size_t>(ids[i][s]) * d,
                table.value().begin() + static_cast<size_t>(ids[i][s] + 1) * d,
                out.value().begin() + i * width + s * d);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.ndim() < 1 || x.ndim() > 2) throw TensorError("softmax_rows: need 1-D or 2-D");
  const int L = x.ndim() == 2 ? x.dim(0) : 1;
  const int d = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  Tensor out = make_result(x.shape(), {x}, [L, d](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (int i = 0; i < L; ++i) {
      const double* y = nd.value.data() + static_cast<size_t>(i) * d;
      const double* dy = nd.grad.data() + static_cast<size_t>(i) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += dy[j] * y[j];
      for (int j = 0; j < d; ++j) g[static_cast<size_t>(i) * d + j] += y[j] * (dy[j] - dot);
    }
  });
  for (int i = 0; i < L; ++i) {
    const double* in = x.value().data() + static_cast<size_t>(i) * d;
    double* y = out.value().data() + static_cast<size_t>(i) * d;
    double mx = in[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      y[j] = std::exp(in[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < d; ++j) y[j] /= z;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() != 2 && x.ndim() != 1) throw TensorError("layer_norm: need 1-D or 2-D");
  const int L = x.ndim() == 2 ? x.dim(0) : 1;
  const int d = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  if (gain.size() != d || bias.size() != d)
    throw TensorError("layer_norm: gain/bias size mismatch");
  // cache per-row mean and inverse std for backward
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(L) * 2);
  Tensor out = make_result(x.shape(), {x, gain, bias}, [L, d, stats, eps](Tensor::Node& nd) {
    auto& px = nd.parents[0];
    auto& pg = nd.parents[1];
    auto& gx = px.grad();
    auto& gg = pg.grad();
    auto& gb = nd.parents[2].grad();
    for (int i = 0; i < L; ++i) {
      const double mean = (*stats)[static_cast<size_t>(i) * 2];
      const double inv = (*stats)[static_cast<size_t>(i) * 2 + 1];
      const double* xv = px.value().data() + static_cast<size_t>(i) * d;
      const double* dy = nd.grad.data() + static_cast<size_t>(i) * d;
      double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
      for (int j = 0; j < d; ++j) {
        double xhat = (xv[j] - mean) * inv;
        double dyg = dy[j] * pg.value()[static_cast<size_t>(j)];
        sum_dyg += dyg;
        sum_dyg_xhat += dyg * xhat;
        gg[static_cast<size_t>(j)] += dy[j] * xhat;
        gb[static_cast<size_t>(j)] += dy[j];
      }
      for (int j = 0; j < d; ++j) {
        double xhat = (xv[j] - mean) * inv;
        double dyg = dy[j] * pg.value()[static_cast<size_t>(j)];
        gx[static_cast<size_t>(i) * d + j] +=
            inv * (dyg - sum_dyg / d - xhat * sum_dyg_xhat / d);
      }
    }
  });
  for (int i = 0; i < L; ++i) {
    const double* xv = x.value().data() + static_cast<size_t>(i) * d;
    double* y = out.value().data() + static_cast<size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xv[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xv[j] - mean) * (xv[j] - mean);
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(i) * 2] = mean;
    (*stats)[static_cast<size_t>(i) * 2 + 1] = inv;
    for (int j = 0; j < d; ++j)
      y[j] = (xv[j] - mean) * inv * gain.value()[static_cast<size_t>(j)] +
             bias.value()[static_cast<size_t>(j)];
  }
  return out;
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu_fwd(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor out = make_result(x.shape(), {x}, [](Tensor::Node& nd) {
    auto& px = nd.parents[0];
    auto& g = px.grad();
    for (size_t i = 0; i < nd.grad.size(); ++i)
      g[i] += nd.grad[i] * gelu_bwd(px.value()[i]);
  });
  for (size_t i = 0; i < out.value().size(); ++i) out.value()[i] = gelu_fwd(x.value()[i]);
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out = make_result(x.shape(), {x}, [](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < nd.grad.size(); ++i)
      g[i] += nd.grad[i] * (1.0 - nd.value[i] * nd.value[i]);
  });
  for (size_t i = 0; i < out.value().size(); ++i) out.value()[i] = std::tanh(x.value()[i]);
  return out;
}

Tensor sigmoid_t(const Tensor& x) {
  Tensor out = make_result(x.shape(), {x}, [](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < nd.grad.size(); ++i)
      g[i] += nd.grad[i] * nd.value[i] * (1.0 - nd.value[i]);
  });
  for (size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = 1.0 / (1.0 + std::exp(-x.value()[i]));
  return out;
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "rowwise_dot");
  if (a.ndim() != 2) throw TensorError("rowwise_dot: need 2-D tensors");
  const int L = a.dim(0), d = a.dim(1);
  Tensor out = make_result({L}, {a, b}, [L, d](Tensor::Node& nd) {
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    auto& ga = pa.grad();
    auto& gb = pb.grad();
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) {
        size_t ij = static_cast<size_t>(i) * d + j;
        ga[ij] += nd.grad[static_cast<size_t>(i)] * pb.value()[ij];
        gb[ij] += nd.grad[static_cast<size_t>(i)] * pa.value()[ij];
      }
  });
  for (int i = 0; i < L; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j)
      acc += a.value()[static_cast<size_t>(i) * d + j] * b.value()[static_cast<size_t>(i) * d + j];
    out.value()[static_cast<size_t>(i)] = acc;
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_result({1}, {x}, [](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[0];
  });
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  out.value()[0] = acc;
  return out;
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor select_item(const Tensor& x, std::int64_t flat_index) {
  if (flat_index < 0 || flat_index >= x.size())
    throw TensorError("select_item: index out of range");
  Tensor out = make_result({1}, {x}, [flat_index](Tensor::Node& nd) {
    nd.parents[0].grad()[static_cast<size_t>(flat_index)] += nd.grad[0];
  });
  out.value()[0] = x.value()[static_cast<size_t>(flat_index)];
  return out;
}

Tensor sum_items(const Tensor& x, const std::vector<std::int64_t>& flat_indices) {
  for (auto i : flat_indices)
    if (i < 0 || i >= x.size()) throw TensorError("sum_items: index out of range");
  Tensor out = make_result({1}, {x}, [flat_indices](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (auto i : flat_indices) g[static_cast<size_t>(i)] += nd.grad[0];
  });
  double acc = 0.0;
  for (auto i : flat_indices) acc += x.value()[static_cast<size_t>(i)];
  out.value()[0] = acc;
  return out;
}

Tensor neg_log_floored(const Tensor& p_scalar, double floor) {
  if (p_scalar.size() != 1) throw TensorError("neg_log_floored: need scalar");
  Tensor out = make_result({1}, {p_scalar}, [floor](Tensor::Node& nd) {
    double p = nd.parents[0].value()[0];
    if (p > floor) nd.parents[0].grad()[0] += nd.grad[0] * (-1.0 / p);
  });
  out.value()[0] = -std::log(std::max(p_scalar.value()[0], floor));
  return out;
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw TensorError("stack_scalars: empty input");
  for (const auto& x : xs)
    if (x.size() != 1) throw TensorError("stack_scalars: non-scalar element");
  const int n = static_cast<int>(xs.size());
  Tensor out = make_result({n}, xs, [](Tensor::Node& nd) {
    for (size_t i = 0; i < nd.parents.size(); ++i) nd.parents[i].grad()[0] += nd.grad[i];
  });
  for (int i = 0; i < n; ++i) out.value()[static_cast<size_t>(i)] = xs[static_cast<size_t>(i)].item();
  return out;
}

Tensor add_const(const Tensor& x, const std::vector<double>& bias) {
  if (static_cast<std::int64_t>(bias.size()) != x.size())
    throw TensorError("add_const: bias size mismatch");
  Tensor out = make_result(x.shape(), {x}, [](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
  });
  for (size_t i = 0; i < out.value().size(); ++i) out.value()[i] = x.value()[i] + bias[i];
  return out;
}

Tensor shift_rows(const Tensor& x, int offset) {
  if (x.ndim() != 2) throw TensorError("shift_rows: need 2-D tensor");
  const int L = x.dim(0), d = x.dim(1);
  Tensor out = make_result(x.shape(), {x}, [L, d, offset](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (int i = 0; i < L; ++i) {
      int src = i - offset;
      if (src < 0 || src >= L) continue;
      for (int j = 0; j < d; ++j)
        g[static_cast<size_t>(src) * d + j] += nd.grad[static_cast<size_t>(i) * d + j];
    }
  });
  for (int i = 0; i < L; ++i) {
    int src = i - offset;
    if (src < 0 || src >= L) continue;
    std::copy(x.value().begin() + static_cast<size_t>(src) * d,
              x.value().begin() + static_cast<size_t>(src + 1) * d,
              out.value().begin() + static_cast<size_t>(i) * d);
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw TensorError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double keep = 1.0 - rate;
  for (auto& m : *mask) m = (uni(rng) < rate) ? 0.0 : 1.0 / keep;
  Tensor out = make_result(x.shape(), {x}, [mask](Tensor::Node& nd) {
    auto& g = nd.parents[0].grad();
    for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i] * (*mask)[i];
  });
  for (size_t i = 0; i < out.value().size(); ++i) out.value()[i] = x.value()[i] * (*mask)[i];
  return out;
}

}  // namespace treegen
