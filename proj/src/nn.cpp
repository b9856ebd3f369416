#include "treegen/nn.hpp"

#include <cmath>

namespace treegen {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

AttnMask causal_mask(int n) {
  AttnMask m(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) m[static_cast<size_t>(i) * n + j] = 1;
  return m;
}

Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv,
                            const AttentionParams& p, int n_heads,
                            const std::optional<AttnMask>& mask) {
  const int d = x_q.dim(1);
  if (d % n_heads != 0)
    throw TensorError("attention: d=" + std::to_string(d) +
                      " not divisible by heads=" + std::to_string(n_heads));
  const int dk = d / n_heads;
  const int T = x_q.dim(0), S = x_kv.dim(0);

  std::vector<double> bias;
  if (mask) {
    if (mask->size() != static_cast<size_t>(T) * S)
      throw TensorError("attention: mask shape mismatch");
    bias.assign(static_cast<size_t>(T) * S, 0.0);
    for (int i = 0; i < T; ++i) {
      bool any = false;
      for (int j = 0; j < S; ++j) {
        if ((*mask)[static_cast<size_t>(i) * S + j])
          any = true;
        else
          bias[static_cast<size_t>(i) * S + j] = -1e9;
      }
      if (!any) throw TensorError("attention: row " + std::to_string(i) +
                                  " has no unmasked keys");
    }
  }

  Tensor q_all = matmul(x_q, p.wq);
  Tensor k_all = matmul(x_kv, p.wk);
  Tensor v_all = matmul(x_kv, p.wv);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int h = 0; h < n_heads; ++h) {
    Tensor q = slice_cols(q_all, h * dk, dk);
    Tensor k = slice_cols(k_all, h * dk, dk);
    Tensor v = slice_cols(v_all, h * dk, dk);
    Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    if (mask) logits = add_const(logits, bias);
    heads.push_back(matmul(softmax_rows(logits), v));
  }
  return add_rowvec(matmul(concat_cols(heads), p.wo), p.bo);
}

Tensor two_way_gate(const Tensor& q, const Tensor& k1, const Tensor& v1,
                    const Tensor& k2, const Tensor& v2) {
  // softmax over a pair reduces to a sigmoid of the logit difference,
  // which is shift-invariant by construction
  Tensor a1 = sigmoid_t(sub(rowwise_dot(q, k1), rowwise_dot(q, k2)));
  Tensor ones = Tensor::constant_rows({a1.dim(0)}, std::vector<double>(a1.dim(0), 1.0));
  Tensor a2 = sub(ones, a1);
  return add(mul_colvec(v1, a1), mul_colvec(v2, a2));
}

Tensor gate_sublayer(const Tensor& y, const Tensor& aux, const GateParams& p, int n_heads) {
  if (y.shape() != aux.shape())
    throw TensorError("gate: shape mismatch " + shape_str(y.shape()) + " vs " +
                      shape_str(aux.shape()));
  const int d = y.dim(1);
  const int dk = d / n_heads;
  Tensor q = matmul(y, p.wq);
  Tensor ky = matmul(y, p.wky);
  Tensor vy = matmul(y, p.wvy);
  Tensor kc = matmul(aux, p.wkc);
  Tensor vc = matmul(aux, p.wvc);
  std::vector<Tensor> heads;
  for (int h = 0; h < n_heads; ++h)
    heads.push_back(two_way_gate(slice_cols(q, h * dk, dk), slice_cols(ky, h * dk, dk),
                                 slice_cols(vy, h * dk, dk), slice_cols(kc, h * dk, dk),
                                 slice_cols(vc, h * dk, dk)));
  return add_rowvec(matmul(concat_cols(heads), p.wo), p.bo);
}

Tensor separable_conv1d(const Tensor& x, const SeparableConvParams& p) {
  const int k = p.depthwise.dim(0);
  if (k % 2 == 0) throw TensorError("separable_conv1d: window must be odd");
  const int half = (k - 1) / 2;
  Tensor acc;
  for (int w = 0; w < k; ++w) {
    // out[i] += depthwise[w] ⊙ x[i - half + w], zero-padded at the edges
    Tensor tap = mul_rowvec(shift_rows(x, half - w), take_rows(p.depthwise, {w}));
    acc = acc.defined() ? add(acc, tap) : tap;
  }
  return add_rowvec(matmul(acc, p.pointwise), p.bias);
}

std::vector<double> position_embedding(int i, int b, int d, bool paper_literal) {
  std::vector<double> out(static_cast<size_t>(d));
  for (int j = 0; 2 * j < d; ++j) {
    double angle = (i + b) / std::pow(10000.0, 2.0 * j / d);
    out[static_cast<size_t>(2 * j)] = std::sin(angle);
    if (2 * j + 1 < d)
      out[static_cast<size_t>(2 * j + 1)] = paper_literal ? std::sin(angle) : std::cos(angle);
  }
  return out;
}

Tensor position_rows(int length, int block, int d, bool paper_literal, int first) {
  std::vector<double> data(static_cast<size_t>(length) * d);
  for (int i = 0; i < length; ++i) {
    auto row = position_embedding(first + i, block, d, paper_literal);
    std::copy(row.begin(), row.end(), data.begin() + static_cast<size_t>(i) * d);
  }
  return Tensor::constant_rows({length, d}, data);
}

}  // namespace treegen
