#pragma once

#include <optional>
#include <vector>

#include "treegen/tensor.hpp"

namespace treegen {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Attention visibility: mask[i*S+j] true when query i may attend key j.
using AttnMask = std::vector<std::uint8_t>;
AttnMask causal_mask(int n);

struct AttentionParams {
  Tensor wq, wk, wv, wo, bo;
};

// Scaled dot-product multi-head attention with per-head column slices of the
// combined projections; masked positions get exactly zero weight.
Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv,
                            const AttentionParams& p, int n_heads,
                            const std::optional<AttnMask>& mask = std::nullopt);

// Two-way softmax gate over a pair of candidate branches (single head,
// pre-projected inputs): weights softmax{q.k1, q.k2} per row.
Tensor two_way_gate(const Tensor& q, const Tensor& k1, const Tensor& v1,
                    const Tensor& k2, const Tensor& v2);

struct GateParams {
  // projections from the attention-side features (query, key, value) and
  // from the auxiliary branch (key, value)
  Tensor wq, wky, wvy, wkc, wvc, wo, bo;
};

// Multi-head gating sub-layer: branch 1 comes from y (attention output),
// branch 2 from aux (character or rule-definition features).
Tensor gate_sublayer(const Tensor& y, const Tensor& aux, const GateParams& p, int n_heads);

struct SeparableConvParams {
  Tensor depthwise;  // [k, d]
  Tensor pointwise;  // [d, d]
  Tensor bias;       // [d]
};

// Depthwise-then-pointwise 1-D convolution over the sequence axis with zero
// padding; window must be odd.
Tensor separable_conv1d(const Tensor& x, const SeparableConvParams& p);

// Sinusoidal position embedding for position i in block b (Universal
// Transformer style offset); odd dims use cos unless paper_literal.
std::vector<double> position_embedding(int i, int b, int d, bool paper_literal = false);
// [L, d] constant tensor of position rows for one block, positions starting
// at `first` (nonzero for single-step decoding mid-sequence).
Tensor position_rows(int length, int block, int d, bool paper_literal = false,
                     int first = 0);

}  // namespace treegen
