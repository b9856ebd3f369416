#include "treegen/model.hpp"

#include <algorithm>
#include <cmath>

namespace treegen {

namespace {

std::string blk(const std::string& stage, int b, const std::string& rest) {
  return stage + ".b" + std::to_string(b) + "." + rest;
}

}  // namespace

Model::Model(ModelConfig cfg, const Grammar& grammar)
    : cfg_(cfg), params_(cfg.seed), forward_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
  cfg_.n_rules = grammar.num_rules();
  cfg_.n_symbols = grammar.num_symbols();
  if (cfg_.word_vocab < 2 || cfg_.char_vocab < 2)
    throw ConfigError("model requires word/char vocab sizes (>= 2) in the config");
  cfg_.validate();
  const int d = cfg_.d;

  int max_arity = 1;
  for (const auto& r : grammar.rules())
    max_arity = std::max(max_arity, static_cast<int>(r.children.size()));
  if (max_arity > cfg_.max_rule_arity)
    throw ConfigError("grammar arity " + std::to_string(max_arity) +
                      " exceeds max_rule_arity " + std::to_string(cfg_.max_rule_arity));

  copy_token_sym_ = cfg_.n_symbols + 1;
  copy_rule_row_ = cfg_.n_rules;
  for (const auto& r : grammar.rules()) {
    std::vector<int> def(static_cast<size_t>(1 + cfg_.max_rule_arity), 0);
    def[0] = r.parent;
    for (size_t i = 0; i < r.children.size(); ++i) def[i + 1] = r.children[i];
    rule_defs_.push_back(std::move(def));
  }

  auto& p = params_;
  // NL reader
  p.embedding_table("nl.word_emb", cfg_.word_vocab, d);
  p.embedding_table("nl.char_emb", cfg_.char_vocab, d);
  p.linear_weight("nl.char_fc.w", cfg_.char_max_len * d, d);
  p.bias("nl.char_fc.b", d);
  p.ones("nl.char_ln.g", d);
  p.bias("nl.char_ln.b", d);
  for (int b = 0; b < cfg_.n_nl_blocks; ++b) {
    for (const char* w : {"self.wq", "self.wk", "self.wv", "self.wo"})
      p.linear_weight(blk("nl", b, w), d, d);
    p.bias(blk("nl", b, "self.bo"), d);
    p.ones(blk("nl", b, "self_ln.g"), d);
    p.bias(blk("nl", b, "self_ln.b"), d);
    if (!cfg_.disable_char_embed) {
      for (const char* w : {"gate.wq", "gate.wky", "gate.wvy", "gate.wkc", "gate.wvc", "gate.wo"})
        p.linear_weight(blk("nl", b, w), d, d);
      p.bias(blk("nl", b, "gate.bo"), d);
      p.ones(blk("nl", b, "gate_ln.g"), d);
      p.bias(blk("nl", b, "gate_ln.b"), d);
    }
    for (const char* c : {"conv1", "conv2"}) {
      p.linear_weight(blk("nl", b, std::string(c) + ".dw"), cfg_.conv_window, d);
      p.linear_weight(blk("nl", b, std::string(c) + ".pw"), d, d);
      p.bias(blk("nl", b, std::string(c) + ".b"), d);
    }
    p.ones(blk("nl", b, "conv_ln.g"), d);
    p.bias(blk("nl", b, "conv_ln.b"), d);
  }

  // AST reader
  p.embedding_table("ast.rule_emb", cfg_.n_rules + 1, d);
  p.embedding_table("ast.sym_emb", cfg_.n_symbols + 2, d);
  p.embedding_table("ast.depth_emb", cfg_.max_depth + 1, d);
  p.linear_weight("ast.rdef_content.w", (1 + cfg_.max_rule_arity) * d, d);
  p.bias("ast.rdef_content.b", d);
  p.linear_weight("ast.rdef_out.w", 3 * d, d);
  p.bias("ast.rdef_out.b", d);
  p.ones("ast.rdef_ln.g", d);
  p.bias("ast.rdef_ln.b", d);
  for (int b = 0; b < cfg_.n_ast_blocks; ++b) {
    if (!cfg_.disable_self_att) {
      for (const char* w : {"self.wq", "self.wk", "self.wv", "self.wo"})
        p.linear_weight(blk("ast", b, w), d, d);
      p.bias(blk("ast", b, "self.bo"), d);
      p.ones(blk("ast", b, "self_ln.g"), d);
      p.bias(blk("ast", b, "self_ln.b"), d);
    }
    if (!cfg_.disable_rule_def) {
      for (const char* w : {"gate.wq", "gate.wky", "gate.wvy", "gate.wkc", "gate.wvc", "gate.wo"})
        p.linear_weight(blk("ast", b, w), d, d);
      p.bias(blk("ast", b, "gate.bo"), d);
      p.ones(blk("ast", b, "gate_ln.g"), d);
      p.bias(blk("ast", b, "gate_ln.b"), d);
    }
    for (const char* w : {"nlatt.wq", "nlatt.wk", "nlatt.wv", "nlatt.wo"})
      p.linear_weight(blk("ast", b, w), d, d);
    p.bias(blk("ast", b, "nlatt.bo"), d);
    p.ones(blk("ast", b, "nlatt_ln.g"), d);
    p.bias(blk("ast", b, "nlatt_ln.b"), d);
    if (b < cfg_.tree_conv_blocks) {
      p.linear_weight(blk("ast", b, "tconv.w"), tree_conv_window() * d, d);
      p.bias(blk("ast", b, "tconv.b"), d);
      p.ones(blk("ast", b, "tconv_ln.g"), d);
      p.bias(blk("ast", b, "tconv_ln.b"), d);
    }
  }
  for (const char* t : {"ast.final_tconv1", "ast.final_tconv2"}) {
    p.linear_weight(std::string(t) + ".w", tree_conv_window() * d, d);
    p.bias(std::string(t) + ".b", d);
    p.ones(std::string(t) + "_ln.g", d);
    p.bias(std::string(t) + "_ln.b", d);
  }

  // Decoder
  p.linear_weight("dec.path_fc.w", cfg_.max_path_len * d, d);
  p.bias("dec.path_fc.b", d);
  p.ones("dec.path_ln.g", d);
  p.bias("dec.path_ln.b", d);
  for (int b = 0; b < cfg_.n_dec_blocks; ++b) {
    for (const char* w : {"astatt.wq", "astatt.wk", "astatt.wv", "astatt.wo"})
      p.linear_weight(blk("dec", b, w), d, d);
    p.bias(blk("dec", b, "astatt.bo"), d);
    p.ones(blk("dec", b, "astatt_ln.g"), d);
    p.bias(blk("dec", b, "astatt_ln.b"), d);
    for (const char* w : {"nlatt.wq", "nlatt.wk", "nlatt.wv", "nlatt.wo"})
      p.linear_weight(blk("dec", b, w), d, d);
    p.bias(blk("dec", b, "nlatt.bo"), d);
    p.ones(blk("dec", b, "nlatt_ln.g"), d);
    p.bias(blk("dec", b, "nlatt_ln.b"), d);
    p.linear_weight(blk("dec", b, "fc1.w"), d, cfg_.fc_hidden);
    p.bias(blk("dec", b, "fc1.b"), cfg_.fc_hidden);
    p.linear_weight(blk("dec", b, "fc2.w"), cfg_.fc_hidden, d);
    p.bias(blk("dec", b, "fc2.b"), d);
    p.ones(blk("dec", b, "fc_ln.g"), d);
    p.bias(blk("dec", b, "fc_ln.b"), d);
  }
  // output head
  p.linear_weight("out.gate.w", d, 1);
  p.bias("out.gate.b", 1);
  p.linear_weight("out.rule.w", d, cfg_.n_rules);
  p.bias("out.rule.b", cfg_.n_rules);
  if (!cfg_.disable_pointer) {
    p.linear_weight("out.ptr.w1", d, d);
    p.linear_weight("out.ptr.w2", d, d);
    p.linear_weight("out.ptr.v", d, 1);
  }
}

AttentionParams Model::attn(const std::string& prefix) const {
  return {params_.get(prefix + ".wq"), params_.get(prefix + ".wk"),
          params_.get(prefix + ".wv"), params_.get(prefix + ".wo"),
          params_.get(prefix + ".bo")};
}

GateParams Model::gatep(const std::string& prefix) const {
  return {params_.get(prefix + ".wq"), params_.get(prefix + ".wky"),
          params_.get(prefix + ".wvy"), params_.get(prefix + ".wkc"),
          params_.get(prefix + ".wvc"), params_.get(prefix + ".wo"),
          params_.get(prefix + ".bo")};
}

SeparableConvParams Model::convp(const std::string& prefix) const {
  return {params_.get(prefix + ".dw"), params_.get(prefix + ".pw"),
          params_.get(prefix + ".b")};
}

Tensor Model::drop(const Tensor& x, bool training) {
  return dropout(x, cfg_.dropout, training, forward_rng_);
}

Tensor Model::residual_ln(const Tensor& x, const Tensor& sub, const std::string& ln_prefix,
                          bool training) {
  return layer_norm(add(x, drop(sub, training)), params_.get(ln_prefix + ".g"),
                    params_.get(ln_prefix + ".b"));
}

Tensor Model::nl_block(const Tensor& x, const Tensor& char_feats, int block, bool training) {
  Tensor y = residual_ln(
      x, multi_head_attention(x, x, attn(blk("nl", block, "self")), cfg_.n_heads),
      blk("nl", block, "self_ln"), training);
  if (!cfg_.disable_char_embed)
    y = residual_ln(y, gate_sublayer(y, char_feats, gatep(blk("nl", block, "gate")), cfg_.n_heads),
                    blk("nl", block, "gate_ln"), training);
  Tensor c = separable_conv1d(y, convp(blk("nl", block, "conv1")));
  c = separable_conv1d(gelu(c), convp(blk("nl", block, "conv2")));
  return residual_ln(y, c, blk("nl", block, "conv_ln"), training);
}

NlEncoding Model::encode_nl(const NlInput& in, bool training) {
  if (in.tokens.empty()) throw TensorError("encode_nl: empty token list");
  const int d = cfg_.d;
  Tensor char_concat = gather_concat(params_.get("nl.char_emb"), in.char_ids);
  Tensor char_feats =
      layer_norm(linear(char_concat, params_.get("nl.char_fc.w"), params_.get("nl.char_fc.b")),
                 params_.get("nl.char_ln.g"), params_.get("nl.char_ln.b"));
  Tensor x = embedding(params_.get("nl.word_emb"), in.token_ids);
  const int L = static_cast<int>(in.tokens.size());
  for (int b = 0; b < cfg_.n_nl_blocks; ++b) {
    x = add(x, position_rows(L, b + 1, d, cfg_.position_paper_literal));
    x = nl_block(x, char_feats, b, training);
  }
  NlEncoding enc;
  enc.features = x;
  enc.char_features = char_feats;
  enc.tokens = in.tokens;
  return enc;
}

AstInputs Model::make_ast_inputs(const std::vector<AppliedRule>& applied,
                                 const std::vector<int>& depths,
                                 const std::vector<int>& parent_links) const {
  AstInputs in;
  for (size_t i = 0; i < applied.size(); ++i) {
    const auto& a = applied[i];
    if (a.is_copy()) {
      in.rule_rows.push_back(copy_rule_row_);
      std::vector<int> def(static_cast<size_t>(1 + cfg_.max_rule_arity), 0);
      def[0] = a.parent_symbol;
      def[1] = copy_token_sym_;
      in.def_ids.push_back(std::move(def));
    } else {
      in.rule_rows.push_back(a.rule_id);
      in.def_ids.push_back(rule_defs_.at(static_cast<size_t>(a.rule_id)));
    }
    in.depth_ids.push_back(std::min(depths[i], cfg_.max_depth));
  }
  in.parent_links = parent_links;
  return in;
}

AstInputs Model::make_ast_inputs(const DerivationState& state) const {
  return make_ast_inputs(state.applied, state.depths, state.rule_parent_index);
}

Tensor Model::rule_definition_encoding(const AstInputs& in, bool training) {
  (void)training;
  Tensor sym = params_.get("ast.sym_emb");
  Tensor content = linear(gather_concat(sym, in.def_ids), params_.get("ast.rdef_content.w"),
                          params_.get("ast.rdef_content.b"));
  Tensor rule_rows = embedding(params_.get("ast.rule_emb"), in.rule_rows);
  std::vector<int> alphas;
  for (const auto& def : in.def_ids) alphas.push_back(def[0]);
  Tensor alpha_rows = embedding(sym, alphas);
  Tensor fused = linear(concat_cols({rule_rows, content, alpha_rows}),
                        params_.get("ast.rdef_out.w"), params_.get("ast.rdef_out.b"));
  return layer_norm(fused, params_.get("ast.rdef_ln.g"), params_.get("ast.rdef_ln.b"));
}

Tensor Model::tree_conv_layer(const Tensor& y, const std::vector<std::vector<int>>& ancestors,
                              const std::string& prefix, bool gelu_act, bool training) {
  const int kt = tree_conv_window();
  std::vector<Tensor> cols = {y};
  for (int k = 1; k < kt; ++k) cols.push_back(take_rows(y, ancestors[static_cast<size_t>(k - 1)]));
  Tensor z = linear(concat_cols(cols), params_.get(prefix + ".w"), params_.get(prefix + ".b"));
  if (gelu_act) z = gelu(z);
  return layer_norm(drop(z, training), params_.get(prefix + "_ln.g"),
                    params_.get(prefix + "_ln.b"));
}

Tensor Model::ast_block(const Tensor& x, const Tensor& y_rule, const Tensor& nl_feats,
                        const std::vector<std::vector<int>>& ancestors, int block,
                        bool use_tree_conv, bool training) {
  const int P = x.dim(0);
  Tensor y = x;
  if (!cfg_.disable_self_att)
    y = residual_ln(y,
                    multi_head_attention(y, y, attn(blk("ast", block, "self")), cfg_.n_heads,
                                         causal_mask(P)),
                    blk("ast", block, "self_ln"), training);
  if (!cfg_.disable_rule_def)
    y = residual_ln(y, gate_sublayer(y, y_rule, gatep(blk("ast", block, "gate")), cfg_.n_heads),
                    blk("ast", block, "gate_ln"), training);
  y = residual_ln(y, multi_head_attention(y, nl_feats, attn(blk("ast", block, "nlatt")), cfg_.n_heads),
                  blk("ast", block, "nlatt_ln"), training);
  if (use_tree_conv)
    y = tree_conv_layer(y, ancestors, blk("ast", block, "tconv"), true, training);
  return y;
}

Tensor Model::encode_ast(const AstInputs& in, const NlEncoding& nl, bool training) {
  const int P = in.length();
  if (P < 1) throw TensorError("encode_ast: empty rule sequence");
  const int d = cfg_.d;
  Tensor y_rule = rule_definition_encoding(in, training);
  Tensor depth_rows = embedding(params_.get("ast.depth_emb"), in.depth_ids);
  std::vector<std::vector<int>> ancestors;
  for (int k = 1; k < tree_conv_window(); ++k)
    ancestors.push_back(Grammar::ancestor_indices(in.parent_links, k));
  Tensor x = embedding(params_.get("ast.rule_emb"), in.rule_rows);
  for (int b = 0; b < cfg_.n_ast_blocks; ++b) {
    x = add(add(x, position_rows(P, b + 1, d, cfg_.position_paper_literal)), depth_rows);
    x = ast_block(x, y_rule, nl.features, ancestors, b, b < cfg_.tree_conv_blocks, training);
  }
  x = tree_conv_layer(x, ancestors, "ast.final_tconv1", true, training);
  x = tree_conv_layer(x, ancestors, "ast.final_tconv2", false, training);
  return x;
}

std::vector<int> Model::pad_path(const std::vector<int>& path_symbols) const {
  const int m = cfg_.max_path_len;
  std::vector<int> out(static_cast<size_t>(m), 0);
  // keep the deepest symbols when the path overflows
  const int n = static_cast<int>(path_symbols.size());
  const int start = std::max(0, n - m);
  for (int i = start; i < n; ++i) out[static_cast<size_t>(i - start)] = path_symbols[static_cast<size_t>(i)];
  return out;
}

Tensor Model::encode_queries(const std::vector<std::vector<int>>& padded_paths, bool training) {
  (void)training;
  if (padded_paths.empty()) throw TensorError("encode_queries: no paths");
  Tensor cat = gather_concat(params_.get("ast.sym_emb"), padded_paths);
  Tensor q = linear(cat, params_.get("dec.path_fc.w"), params_.get("dec.path_fc.b"));
  return layer_norm(q, params_.get("dec.path_ln.g"), params_.get("dec.path_ln.b"));
}

Tensor Model::decode(const Tensor& queries, const Tensor& ast, const NlEncoding& nl,
                     bool causal, bool training, int first_step) {
  const int T = queries.dim(0);
  const int P = ast.dim(0);
  std::optional<AttnMask> mask;
  if (causal) {
    AttnMask m(static_cast<size_t>(T) * P, 0);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j <= t && j < P; ++j) m[static_cast<size_t>(t) * P + j] = 1;
    mask = std::move(m);
  }
  Tensor x = queries;
  for (int b = 0; b < cfg_.n_dec_blocks; ++b) {
    x = add(x, position_rows(T, b + 1, cfg_.d, cfg_.position_paper_literal, first_step));
    x = residual_ln(x,
                    multi_head_attention(x, ast, attn(blk("dec", b, "astatt")), cfg_.n_heads, mask),
                    blk("dec", b, "astatt_ln"), training);
    x = residual_ln(x, multi_head_attention(x, nl.features, attn(blk("dec", b, "nlatt")), cfg_.n_heads),
                    blk("dec", b, "nlatt_ln"), training);
    Tensor h = linear(gelu(linear(x, params_.get(blk("dec", b, "fc1.w")),
                                  params_.get(blk("dec", b, "fc1.b")))),
                      params_.get(blk("dec", b, "fc2.w")), params_.get(blk("dec", b, "fc2.b")));
    x = residual_ln(x, h, blk("dec", b, "fc_ln"), training);
  }
  return x;
}

double RuleDistribution::prob(int index) const {
  const int R = num_rules();
  if (index < R) return gate.item() * predefined.value()[static_cast<size_t>(index)];
  if (!copy.defined()) return 0.0;
  return (1.0 - gate.item()) * copy.value()[static_cast<size_t>(index - R)];
}

std::vector<double> RuleDistribution::combined() const {
  std::vector<double> out;
  const int R = num_rules();
  const int L = copy.defined() ? static_cast<int>(copy.size()) : 0;
  out.reserve(static_cast<size_t>(R + L));
  for (int i = 0; i < R + L; ++i) out.push_back(prob(i));
  return out;
}

RuleDistribution Model::predict(const Tensor& h_steps, int row, const NlEncoding& nl,
                                const std::vector<bool>& mask) {
  const int R = cfg_.n_rules;
  const int L = static_cast<int>(nl.tokens.size());
  if (mask.size() != static_cast<size_t>(R + L))
    throw TensorError("predict: mask length " + std::to_string(mask.size()) +
                      " does not match rules+tokens " + std::to_string(R + L));
  RuleDistribution dist;
  dist.mask = mask;
  bool any_pred = false, any_copy = false;
  for (int i = 0; i < R; ++i) any_pred = any_pred || mask[static_cast<size_t>(i)];
  for (int i = 0; i < L; ++i) any_copy = any_copy || mask[static_cast<size_t>(R + i)];
  if (cfg_.disable_pointer) any_copy = false;
  if (!any_pred && !any_copy) throw TensorError("predict: no valid expansion");
  dist.has_predefined = any_pred;
  dist.has_copy = any_copy;

  Tensor h = slice_rows(h_steps, row, 1);  // [1, d]

  if (any_pred) {
    Tensor logits = linear(h, params_.get("out.rule.w"), params_.get("out.rule.b"));
    std::vector<double> bias(static_cast<size_t>(R), 0.0);
    for (int i = 0; i < R; ++i)
      if (!mask[static_cast<size_t>(i)]) bias[static_cast<size_t>(i)] = -1e9;
    dist.predefined = reshape(softmax_rows(add_const(logits, bias)), {R});
  } else {
    dist.predefined = Tensor::zeros({R});
  }

  if (any_copy) {
    Tensor scores = tanh_t(add_rowvec(matmul(nl.features, params_.get("out.ptr.w2")),
                                      reshape(matmul(h, params_.get("out.ptr.w1")), {cfg_.d})));
    Tensor xi = reshape(matmul(scores, params_.get("out.ptr.v")), {L});
    std::vector<double> bias(static_cast<size_t>(L), 0.0);
    for (int i = 0; i < L; ++i)
      if (!mask[static_cast<size_t>(R + i)]) bias[static_cast<size_t>(i)] = -1e9;
    dist.copy = softmax_rows(add_const(xi, bias));
  }

  if (any_pred && any_copy) {
    dist.gate = reshape(sigmoid_t(linear(h, params_.get("out.gate.w"), params_.get("out.gate.b"))), {1});
  } else {
    // one side is empty: route all mass to the live side
    dist.gate = Tensor::from({1}, {any_pred ? 1.0 : 0.0});
  }
  return dist;
}

}  // namespace treegen
