#pragma once

#include <optional>
#include <string>
#include <vector>

#include "treegen/config.hpp"
#include "treegen/grammar.hpp"
#include "treegen/nn.hpp"
#include "treegen/params.hpp"
#include "treegen/tensor.hpp"
#include "treegen/vocab.hpp"

namespace treegen {

struct NlEncoding {
  Tensor features;       // [L, d]
  Tensor char_features;  // [L, d]
  std::vector<std::string> tokens;
};

// Per-rule inputs to the AST reader, derived from a derivation prefix.
struct AstInputs {
  std::vector<int> rule_rows;               // rule embedding row per position
  std::vector<std::vector<int>> def_ids;    // [alpha, beta_1..beta_Kmax] symbol rows
  std::vector<int> depth_ids;               // clamped to the max bucket
  std::vector<int> parent_links;
  int length() const { return static_cast<int>(rule_rows.size()); }
};

// Next-rule distribution over D (predefined rules) and C (copyable NL
// positions). Probabilities live in graph tensors so the loss can backprop.
struct RuleDistribution {
  Tensor gate;        // scalar p_g
  Tensor predefined;  // [R]; masked entries carry zero probability
  Tensor copy;        // [L]; empty tensor when the pointer path is off
  std::vector<bool> mask;  // R + L entries
  bool has_predefined = false;
  bool has_copy = false;

  int num_rules() const { return predefined.defined() ? static_cast<int>(predefined.size()) : 0; }
  // Combined probability of choice `index` over D ∪ C (plain value).
  double prob(int index) const;
  std::vector<double> combined() const;  // R + L combined probabilities
};

class Model {
 public:
  Model(ModelConfig cfg, const Grammar& grammar);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::mt19937_64& forward_rng() { return forward_rng_; }
  void reseed(std::uint64_t seed) { forward_rng_.seed(seed); }

  NlEncoding encode_nl(const NlInput& in, bool training);

  AstInputs make_ast_inputs(const std::vector<AppliedRule>& applied,
                            const std::vector<int>& depths,
                            const std::vector<int>& parent_links) const;
  AstInputs make_ast_inputs(const DerivationState& state) const;

  Tensor encode_ast(const AstInputs& in, const NlEncoding& nl, bool training);

  std::vector<int> pad_path(const std::vector<int>& path_symbols) const;

  // Query-path encoding for each decoding step: [T, d].
  Tensor encode_queries(const std::vector<std::vector<int>>& padded_paths, bool training);

  // Decoder stack. When `causal` the step-t query attends AST rows 0..t only;
  // otherwise every query sees all rows (single-step inference). `first_step`
  // is the absolute step index of the first query so position embeddings
  // agree between teacher forcing and incremental decoding.
  Tensor decode(const Tensor& queries, const Tensor& ast, const NlEncoding& nl,
                bool causal, bool training, int first_step = 0);

  RuleDistribution predict(const Tensor& h_steps, int row, const NlEncoding& nl,
                           const std::vector<bool>& mask);

 private:
  Tensor nl_block(const Tensor& x, const Tensor& char_feats, int block, bool training);
  Tensor ast_block(const Tensor& x, const Tensor& y_rule, const Tensor& nl_feats,
                   const std::vector<std::vector<int>>& ancestors, int block,
                   bool use_tree_conv, bool training);
  Tensor rule_definition_encoding(const AstInputs& in, bool training);
  Tensor tree_conv_layer(const Tensor& y, const std::vector<std::vector<int>>& ancestors,
                         const std::string& prefix, bool gelu_act, bool training);
  Tensor residual_ln(const Tensor& x, const Tensor& sub, const std::string& ln_prefix,
                     bool training);
  Tensor drop(const Tensor& x, bool training);
  AttentionParams attn(const std::string& prefix) const;
  GateParams gatep(const std::string& prefix) const;
  SeparableConvParams convp(const std::string& prefix) const;

  ModelConfig cfg_;
  ParamStore params_;
  std::mt19937_64 forward_rng_;
  std::vector<std::vector<int>> rule_defs_;  // per predefined rule
  int copy_rule_row_ = 0;  // rule embedding row shared by all copy expansions
  int copy_token_sym_ = 0;  // placeholder symbol row for a copied terminal
  int tree_conv_window() const {
    return cfg_.disable_tree_conv ? 1 : cfg_.tree_conv_window;
  }
};

}  // namespace treegen
