#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace treegen {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Architecture hyperparameters. Defaults follow the reference configuration:
// 6 NL reader blocks, 5 AST reader and decoder blocks, 256-wide embeddings,
// 1024-wide first FC layer, dropout 0.15, tree convolution window 3.
struct ModelConfig {
  int d = 256;           // embedding / hidden size
  int n_heads = 8;       // head count (not pinned by the reference setup)
  int n_nl_blocks = 6;   // N_d
  int n_ast_blocks = 5;  // N_1
  int n_dec_blocks = 5;  // N_2
  int fc_hidden = 1024;  // first FC layer width in the decoder head
  double dropout = 0.15;
  int char_max_len = 16;   // M, right-truncated
  int conv_window = 3;     // word convolution window k
  int tree_conv_window = 3;  // kt
  int tree_conv_blocks = 5;  // tree convolution active in the first blocks only
  int max_depth = 32;      // depth embedding buckets, clamped
  int max_path_len = 16;   // query path, keeps the deepest symbols
  int max_rule_arity = 8;  // rule definition child padding
  bool position_paper_literal = false;  // sin on odd dims instead of cos

  // ablation / variant toggles
  bool disable_tree_conv = false;   // window collapses to 1 (plain FC layers)
  bool disable_rule_def = false;    // skip the AST reader gating sub-layer
  bool disable_char_embed = false;  // skip the NL reader gating sub-layer
  bool disable_self_att = false;    // skip the AST reader self-attention
  bool disable_pointer = false;     // predefined-rule path only
  bool copy_preferred = false;      // copy route wins over a duplicate predefined rule

  // vocabulary / grammar geometry, filled in when a model is built
  int word_vocab = 0;
  int char_vocab = 0;
  int n_rules = 0;    // predefined rules incl. the start rule
  int n_symbols = 0;  // grammar symbols (ids 1..n); 0 is padding

  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainConfig {
  int batch_size = 32;
  int epochs = 100;
  double grad_clip = 5.0;        // global-norm safety net
  int eval_every = 10;           // dev StrAcc cadence, in epochs
  int checkpoint_every = 25;     // epochs between checkpoints
  bool strict_corpus = true;     // fatal vs skip on undecomposable examples
  std::uint64_t seed = 1;

  void validate() const;
};

struct InferenceConfig {
  int beam_size = 5;
  int max_steps = 300;
  bool length_normalize = false;
};

// Flat key=value config file support; unknown keys are rejected so typos
// surface early. CLI flags override file values.
struct ConfigBundle {
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;

  static ConfigBundle from_file(const std::string& path);
  static ConfigBundle from_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

}  // namespace treegen
