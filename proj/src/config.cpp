#include "treegen/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace treegen {

void ModelConfig::validate() const {
  if (d <= 0 || d % 2 != 0) throw ConfigError("d must be positive and even");
  if (d % n_heads != 0) throw ConfigError("d must be divisible by n_heads");
  if (n_nl_blocks < 1 || n_ast_blocks < 1 || n_dec_blocks < 1)
    throw ConfigError("block counts must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (conv_window < 1 || conv_window % 2 == 0)
    throw ConfigError("conv_window must be odd");
  if (tree_conv_window < 1) throw ConfigError("tree_conv_window must be >= 1");
  if (tree_conv_blocks < 0 || tree_conv_blocks > n_ast_blocks)
    throw ConfigError("tree_conv_blocks must be in [0, n_ast_blocks]");
  if (char_max_len < 1 || max_path_len < 1 || max_rule_arity < 1 || max_depth < 1)
    throw ConfigError("length limits must be >= 1");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const ConfigBundle&)> get;
  std::function<void(ConfigBundle&, const std::string&)> set;
};

int to_int(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + k + ": '" + v + "'");
  }
}

double to_double(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + k + ": '" + v + "'");
  }
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + k + ": '" + v + "'");
}

#define INT_FIELD(key, expr)                                              \
  {key, [](const ConfigBundle& c) { return std::to_string(c.expr); },     \
   [](ConfigBundle& c, const std::string& v) { c.expr = to_int(key, v); }}
#define DBL_FIELD(key, expr)                                               \
  {key,                                                                    \
   [](const ConfigBundle& c) {                                             \
     std::ostringstream os;                                                \
     os << c.expr;                                                         \
     return os.str();                                                      \
   },                                                                      \
   [](ConfigBundle& c, const std::string& v) { c.expr = to_double(key, v); }}
#define BOOL_FIELD(key, expr)                                                  \
  {key, [](const ConfigBundle& c) { return std::string(c.expr ? "true" : "false"); }, \
   [](ConfigBundle& c, const std::string& v) { c.expr = to_bool(key, v); }}
#define U64_FIELD(key, expr)                                              \
  {key, [](const ConfigBundle& c) { return std::to_string(c.expr); },     \
   [](ConfigBundle& c, const std::string& v) {                            \
     c.expr = static_cast<std::uint64_t>(std::stoull(v));                 \
   }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      INT_FIELD("d", model.d),
      INT_FIELD("n_heads", model.n_heads),
      INT_FIELD("n_nl_blocks", model.n_nl_blocks),
      INT_FIELD("n_ast_blocks", model.n_ast_blocks),
      INT_FIELD("n_dec_blocks", model.n_dec_blocks),
      INT_FIELD("fc_hidden", model.fc_hidden),
      DBL_FIELD("dropout", model.dropout),
      INT_FIELD("char_max_len", model.char_max_len),
      INT_FIELD("conv_window", model.conv_window),
      INT_FIELD("tree_conv_window", model.tree_conv_window),
      INT_FIELD("tree_conv_blocks", model.tree_conv_blocks),
      INT_FIELD("max_depth", model.max_depth),
      INT_FIELD("max_path_len", model.max_path_len),
      INT_FIELD("max_rule_arity", model.max_rule_arity),
      BOOL_FIELD("position_paper_literal", model.position_paper_literal),
      BOOL_FIELD("disable_tree_conv", model.disable_tree_conv),
      BOOL_FIELD("disable_rule_def", model.disable_rule_def),
      BOOL_FIELD("disable_char_embed", model.disable_char_embed),
      BOOL_FIELD("disable_self_att", model.disable_self_att),
      BOOL_FIELD("disable_pointer", model.disable_pointer),
      BOOL_FIELD("copy_preferred", model.copy_preferred),
      INT_FIELD("word_vocab", model.word_vocab),
      INT_FIELD("char_vocab", model.char_vocab),
      INT_FIELD("n_rules", model.n_rules),
      INT_FIELD("n_symbols", model.n_symbols),
      U64_FIELD("model_seed", model.seed),
      INT_FIELD("batch_size", train.batch_size),
      INT_FIELD("epochs", train.epochs),
      DBL_FIELD("grad_clip", train.grad_clip),
      INT_FIELD("eval_every", train.eval_every),
      INT_FIELD("checkpoint_every", train.checkpoint_every),
      BOOL_FIELD("strict_corpus", train.strict_corpus),
      U64_FIELD("seed", train.seed),
      INT_FIELD("beam_size", inference.beam_size),
      INT_FIELD("max_steps", inference.max_steps),
      BOOL_FIELD("length_normalize", inference.length_normalize),
  };
  return f;
}

#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD
#undef U64_FIELD

}  // namespace

void ConfigBundle::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown config key: " + key);
}

std::string ConfigBundle::to_text() const {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << "=" << f.get(*this) << "\n";
  return os.str();
}

ConfigBundle ConfigBundle::from_text(const std::string& text) {
  ConfigBundle c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string s) {
      size_t b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      size_t e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    c.set(trim(key), trim(value));
  }
  return c;
}

ConfigBundle ConfigBundle::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace treegen
