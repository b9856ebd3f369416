#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace treegen {

class GrammarError : public std::runtime_error {
 public:
  explicit GrammarError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class SymbolKind { Terminal, Nonterminal };

struct Symbol {
  int id = 0;  // 0 is reserved for padding; real symbols start at 1
  std::string name;
  SymbolKind kind = SymbolKind::Terminal;
};

enum class RuleOrigin { Predefined, Copy };

struct GrammarRule {
  int id = 0;            // dense 0..R-1 for predefined rules
  int parent = 0;        // symbol id, nonterminal
  std::vector<int> children;  // symbol ids, ordered
  RuleOrigin origin = RuleOrigin::Predefined;
};

struct AstNode {
  int symbol = 0;
  std::vector<std::shared_ptr<AstNode>> children;
  std::optional<std::string> token;  // terminal leaves only
  int node_id = 0;                   // pre-order index
  bool expanded = false;             // nonterminal that has been given children
};
using AstNodePtr = std::shared_ptr<AstNode>;

// A rule as applied during derivation: either a predefined rule id or a
// copy expansion carrying the copied token.
struct AppliedRule {
  int rule_id = -1;  // >= 0 for predefined rules, -1 for copy
  std::string copy_token;
  int parent_symbol = 0;  // the nonterminal this application expanded
  bool is_copy() const { return rule_id < 0; }
};

class Grammar;

// Partial AST under pre-order (leftmost-outermost) expansion, together with
// the rule sequence and the structural indices the readers consume.
class DerivationState {
 public:
  std::vector<AppliedRule> applied;
  std::vector<int> depths;             // depth of each rule's parent node
  std::vector<int> rule_parent_index;  // index of the rule that created the expanded node
  AstNodePtr tree;

  bool complete() const { return frontier_.empty(); }
  // Next nonterminal to expand; throws if the derivation is complete.
  const AstNodePtr& frontier() const;
  int frontier_symbol() const { return frontier().get()->symbol; }

  std::vector<int> rule_ids() const;
  DerivationState clone() const;

  friend class Grammar;

 private:
  // pending nonterminals, last = leftmost; parallel metadata per entry
  struct Pending {
    AstNodePtr node;
    int depth = 0;
    int creator = 0;  // rule index that created this node
  };
  std::vector<Pending> frontier_;
  int next_node_id_ = 0;
};

class Grammar {
 public:
  // Parses the grammar text format: one rule per line, "Parent -> C1 C2 ...",
  // '#' starts a comment, terminals are quoted literals or symbols that never
  // appear on a left-hand side. A start rule snode -> <first LHS> is synthesized.
  static Grammar parse(const std::string& text);

  int symbol_id(const std::string& name) const;
  const Symbol& symbol(int id) const { return symbols_.at(static_cast<size_t>(id - 1)); }
  const std::string& symbol_name(int id) const { return symbol(id).name; }
  bool is_terminal(int id) const { return symbol(id).kind == SymbolKind::Terminal; }
  int num_symbols() const { return static_cast<int>(symbols_.size()); }

  const std::vector<GrammarRule>& rules() const { return rules_; }
  const GrammarRule& rule(int id) const { return rules_.at(static_cast<size_t>(id)); }
  int num_rules() const { return static_cast<int>(rules_.size()); }
  int start_rule_id() const { return start_rule_; }
  int start_symbol() const { return rules_[static_cast<size_t>(start_rule_)].parent; }

  // Registers a predefined unary-terminal rule parent -> token if not present;
  // returns its id. Used for corpus-load auto-promotion.
  int promote_terminal_rule(int parent_symbol, const std::string& token);
  // Predefined rule parent -> token, if any.
  std::optional<int> find_terminal_rule(int parent_symbol, const std::string& token) const;
  // True when the nonterminal can be filled by an arbitrary terminal token,
  // i.e. it owns at least one unary-terminal predefined rule.
  bool admits_terminal(int nonterminal) const;

  DerivationState initial_state() const;
  // Expands the current frontier; throws on parent-symbol mismatch or when
  // the derivation is already complete.
  void apply_rule(DerivationState& state, int rule_id) const;
  void apply_copy(DerivationState& state, const std::string& token) const;
  void apply(DerivationState& state, const AppliedRule& r) const;

  DerivationState derive(const std::vector<int>& rule_ids) const;
  DerivationState derive_applied(const std::vector<AppliedRule>& seq) const;

  // Pre-order rule sequence of a complete tree; unary-terminal expansions with
  // no matching predefined rule become copy rules.
  std::vector<AppliedRule> decompose(const AstNodePtr& tree) const;

  // M^order over rule positions: column j holds a single 1 at the row of j's
  // order-th ancestor rule, saturating at position 0.
  static std::vector<std::vector<double>> adjacency_matrix(const DerivationState& state,
                                                           int order);
  static std::vector<int> ancestor_indices(const std::vector<int>& parent_links, int order);

  // Symbols on the path root -> frontier, inclusive.
  std::vector<int> query_path(const DerivationState& state) const;

  // Mask over D ∪ C: first num_rules() entries gate predefined rules by the
  // frontier symbol; the next nl_tokens.size() entries gate copy positions.
  std::vector<bool> valid_rule_mask(const DerivationState& state,
                                    const std::vector<std::string>& nl_tokens) const;

  // Left-to-right terminal tokens of a complete tree.
  static std::vector<std::string> linearize(const AstNodePtr& tree);

  // S-expression (de)serialization of complete trees, e.g. (S (Stmt set (Name x))).
  std::string tree_to_sexp(const AstNodePtr& tree) const;
  AstNodePtr tree_from_sexp(const std::string& text) const;

  int intern_symbol(const std::string& name, SymbolKind kind);

 private:
  std::vector<Symbol> symbols_;  // id = index + 1
  std::unordered_map<std::string, int> by_name_;
  std::vector<GrammarRule> rules_;
  int start_rule_ = 0;

  void decompose_walk(const AstNodePtr& node, std::vector<AppliedRule>& out) const;
};

bool tree_equal(const AstNodePtr& a, const AstNodePtr& b);

}  // namespace treegen
