#include "treegen/grammar.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace treegen {

namespace {

constexpr const char* kStartNode = "snode";

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits one rule line into whitespace-separated tokens, keeping quoted
// literals intact (quotes stripped, marked by the bool flag).
struct RhsToken {
  std::string text;
  bool quoted = false;
};

std::vector<RhsToken> split_rhs(const std::string& s, int line_no) {
  std::vector<RhsToken> out;
  size_t i = 0;
  while (i < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    if (s[i] == '"') {
      size_t end = s.find('"', i + 1);
      if (end == std::string::npos)
        throw GrammarError("syntax error at line " + std::to_string(line_no) +
                           ": unterminated quote");
      out.push_back({s.substr(i + 1, end - i - 1), true});
      i = end + 1;
    } else {
      size_t end = i;
      while (end < s.size() && !std::isspace(static_cast<unsigned char>(s[end]))) ++end;
      out.push_back({s.substr(i, end - i), false});
      i = end;
    }
  }
  return out;
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

}  // namespace

int Grammar::intern_symbol(const std::string& name, SymbolKind kind) {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) return it->second;
  Symbol s;
  s.id = static_cast<int>(symbols_.size()) + 1;
  s.name = name;
  s.kind = kind;
  symbols_.push_back(s);
  by_name_[name] = s.id;
  return s.id;
}

int Grammar::symbol_id(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw GrammarError("unknown symbol: " + name);
  return it->second;
}

Grammar Grammar::parse(const std::string& text) {
  struct RawRule {
    std::string lhs;
    std::vector<RhsToken> rhs;
    int line = 0;
  };
  std::vector<RawRule> raw;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = strip(strip_comment(line));
    if (body.empty()) continue;
    size_t arrow = body.find("->");
    if (arrow == std::string::npos)
      throw GrammarError("syntax error at line " + std::to_string(line_no) +
                         ": missing '->'");
    std::string lhs = strip(body.substr(0, arrow));
    if (lhs.empty() || lhs.find(' ') != std::string::npos || lhs.front() == '"')
      throw GrammarError("syntax error at line " + std::to_string(line_no) +
                         ": bad left-hand side");
    auto rhs = split_rhs(body.substr(arrow + 2), line_no);
    if (rhs.empty())
      throw GrammarError("syntax error at line " + std::to_string(line_no) +
                         ": empty right-hand side");
    raw.push_back({lhs, rhs, line_no});
  }
  if (raw.empty()) throw GrammarError("grammar has no rules");

  Grammar g;
  // Intern the synthesized start symbol first so every other symbol id is
  // determined by rule order alone; promoted rules appended later then get the
  // same ids when the serialized grammar is reparsed.
  int snode = g.intern_symbol(kStartNode, SymbolKind::Nonterminal);
  // Left-hand sides are the nonterminals.
  for (const auto& r : raw) g.intern_symbol(r.lhs, SymbolKind::Nonterminal);
  const std::string start_name = raw.front().lhs;

  for (const auto& r : raw) {
    GrammarRule rule;
    rule.id = static_cast<int>(g.rules_.size());
    rule.parent = g.symbol_id(r.lhs);
    for (const auto& t : r.rhs) {
      if (!t.quoted && g.by_name_.count(t.text) &&
          g.symbol(g.by_name_[t.text]).kind == SymbolKind::Nonterminal) {
        rule.children.push_back(g.by_name_[t.text]);
      } else {
        rule.children.push_back(g.intern_symbol(t.text, SymbolKind::Terminal));
      }
    }
    for (const auto& prev : g.rules_)
      if (prev.parent == rule.parent && prev.children == rule.children)
        throw GrammarError("duplicate rule at line " + std::to_string(r.line));
    g.rules_.push_back(rule);
  }

  // Synthesized start rule snode -> <first LHS>.
  GrammarRule start;
  start.id = static_cast<int>(g.rules_.size());
  start.parent = snode;
  start.children = {g.symbol_id(start_name)};
  g.start_rule_ = start.id;
  g.rules_.push_back(start);

  // Every nonterminal must be reachable from the start symbol.
  std::vector<bool> reach(static_cast<size_t>(g.num_symbols()) + 1, false);
  std::vector<int> stack = {g.symbol_id(start_name)};
  reach[static_cast<size_t>(stack[0])] = true;
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (const auto& r : g.rules_)
      if (r.parent == s)
        for (int c : r.children)
          if (!reach[static_cast<size_t>(c)]) {
            reach[static_cast<size_t>(c)] = true;
            if (!g.is_terminal(c)) stack.push_back(c);
          }
  }
  for (const auto& r : g.rules_)
    if (r.id != g.start_rule_ && !reach[static_cast<size_t>(r.parent)])
      throw GrammarError("symbol unreachable from start symbol: " +
                         g.symbol_name(r.parent));
  return g;
}

std::optional<int> Grammar::find_terminal_rule(int parent_symbol,
                                               const std::string& token) const {
  for (const auto& r : rules_)
    if (r.parent == parent_symbol && r.children.size() == 1 &&
        is_terminal(r.children[0]) && symbol_name(r.children[0]) == token)
      return r.id;
  return std::nullopt;
}

int Grammar::promote_terminal_rule(int parent_symbol, const std::string& token) {
  if (auto id = find_terminal_rule(parent_symbol, token)) return *id;
  // insert before the start rule so predefined ids stay dense and the start
  // rule stays last, matching what Grammar::parse produces for the
  // serialized grammar
  GrammarRule r;
  r.parent = parent_symbol;
  r.children = {intern_symbol(token, SymbolKind::Terminal)};
  r.id = start_rule_;
  rules_.insert(rules_.begin() + start_rule_, r);
  ++start_rule_;
  rules_[static_cast<size_t>(start_rule_)].id = start_rule_;
  return r.id;
}

bool Grammar::admits_terminal(int nonterminal) const {
  for (const auto& r : rules_)
    if (r.parent == nonterminal && r.children.size() == 1 && is_terminal(r.children[0]))
      return true;
  return false;
}

const AstNodePtr& DerivationState::frontier() const {
  if (frontier_.empty()) throw GrammarError("derivation complete: no frontier node");
  return frontier_.back().node;
}

std::vector<int> DerivationState::rule_ids() const {
  std::vector<int> out;
  out.reserve(applied.size());
  for (const auto& a : applied) out.push_back(a.rule_id);
  return out;
}

namespace {

AstNodePtr clone_tree(const AstNodePtr& n,
                      std::unordered_map<const AstNode*, AstNodePtr>& map) {
  auto c = std::make_shared<AstNode>(*n);
  c->children.clear();
  for (const auto& ch : n->children) c->children.push_back(clone_tree(ch, map));
  map[n.get()] = c;
  return c;
}

void renumber_preorder(const AstNodePtr& root) {
  int next = 0;
  std::function<void(const AstNodePtr&)> walk = [&](const AstNodePtr& n) {
    n->node_id = next++;
    for (const auto& c : n->children) walk(c);
  };
  walk(root);
}

}  // namespace

DerivationState DerivationState::clone() const {
  DerivationState out;
  out.applied = applied;
  out.depths = depths;
  out.rule_parent_index = rule_parent_index;
  out.next_node_id_ = next_node_id_;
  std::unordered_map<const AstNode*, AstNodePtr> map;
  out.tree = clone_tree(tree, map);
  for (const auto& p : frontier_)
    out.frontier_.push_back({map.at(p.node.get()), p.depth, p.creator});
  return out;
}

DerivationState Grammar::initial_state() const {
  DerivationState s;
  s.tree = std::make_shared<AstNode>();
  s.tree->symbol = rules_[static_cast<size_t>(start_rule_)].parent;
  s.tree->node_id = 0;
  s.next_node_id_ = 1;
  s.frontier_.push_back({s.tree, 0, 0});
  return s;
}

void Grammar::apply_rule(DerivationState& state, int rule_id) const {
  if (rule_id < 0 || rule_id >= num_rules())
    throw GrammarError("rule id out of range: " + std::to_string(rule_id));
  if (state.frontier_.empty())
    throw GrammarError("extra rules after completion");
  const GrammarRule& r = rules_[static_cast<size_t>(rule_id)];
  auto pending = state.frontier_.back();
  if (pending.node->symbol != r.parent)
    throw GrammarError("rule/frontier symbol mismatch at position " +
                       std::to_string(state.applied.size()) + ": rule expands " +
                       symbol_name(r.parent) + ", frontier is " +
                       symbol_name(pending.node->symbol));
  state.frontier_.pop_back();
  const int pos = static_cast<int>(state.applied.size());
  state.applied.push_back({rule_id, {}, r.parent});
  state.depths.push_back(pending.depth);
  state.rule_parent_index.push_back(pos == 0 ? 0 : pending.creator);
  pending.node->expanded = true;
  std::vector<DerivationState::Pending> new_pending;
  for (int c : r.children) {
    auto child = std::make_shared<AstNode>();
    child->symbol = c;
    child->node_id = state.next_node_id_++;
    if (is_terminal(c)) child->token = symbol_name(c);
    pending.node->children.push_back(child);
    if (!is_terminal(c)) new_pending.push_back({child, pending.depth + 1, pos});
  }
  // push right-to-left so the leftmost child is expanded next
  for (auto it = new_pending.rbegin(); it != new_pending.rend(); ++it)
    state.frontier_.push_back(*it);
}

void Grammar::apply_copy(DerivationState& state, const std::string& token) const {
  if (state.frontier_.empty()) throw GrammarError("extra rules after completion");
  auto pending = state.frontier_.back();
  if (!admits_terminal(pending.node->symbol))
    throw GrammarError("copy expansion on symbol that admits no terminal: " +
                       symbol_name(pending.node->symbol));
  state.frontier_.pop_back();
  const int pos = static_cast<int>(state.applied.size());
  state.applied.push_back({-1, token, pending.node->symbol});
  state.depths.push_back(pending.depth);
  state.rule_parent_index.push_back(pos == 0 ? 0 : pending.creator);
  pending.node->expanded = true;
  auto child = std::make_shared<AstNode>();
  child->symbol = 0;
  child->token = token;
  child->node_id = state.next_node_id_++;
  pending.node->children.push_back(child);
}

void Grammar::apply(DerivationState& state, const AppliedRule& r) const {
  if (r.is_copy())
    apply_copy(state, r.copy_token);
  else
    apply_rule(state, r.rule_id);
}

DerivationState Grammar::derive(const std::vector<int>& rule_ids) const {
  if (rule_ids.empty()) throw GrammarError("derive: empty rule sequence");
  if (rule_ids.front() != start_rule_)
    throw GrammarError("derive: sequence must begin with the start rule");
  DerivationState s = initial_state();
  for (int id : rule_ids) apply_rule(s, id);
  renumber_preorder(s.tree);
  return s;
}

DerivationState Grammar::derive_applied(const std::vector<AppliedRule>& seq) const {
  if (seq.empty()) throw GrammarError("derive: empty rule sequence");
  DerivationState s = initial_state();
  for (const auto& r : seq) apply(s, r);
  renumber_preorder(s.tree);
  return s;
}

void Grammar::decompose_walk(const AstNodePtr& node, std::vector<AppliedRule>& out) const {
  if (node->children.empty()) {
    if (node->token.has_value() || (node->symbol != 0 && is_terminal(node->symbol)))
      return;  // terminal leaf
    throw GrammarError("decompose: incomplete tree, unexpanded nonterminal " +
                       symbol_name(node->symbol));
  }
  // match a predefined rule by parent + child symbols/tokens
  int matched = -1;
  for (const auto& r : rules_) {
    if (r.parent != node->symbol || r.children.size() != node->children.size()) continue;
    bool ok = true;
    for (size_t i = 0; i < r.children.size(); ++i) {
      const auto& c = node->children[i];
      if (is_terminal(r.children[i])) {
        if (!c->token.has_value() || *c->token != symbol_name(r.children[i])) ok = false;
      } else {
        if (c->token.has_value() && c->children.empty()) {
          ok = false;  // terminal leaf where rule expects a nonterminal
        } else if (c->symbol != r.children[i]) {
          ok = false;
        }
      }
      if (!ok) break;
    }
    if (ok) {
      matched = r.id;
      break;
    }
  }
  if (matched >= 0) {
    out.push_back({matched, {}, node->symbol});
    for (const auto& c : node->children) decompose_walk(c, out);
    return;
  }
  // copy rule: single terminal child
  if (node->children.size() == 1 && node->children[0]->children.empty() &&
      node->children[0]->token.has_value()) {
    out.push_back({-1, *node->children[0]->token, node->symbol});
    return;
  }
  throw GrammarError("decompose: no rule matches production at node " +
                     symbol_name(node->symbol));
}

std::vector<AppliedRule> Grammar::decompose(const AstNodePtr& tree) const {
  std::vector<AppliedRule> out;
  if (!tree) throw GrammarError("decompose: null tree");
  if (tree->symbol == rules_[static_cast<size_t>(start_rule_)].parent) {
    decompose_walk(tree, out);
  } else {
    // wrap in the start rule: snode -> root
    if (tree->symbol != rules_[static_cast<size_t>(start_rule_)].children[0])
      throw GrammarError("decompose: tree root is not the start symbol");
    out.push_back({start_rule_, {}, rules_[static_cast<size_t>(start_rule_)].parent});
    decompose_walk(tree, out);
  }
  return out;
}

std::vector<int> Grammar::ancestor_indices(const std::vector<int>& parent_links, int order) {
  if (order < 1) throw GrammarError("ancestor_indices: order must be >= 1");
  std::vector<int> idx(parent_links.size());
  for (size_t j = 0; j < parent_links.size(); ++j) {
    int cur = static_cast<int>(j);
    for (int k = 0; k < order; ++k) cur = parent_links[static_cast<size_t>(cur)];
    idx[j] = cur;
  }
  return idx;
}

std::vector<std::vector<double>> Grammar::adjacency_matrix(const DerivationState& state,
                                                           int order) {
  const auto idx = ancestor_indices(state.rule_parent_index, order);
  const size_t P = idx.size();
  std::vector<std::vector<double>> m(P, std::vector<double>(P, 0.0));
  for (size_t j = 0; j < P; ++j) m[static_cast<size_t>(idx[j])][j] = 1.0;
  return m;
}

std::vector<int> Grammar::query_path(const DerivationState& state) const {
  const AstNodePtr target = state.frontier();
  std::vector<int> path;
  std::function<bool(const AstNodePtr&)> dfs = [&](const AstNodePtr& n) -> bool {
    path.push_back(n->symbol);
    if (n == target) return true;
    for (const auto& c : n->children)
      if (dfs(c)) return true;
    path.pop_back();
    return false;
  };
  if (!dfs(state.tree)) throw GrammarError("query_path: frontier not found in tree");
  return path;
}

std::vector<bool> Grammar::valid_rule_mask(const DerivationState& state,
                                           const std::vector<std::string>& nl_tokens) const {
  const int frontier = state.frontier()->symbol;
  std::vector<bool> mask(static_cast<size_t>(num_rules()) + nl_tokens.size(), false);
  for (const auto& r : rules_)
    if (r.parent == frontier) mask[static_cast<size_t>(r.id)] = true;
  if (admits_terminal(frontier))
    for (size_t t = 0; t < nl_tokens.size(); ++t)
      mask[static_cast<size_t>(num_rules()) + t] = true;
  return mask;
}

std::vector<std::string> Grammar::linearize(const AstNodePtr& tree) {
  std::vector<std::string> out;
  std::function<void(const AstNodePtr&)> walk = [&](const AstNodePtr& n) {
    if (n->children.empty()) {
      if (!n->token.has_value())
        throw GrammarError("linearize: incomplete tree at unexpanded nonterminal");
      out.push_back(*n->token);
      return;
    }
    for (const auto& c : n->children) walk(c);
  };
  walk(tree);
  return out;
}

namespace {

bool needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == '"')
      return true;
  return false;
}

}  // namespace

std::string Grammar::tree_to_sexp(const AstNodePtr& tree) const {
  std::ostringstream os;
  std::function<void(const AstNodePtr&)> walk = [&](const AstNodePtr& n) {
    if (n->children.empty()) {
      // copy leaves carry symbol 0, so only fall back to the symbol name
      // when there is no token (value_or would evaluate it eagerly)
      const std::string tok = n->token ? *n->token : symbol_name(n->symbol);
      if (needs_quotes(tok))
        os << '"' << tok << '"';
      else
        os << tok;
      return;
    }
    os << '(' << symbol_name(n->symbol);
    for (const auto& c : n->children) {
      os << ' ';
      walk(c);
    }
    os << ')';
  };
  walk(tree);
  return os.str();
}

AstNodePtr Grammar::tree_from_sexp(const std::string& text) const {
  size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  std::function<AstNodePtr()> parse_node = [&]() -> AstNodePtr {
    skip_ws();
    if (i >= text.size()) throw GrammarError("sexp: unexpected end of input");
    auto node = std::make_shared<AstNode>();
    if (text[i] == '(') {
      ++i;
      skip_ws();
      size_t e = i;
      while (e < text.size() && !std::isspace(static_cast<unsigned char>(text[e])) &&
             text[e] != ')' && text[e] != '(')
        ++e;
      std::string name = text.substr(i, e - i);
      if (name.empty()) throw GrammarError("sexp: missing node symbol");
      i = e;
      node->symbol = symbol_id(name);
      node->expanded = true;
      skip_ws();
      while (i < text.size() && text[i] != ')') {
        node->children.push_back(parse_node());
        skip_ws();
      }
      if (i >= text.size()) throw GrammarError("sexp: missing ')'");
      ++i;
      if (node->children.empty()) throw GrammarError("sexp: node without children");
    } else {
      std::string tok;
      if (text[i] == '"') {
        size_t e = text.find('"', i + 1);
        if (e == std::string::npos) throw GrammarError("sexp: unterminated quote");
        tok = text.substr(i + 1, e - i - 1);
        i = e + 1;
      } else {
        size_t e = i;
        while (e < text.size() && !std::isspace(static_cast<unsigned char>(text[e])) &&
               text[e] != ')' && text[e] != '(')
          ++e;
        tok = text.substr(i, e - i);
        i = e;
      }
      node->token = tok;
      auto it = by_name_.find(tok);
      node->symbol = (it != by_name_.end() && is_terminal(it->second)) ? it->second : 0;
    }
    return node;
  };
  auto root = parse_node();
  skip_ws();
  if (i != text.size()) throw GrammarError("sexp: trailing input");
  renumber_preorder(root);
  return root;
}

bool tree_equal(const AstNodePtr& a, const AstNodePtr& b) {
  if (!a || !b) return a == b;
  if (a->children.empty() != b->children.empty()) return false;
  if (a->children.empty()) {
    return a->token.value_or("") == b->token.value_or("");
  }
  if (a->symbol != b->symbol || a->children.size() != b->children.size()) return false;
  for (size_t i = 0; i < a->children.size(); ++i)
    if (!tree_equal(a->children[i], b->children[i])) return false;
  return true;
}

}  // namespace treegen
