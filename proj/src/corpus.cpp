#include "treegen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace treegen {

std::vector<CorpusRecord> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  std::vector<CorpusRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    CorpusRecord r;
    r.id = j.value("id", "line" + std::to_string(line_no));
    if (!j.contains("description") || !j.contains("program"))
      throw CorpusError("corpus line " + std::to_string(line_no) +
                        ": missing description or program");
    r.description = j["description"].get<std::string>();
    r.program = j["program"].get<std::string>();
    if (r.description.empty() || r.program.empty())
      throw CorpusError("corpus record " + r.id + ": empty description or program");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw CorpusError("corpus file has no records: " + path);
  return out;
}

void write_corpus_file(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"description", r.description}, {"program", r.program}};
    out << j.dump() << "\n";
  }
}

namespace {

struct ParseResult {
  size_t end;
  AstNodePtr node;
};

// Backtracking top-down parse of `tokens` starting at `pos` for `symbol`.
// Returns every parse (bounded) so callers can demand consumption of the
// whole input. Predefined rules are tried in id order; a copy expansion is
// tried last at copy-admitting nonterminals.
void parse_symbol(const Grammar& g, const std::vector<std::string>& tokens, int symbol,
                  size_t pos, std::vector<ParseResult>& out, int depth) {
  if (depth > 256) return;  // guard against runaway recursion
  if (g.is_terminal(symbol)) {
    if (pos < tokens.size() && tokens[pos] == g.symbol_name(symbol)) {
      auto n = std::make_shared<AstNode>();
      n->symbol = symbol;
      n->token = tokens[pos];
      out.push_back({pos + 1, n});
    }
    return;
  }
  for (const auto& r : g.rules()) {
    if (r.parent != symbol || r.id == g.start_rule_id()) continue;
    // sequentially parse children with backtracking over alternatives
    std::vector<std::pair<size_t, std::vector<AstNodePtr>>> partial = {{pos, {}}};
    for (int c : r.children) {
      std::vector<std::pair<size_t, std::vector<AstNodePtr>>> next;
      for (auto& [p, kids] : partial) {
        std::vector<ParseResult> sub;
        parse_symbol(g, tokens, c, p, sub, depth + 1);
        for (auto& s : sub) {
          auto k2 = kids;
          k2.push_back(s.node);
          next.emplace_back(s.end, std::move(k2));
        }
      }
      partial = std::move(next);
      if (partial.empty()) break;
    }
    for (auto& [p, kids] : partial) {
      auto n = std::make_shared<AstNode>();
      n->symbol = symbol;
      n->expanded = true;
      n->children = kids;
      out.push_back({p, n});
      if (out.size() > 64) return;  // ambiguity cap
    }
  }
  if (g.admits_terminal(symbol) && pos < tokens.size()) {
    // copy: consume one arbitrary token, unless a predefined unary rule
    // already produced the same parse
    bool dup = false;
    for (const auto& r : out)
      if (r.end == pos + 1 && r.node->children.size() == 1 &&
          r.node->children[0]->token == tokens[pos])
        dup = true;
    if (!dup) {
      auto leaf = std::make_shared<AstNode>();
      leaf->symbol = 0;
      leaf->token = tokens[pos];
      auto n = std::make_shared<AstNode>();
      n->symbol = symbol;
      n->expanded = true;
      n->children = {leaf};
      out.push_back({pos + 1, n});
    }
  }
}

}  // namespace

AstNodePtr parse_tokens(const Grammar& grammar, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw CorpusError("parse_tokens: empty program");
  const int start_sym = grammar.rule(grammar.start_rule_id()).children[0];
  std::vector<ParseResult> results;
  parse_symbol(grammar, tokens, start_sym, 0, results, 0);
  for (const auto& r : results)
    if (r.end == tokens.size()) return r.node;
  throw CorpusError("program tokens do not parse under the grammar");
}

namespace {

std::vector<std::string> program_tokens(const std::string& program) {
  std::istringstream in(program);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

void build_vocabs(const std::vector<CorpusRecord>& records, TokenizeMode mode,
                  Vocab& words, Vocab& chars) {
  for (const auto& r : records)
    for (const auto& t : tokenize(r.description, mode)) {
      words.add(t);
      for (char c : t) chars.add(std::string(1, c));
    }
}

LoadedCorpus load_corpus(const std::vector<CorpusRecord>& records, Grammar& grammar,
                         const Vocab& words, const Vocab& chars, int char_max_len,
                         const LoadOptions& opts) {
  // phase 1: decompose everything, collecting terminal expansions that the
  // pointer cannot reach (token absent from the description, or frontier
  // admits no terminal) for promotion to predefined rules
  struct Prepared {
    const CorpusRecord* rec;
    std::vector<std::string> desc_tokens;
    AstNodePtr tree;
  };
  std::vector<Prepared> prepared;
  LoadedCorpus out;
  std::vector<std::pair<int, std::string>> promotions;
  std::unordered_set<std::string> promo_seen;
  for (const auto& rec : records) {
    Prepared p{&rec, tokenize(rec.description, opts.mode), nullptr};
    try {
      if (!rec.program.empty() && rec.program[0] == '(')
        p.tree = grammar.tree_from_sexp(rec.program);
      else
        p.tree = parse_tokens(grammar, program_tokens(rec.program));
      auto applied = grammar.decompose(p.tree);
      for (const auto& a : applied) {
        if (!a.is_copy()) continue;
        bool in_desc = std::find(p.desc_tokens.begin(), p.desc_tokens.end(), a.copy_token) !=
                       p.desc_tokens.end();
        if (!in_desc || !grammar.admits_terminal(a.parent_symbol)) {
          std::string key = std::to_string(a.parent_symbol) + "\x1f" + a.copy_token;
          if (promo_seen.insert(key).second)
            promotions.emplace_back(a.parent_symbol, a.copy_token);
        }
      }
    } catch (const std::exception& e) {
      if (opts.strict)
        throw CorpusError("record " + rec.id + ": " + e.what());
      out.skipped.push_back(rec.id);
      continue;
    }
    prepared.push_back(std::move(p));
  }
  for (const auto& [sym, tok] : promotions) grammar.promote_terminal_rule(sym, tok);
  out.promoted_rules = static_cast<int>(promotions.size());

  // phase 2: final decomposition against the promoted grammar
  for (const auto& p : prepared) {
    TrainExample ex;
    ex.id = p.rec->id;
    ex.nl = make_nl_input(p.desc_tokens, words, chars, char_max_len);
    auto applied = grammar.decompose(p.tree);
    auto state = grammar.derive_applied(applied);
    ex.applied = std::move(state.applied);
    ex.depths = std::move(state.depths);
    ex.parent_links = std::move(state.rule_parent_index);
    out.examples.push_back(std::move(ex));
  }
  if (out.examples.empty()) throw CorpusError("no usable corpus examples");
  return out;
}

std::string grammar_to_text(const Grammar& grammar) {
  std::ostringstream os;
  for (const auto& r : grammar.rules()) {
    if (r.id == grammar.start_rule_id()) continue;
    os << grammar.symbol_name(r.parent) << " ->";
    for (int c : r.children) {
      if (grammar.is_terminal(c))
        os << " \"" << grammar.symbol_name(c) << "\"";
      else
        os << " " << grammar.symbol_name(c);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace treegen
