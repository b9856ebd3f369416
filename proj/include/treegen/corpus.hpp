#pragma once

#include <string>
#include <vector>

#include "treegen/grammar.hpp"
#include "treegen/vocab.hpp"

namespace treegen {

class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CorpusRecord {
  std::string id;
  std::string description;
  std::string program;  // token sequence, or an s-expression AST when it starts with '('
};

std::vector<CorpusRecord> read_corpus_file(const std::string& path);
void write_corpus_file(const std::string& path, const std::vector<CorpusRecord>& records);

struct TrainExample {
  std::string id;
  NlInput nl;
  std::vector<AppliedRule> applied;  // full derivation, start rule first
  std::vector<int> depths;
  std::vector<int> parent_links;
};

// Parses a terminal token sequence into an AST by backtracking top-down
// search; unknown tokens are admitted at copy-admitting nonterminals.
AstNodePtr parse_tokens(const Grammar& grammar, const std::vector<std::string>& tokens);

struct LoadOptions {
  TokenizeMode mode = TokenizeMode::Plain;
  bool strict = true;  // fatal on undecomposable records instead of skipping
};

struct LoadedCorpus {
  std::vector<TrainExample> examples;
  std::vector<std::string> skipped;  // record ids (non-strict mode)
  int promoted_rules = 0;
};

// Tokenizes descriptions, decomposes programs into rule targets, and
// auto-promotes terminal expansions whose token cannot be copied from the
// paired description (mutating the grammar: new predefined rules are inserted
// before the start rule so ids stay dense and the start rule stays last).
LoadedCorpus load_corpus(const std::vector<CorpusRecord>& records, Grammar& grammar,
                         const Vocab& words, const Vocab& chars, int char_max_len,
                         const LoadOptions& opts);

// Builds word/char vocabularies from record descriptions.
void build_vocabs(const std::vector<CorpusRecord>& records, TokenizeMode mode,
                  Vocab& words, Vocab& chars);

// Serializes predefined rules (excluding the synthesized start rule) in id
// order; Grammar::parse of the output reproduces identical ids.
std::string grammar_to_text(const Grammar& grammar);

}  // namespace treegen
