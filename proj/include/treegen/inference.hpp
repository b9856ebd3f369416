#pragma once

#include <string>
#include <vector>

#include "treegen/config.hpp"
#include "treegen/grammar.hpp"
#include "treegen/model.hpp"
#include "treegen/vocab.hpp"

namespace treegen {

struct GeneratedProgram {
  AstNodePtr tree;
  std::vector<std::string> tokens;
  double log_prob = 0.0;
  std::vector<AppliedRule> applied;
};

struct GenerationResult {
  std::vector<GeneratedProgram> ranked;  // best first; empty when every beam died
  std::string diagnostic;                // warnings (dropped hypotheses, dead beam)
  bool ok() const { return !ranked.empty(); }
};

// Beam search over rule choices. Each hypothesis starts from the start rule,
// expands its leftmost frontier nonterminal through the masked next-rule
// distribution, and finishes when no nonterminal remains. Scores are raw
// log-probability sums unless cfg.length_normalize is set. Ties break by
// lower predefined rule id, predefined before copy, then lower copy position.
GenerationResult generate(Model& model, const Grammar& grammar, const NlInput& nl,
                          const InferenceConfig& cfg);

// Beam size 1 shortcut used for dev-set scoring during training.
GenerationResult generate_greedy(Model& model, const Grammar& grammar, const NlInput& nl,
                                 int max_steps);

}  // namespace treegen
