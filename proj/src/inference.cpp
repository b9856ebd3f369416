#include "treegen/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace treegen {

namespace {

struct Hyp {
  DerivationState state;
  double lp = 0.0;
};

struct Candidate {
  size_t hyp;
  int choice;  // index over D then C
  double score;
};

}  // namespace

GenerationResult generate(Model& model, const Grammar& grammar, const NlInput& nl,
                          const InferenceConfig& cfg) {
  if (cfg.beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  GenerationResult out;
  std::ostringstream diag;

  NlEncoding nl_enc = model.encode_nl(nl, false);
  const int R = grammar.num_rules();

  Hyp root;
  root.state = grammar.initial_state();
  grammar.apply_rule(root.state, grammar.start_rule_id());
  std::vector<Hyp> live{std::move(root)};
  std::vector<Hyp> finished;

  while (!live.empty()) {
    if (static_cast<int>(live.front().state.applied.size()) >= cfg.max_steps) {
      diag << "dropped " << live.size() << " hypothesis(es) at the " << cfg.max_steps
           << "-rule limit\n";
      break;
    }
    std::vector<Candidate> cands;
    size_t dead = 0;
    for (size_t h = 0; h < live.size(); ++h) {
      const auto& st = live[h].state;
      auto mask = grammar.valid_rule_mask(st, nl.tokens);
      if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
        ++dead;
        continue;
      }
      AstInputs ai = model.make_ast_inputs(st);
      Tensor ast = model.encode_ast(ai, nl_enc, false);
      Tensor q = model.encode_queries({model.pad_path(grammar.query_path(st))}, false);
      const int step = static_cast<int>(st.applied.size()) - 1;
      Tensor hh = model.decode(q, ast, nl_enc, false, false, step);
      RuleDistribution dist = model.predict(hh, 0, nl_enc, mask);
      auto probs = dist.combined();
      for (int c = 0; c < static_cast<int>(mask.size()); ++c)
        if (mask[static_cast<size_t>(c)])
          cands.push_back({h, c,
                           live[h].lp + std::log(std::max(probs[static_cast<size_t>(c)],
                                                          1e-300))});
    }
    if (dead == live.size()) {
      diag << "every hypothesis dead: no valid rule at the frontier\n";
      break;
    }
    // stable sort keeps enumeration order (hypothesis, then choice with
    // predefined rules first) as the tie-break
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (static_cast<int>(cands.size()) > cfg.beam_size)
      cands.resize(static_cast<size_t>(cfg.beam_size));

    std::vector<Hyp> next;
    for (const auto& c : cands) {
      Hyp h;
      h.state = live[c.hyp].state.clone();
      h.lp = c.score;
      if (c.choice < R)
        grammar.apply_rule(h.state, c.choice);
      else
        grammar.apply_copy(h.state, nl.tokens[static_cast<size_t>(c.choice - R)]);
      if (h.state.complete())
        finished.push_back(std::move(h));
      else
        next.push_back(std::move(h));
    }
    // raw log-prob sums only shrink, so live hypotheses that already trail
    // every kept finished score cannot win
    if (!cfg.length_normalize && static_cast<int>(finished.size()) >= cfg.beam_size) {
      double worst_kept = finished.front().lp;
      for (const auto& f : finished) worst_kept = std::min(worst_kept, f.lp);
      std::erase_if(next, [&](const Hyp& h) { return h.lp <= worst_kept; });
    }
    live = std::move(next);
  }

  auto rank_score = [&](const Hyp& h) {
    return cfg.length_normalize
               ? h.lp / static_cast<double>(std::max<size_t>(1, h.state.applied.size()))
               : h.lp;
  };
  std::stable_sort(finished.begin(), finished.end(),
                   [&](const Hyp& a, const Hyp& b) { return rank_score(a) > rank_score(b); });
  for (auto& h : finished) {
    GeneratedProgram g;
    g.tree = h.state.tree;
    g.tokens = Grammar::linearize(h.state.tree);
    g.log_prob = h.lp;
    g.applied = h.state.applied;
    out.ranked.push_back(std::move(g));
  }
  if (out.ranked.empty() && diag.str().empty())
    diag << "no hypothesis finished within " << cfg.max_steps << " rules\n";
  out.diagnostic = diag.str();
  return out;
}

GenerationResult generate_greedy(Model& model, const Grammar& grammar, const NlInput& nl,
                                 int max_steps) {
  InferenceConfig cfg;
  cfg.beam_size = 1;
  cfg.max_steps = max_steps;
  return generate(model, grammar, nl, cfg);
}

}  // namespace treegen
