// End-to-end acceptance gate: ten independent checks, one pass/fail line
// each, nonzero exit when any check fails. Oracles are re-implemented inline
// (parent-link walks, exhaustive beam enumeration, finite differences) so a
// check cannot pass by construction.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "treegen/config.hpp"
#include "treegen/corpus.hpp"
#include "treegen/gradcheck.hpp"
#include "treegen/grammar.hpp"
#include "treegen/inference.hpp"
#include "treegen/metrics.hpp"
#include "treegen/model.hpp"
#include "treegen/nn.hpp"
#include "treegen/synth.hpp"
#include "treegen/training.hpp"
#include "test_util.hpp"

using namespace treegen;

namespace {

struct Criterion {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// ---------------------------------------------------------------- helpers

std::string random_grammar_text(std::mt19937_64& rng) {
  const int n_nt = 2 + static_cast<int>(rng() % 4);
  std::vector<std::string> nts, terms;
  for (int i = 0; i < n_nt; ++i) nts.push_back("N" + std::to_string(i));
  for (int i = 0; i < 8; ++i) terms.push_back("t" + std::to_string(i));
  std::set<std::string> seen;
  std::vector<std::string> lines;
  auto add = [&](const std::string& l) {
    if (seen.insert(l).second) lines.push_back(l);
  };
  // every nonterminal owns at least one all-terminal rule so any derivation
  // can be finished on demand
  for (int i = 0; i < n_nt; ++i) {
    std::string l = nts[static_cast<size_t>(i)] + " ->";
    const int len = 1 + static_cast<int>(rng() % 2);
    for (int j = 0; j < len; ++j) l += " \"" + terms[rng() % terms.size()] + "\"";
    add(l);
  }
  const int extra = 2 + static_cast<int>(rng() % 5);
  for (int e = 0; e < extra; ++e) {
    std::string l = nts[rng() % static_cast<size_t>(n_nt)] + " ->";
    const int len = 1 + static_cast<int>(rng() % 3);
    for (int j = 0; j < len; ++j) {
      if (rng() % 2)
        l += " " + nts[rng() % static_cast<size_t>(n_nt)];
      else
        l += " \"" + terms[rng() % terms.size()] + "\"";
    }
    add(l);
  }
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

Grammar random_grammar(std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    try {
      return Grammar::parse(random_grammar_text(rng));
    } catch (const GrammarError&) {
      // unreachable nonterminal; roll again
    }
  }
  throw std::runtime_error("random grammar generation kept failing");
}

// Random complete derivation; switches to all-terminal rules once the rule
// count reaches finish_after. Copy expansions use globally unique tokens so
// decomposition cannot confuse them with predefined terminals.
DerivationState random_derivation(const Grammar& g, std::mt19937_64& rng, int finish_after,
                                  int& copy_counter) {
  DerivationState s = g.initial_state();
  g.apply_rule(s, g.start_rule_id());
  while (!s.complete()) {
    const int f = s.frontier()->symbol;
    std::vector<int> all, finishing;
    for (const auto& r : g.rules()) {
      if (r.parent != f) continue;
      all.push_back(r.id);
      bool term_only = true;
      for (int c : r.children) term_only = term_only && g.is_terminal(c);
      if (term_only) finishing.push_back(r.id);
    }
    const bool force = static_cast<int>(s.applied.size()) >= finish_after;
    if (g.admits_terminal(f) && rng() % 4 == 0) {
      g.apply_copy(s, "cp" + std::to_string(copy_counter++));
      continue;
    }
    const auto& pool = force && !finishing.empty() ? finishing : all;
    g.apply_rule(s, pool[rng() % pool.size()]);
  }
  return s;
}

bool applied_equal(const std::vector<AppliedRule>& a, const std::vector<AppliedRule>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].rule_id != b[i].rule_id || a[i].copy_token != b[i].copy_token ||
        a[i].parent_symbol != b[i].parent_symbol)
      return false;
  return true;
}

// Small model fixture over an arbitrary grammar, for the forward-pass checks.
struct Fixture {
  Grammar grammar;
  Vocab words, chars;
  ModelConfig cfg;

  Fixture(const std::string& grammar_text, const std::vector<std::string>& nl_tokens,
          std::uint64_t seed)
      : grammar(Grammar::parse(grammar_text)),
        words(Vocab::from_tokens(nl_tokens)),
        chars([&] {
          std::vector<std::string> cs;
          for (const auto& t : nl_tokens)
            for (char c : t) cs.push_back(std::string(1, c));
          return Vocab::from_tokens(cs);
        }()) {
    cfg.d = 8;
    cfg.n_heads = 2;
    cfg.n_nl_blocks = 1;
    cfg.n_ast_blocks = 1;
    cfg.n_dec_blocks = 1;
    cfg.fc_hidden = 16;
    cfg.dropout = 0.0;
    cfg.char_max_len = 4;
    cfg.tree_conv_blocks = 1;
    cfg.word_vocab = words.size();
    cfg.char_vocab = chars.size();
    cfg.seed = seed;
  }
};

// Per-step next-rule distribution exactly as incremental inference computes it.
RuleDistribution step_distribution(Model& m, const Grammar& g, const DerivationState& st,
                                   const NlEncoding& nl) {
  AstInputs ai = m.make_ast_inputs(st);
  Tensor ast = m.encode_ast(ai, nl, false);
  Tensor q = m.encode_queries({m.pad_path(g.query_path(st))}, false);
  Tensor h = m.decode(q, ast, nl, false, false, static_cast<int>(st.applied.size()) - 1);
  return m.predict(h, 0, nl, g.valid_rule_mask(st, nl.tokens));
}

struct Enumerated {
  std::vector<std::string> tokens;
  double log_prob = 0.0;
};

void enumerate_derivations(Model& m, const Grammar& g, const NlEncoding& nl,
                           DerivationState& st, double logp, std::vector<Enumerated>& out,
                           size_t cap) {
  if (out.size() > cap) return;
  if (st.complete()) {
    out.push_back({Grammar::linearize(st.tree), logp});
    return;
  }
  RuleDistribution dist = step_distribution(m, g, st, nl);
  const auto combined = dist.combined();
  const int R = g.num_rules();
  for (size_t i = 0; i < dist.mask.size(); ++i) {
    if (!dist.mask[i]) continue;
    DerivationState next = st.clone();
    if (static_cast<int>(i) < R)
      g.apply_rule(next, static_cast<int>(i));
    else
      g.apply_copy(next, nl.tokens[i - static_cast<size_t>(R)]);
    enumerate_derivations(m, g, nl, next, logp + std::log(std::max(combined[i], 1e-300)),
                          out, cap);
  }
}

// ---------------------------------------------------------------- criteria

Criterion check_grammar_round_trip() {
  Criterion c{"grammar round-trip and depth/parent laws", false, "", 0.0};
  std::mt19937_64 rng(2024);
  int copy_counter = 0;
  for (int gi = 0; gi < 20; ++gi) {
    Grammar g = random_grammar(rng);
    for (int di = 0; di < 50; ++di) {
      DerivationState s = random_derivation(g, rng, 40, copy_counter);
      if (!s.complete()) {
        c.detail = "derivation did not complete";
        return c;
      }
      auto dec = g.decompose(s.tree);
      if (!applied_equal(dec, s.applied)) {
        c.detail = "decompose(derive(seq)) != seq";
        return c;
      }
      DerivationState re = g.derive_applied(s.applied);
      if (!tree_equal(re.tree, s.tree) || re.depths != s.depths ||
          re.rule_parent_index != s.rule_parent_index) {
        c.detail = "replayed derivation disagrees with the original";
        return c;
      }
      if (s.depths.empty() || s.depths[0] != 0) {
        c.detail = "root expansion depth != 0";
        return c;
      }
      for (size_t j = 1; j < s.applied.size(); ++j) {
        const int p = s.rule_parent_index[j];
        if (p < 0 || p >= static_cast<int>(j)) {
          c.detail = "parent index outside [0, j)";
          return c;
        }
        if (s.depths[j] != s.depths[static_cast<size_t>(p)] + 1) {
          c.detail = "depth law depths[j] == depths[parent]+1 violated";
          return c;
        }
      }
    }
  }
  c.passed = true;
  c.detail = "20 grammars x 50 derivations";
  return c;
}

Criterion check_adjacency_oracle() {
  Criterion c{"ancestor adjacency vs parent-walk oracle", false, "", 0.0};
  std::mt19937_64 rng(7);
  int copy_counter = 0;
  int done = 0;
  while (done < 200) {
    Grammar g = random_grammar(rng);
    DerivationState s = random_derivation(g, rng, 4, copy_counter);
    const int P = static_cast<int>(s.applied.size());
    if (P > 12) continue;
    ++done;
    for (int order : {1, 2}) {
      auto m = Grammar::adjacency_matrix(s, order);
      for (int j = 0; j < P; ++j) {
        int cur = j;  // independent walk, saturating at the root row
        for (int k = 0; k < order; ++k) cur = s.rule_parent_index[static_cast<size_t>(cur)];
        for (int i = 0; i < P; ++i) {
          const double want = i == cur ? 1.0 : 0.0;
          if (m[static_cast<size_t>(i)][static_cast<size_t>(j)] != want) {
            c.detail = "order-" + std::to_string(order) + " column " + std::to_string(j) +
                       " disagrees with the walk oracle";
            return c;
          }
        }
      }
    }
  }
  c.passed = true;
  c.detail = "200 derivations, orders 1 and 2";
  return c;
}

Criterion check_gradients_suite() {
  Criterion c{"finite-difference gradients, primitives and end-to-end", false, "", 0.0};
  std::mt19937_64 rng(11);
  double worst = 0.0;
  std::string worst_name;
  auto run = [&](const std::string& name, const std::vector<Tensor>& leaves,
                 const std::function<Tensor()>& loss) {
    const double e = testutil::fd_max_rel_err(leaves, loss);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };

  Tensor a = testutil::randn({3, 4}, rng), b = testutil::randn({3, 4}, rng);
  run("add/sub/mul", {a, b}, [&] { return sum_all(mul(add(a, b), sub(a, b))); });
  run("scale/add_const", {a}, [&] {
    return sum_all(scale(add_const(a, std::vector<double>(12, 0.5)), 1.7));
  });
  Tensor v = testutil::randn({4}, rng), cv = testutil::randn({3}, rng);
  run("add_rowvec", {a, v}, [&] { return sum_all(mul(add_rowvec(a, v), a)); });
  run("mul_rowvec", {a, v}, [&] { return sum_all(mul_rowvec(a, v)); });
  run("mul_colvec", {a, cv}, [&] { return sum_all(mul_colvec(a, cv)); });
  Tensor w = testutil::randn({4, 5}, rng);
  run("matmul/transpose", {a, w}, [&] { return sum_all(matmul(transpose(matmul(a, w)), a)); });
  run("concat/slice/reshape", {a, b}, [&] {
    Tensor cc = concat_cols({a, b});
    Tensor rr = concat_rows({slice_rows(cc, 0, 2), slice_rows(cc, 1, 2)});
    Tensor sq = reshape(slice_cols(cc, 2, 4), {4, 3});
    return add(sum_all(mul(rr, rr)), sum_all(mul(sq, sq)));
  });
  Tensor table = testutil::randn({6, 4}, rng);
  run("take_rows/embedding", {table}, [&] {
    return sum_all(mul(take_rows(table, {0, 2, 5}), embedding(table, {1, 2, 3})));
  });
  run("gather_concat", {table}, [&] {
    return sum_all(gather_concat(table, {{0, 1}, {2, 0}, {5, 3}}));
  });
  run("softmax_rows", {a}, [&] { return sum_all(mul(softmax_rows(a), a)); });
  Tensor g1 = testutil::randn({4}, rng), b1 = testutil::randn({4}, rng);
  run("layer_norm", {a, g1, b1}, [&] { return sum_all(mul(layer_norm(a, g1, b1), a)); });
  run("gelu/tanh/sigmoid", {a}, [&] {
    return sum_all(mul(gelu(a), add(tanh_t(a), sigmoid_t(a))));
  });
  run("rowwise_dot/mean", {a, b}, [&] { return mean_all(rowwise_dot(a, b)); });
  run("select/sum_items/stack", {a}, [&] {
    Tensor s1 = select_item(a, 3);
    Tensor s2 = sum_items(a, {0, 5, 7});
    return sum_all(stack_scalars({s1, s2, mul(s1, s2)}));
  });
  run("neg_log_floored", {a}, [&] {
    return sum_all(neg_log_floored(select_item(sigmoid_t(a), 2)));
  });
  run("shift_rows", {a}, [&] { return sum_all(mul(shift_rows(a, 1), a)); });

  Tensor lb = testutil::randn({5}, rng);
  run("linear", {a, w, lb}, [&] { return sum_all(linear(a, w, lb)); });
  Tensor x6 = testutil::randn({5, 6}, rng);
  AttentionParams ap{testutil::randn({6, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                     testutil::randn({6, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                     testutil::randn({6}, rng, 0.5)};
  run("multi_head_attention", {x6, ap.wq, ap.wk, ap.wv, ap.wo, ap.bo}, [&] {
    return sum_all(multi_head_attention(x6, x6, ap, 2, causal_mask(5)));
  });
  Tensor q2 = testutil::randn({4, 6}, rng), k1 = testutil::randn({4, 6}, rng),
         v1 = testutil::randn({4, 6}, rng), k2 = testutil::randn({4, 6}, rng),
         v2 = testutil::randn({4, 6}, rng);
  run("two_way_gate", {q2, k1, v1, k2, v2}, [&] {
    return sum_all(two_way_gate(q2, k1, v1, k2, v2));
  });
  GateParams gp{testutil::randn({6, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                testutil::randn({6, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                testutil::randn({6, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                testutil::randn({6}, rng, 0.5)};
  Tensor aux = testutil::randn({5, 6}, rng);
  run("gate_sublayer", {x6, aux, gp.wq, gp.wky, gp.wvy, gp.wkc, gp.wvc, gp.wo, gp.bo},
      [&] { return sum_all(gate_sublayer(x6, aux, gp, 2)); });
  SeparableConvParams sp{testutil::randn({3, 6}, rng, 0.5), testutil::randn({6, 6}, rng, 0.5),
                         testutil::randn({6}, rng, 0.5)};
  run("separable_conv1d", {x6, sp.depthwise, sp.pointwise, sp.bias},
      [&] { return sum_all(separable_conv1d(x6, sp)); });

  if (worst >= 1e-4) {
    c.detail = "primitive '" + worst_name + "' rel err " + std::to_string(worst);
    return c;
  }
  GradCheckReport micro = gradcheck_micro(1);
  if (!micro.ok(1e-3)) {
    c.detail = "end-to-end rel err " + std::to_string(micro.max_rel_err) + " at " + micro.worst;
    return c;
  }
  std::ostringstream os;
  os << "primitives worst " << worst << " (" << worst_name << "), end-to-end "
     << micro.max_rel_err << " over " << micro.entries_checked << " entries";
  c.passed = true;
  c.detail = os.str();
  return c;
}

const char* kRecursiveGrammar =
    "S -> A B\n"
    "A -> \"x\"\n"
    "A -> Name\n"
    "Name -> \"_v\"\n"
    "B -> \"y\"\n"
    "B -> A B\n";

Criterion check_distribution_laws() {
  Criterion c{"next-rule distribution laws over random forward passes", false, "", 0.0};
  std::mt19937_64 rng(19);
  int copy_counter = 0;
  const std::vector<std::string> pool{"foo", "bar", "x", "baz", "qux"};
  for (int ms = 0; ms < 5; ++ms) {
    Fixture f(kRecursiveGrammar, pool, 100 + static_cast<std::uint64_t>(ms));
    Model m(f.cfg, f.grammar);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::string> toks;
      const int L = 2 + static_cast<int>(rng() % 3);
      for (int i = 0; i < L; ++i) toks.push_back(pool[rng() % pool.size()]);
      NlInput nl_in = make_nl_input(toks, f.words, f.chars, f.cfg.char_max_len);
      NlEncoding nl = m.encode_nl(nl_in, false);
      DerivationState full = random_derivation(f.grammar, rng, 10, copy_counter);
      const size_t T = full.applied.size();
      const size_t t = 1 + rng() % (T - 1);
      DerivationState st = f.grammar.initial_state();
      for (size_t i = 0; i < t; ++i) f.grammar.apply(st, full.applied[i]);
      RuleDistribution dist = step_distribution(m, f.grammar, st, nl);
      const auto combined = dist.combined();
      const int R = f.grammar.num_rules();
      double sum = 0.0, sum_d = 0.0, sum_c = 0.0;
      for (size_t i = 0; i < combined.size(); ++i) {
        if (!dist.mask[i] && combined[i] != 0.0) {
          c.detail = "nonzero probability on a masked choice";
          return c;
        }
        sum += combined[i];
        if (static_cast<int>(i) < R)
          sum_d += dist.predefined.value()[i];
        else
          sum_c += dist.copy.defined() ? dist.copy.value()[i - static_cast<size_t>(R)] : 0.0;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        c.detail = "combined mass " + std::to_string(sum) + " != 1";
        return c;
      }
      const double pg = dist.gate.item();
      if (std::abs(pg * sum_d + (1.0 - pg) * sum_c - 1.0) > 1e-6) {
        c.detail = "total-mass law p_g*sum_D + (1-p_g)*sum_C != 1";
        return c;
      }
      if (!dist.has_copy && pg != 1.0) {
        c.detail = "gate not forced to 1 with no copyable position";
        return c;
      }
      if (!dist.has_predefined && pg != 0.0) {
        c.detail = "gate not forced to 0 with no predefined rule";
        return c;
      }
    }
  }
  c.passed = true;
  c.detail = "500 passes, laws within 1e-6, masked mass exactly 0";
  return c;
}

Criterion check_causality() {
  Criterion c{"future-step perturbations leave earlier steps bit-identical", false, "", 0.0};
  std::mt19937_64 rng(23);
  int copy_counter = 0;
  const std::vector<std::string> pool{"foo", "bar", "x", "baz"};
  for (int trial = 0; trial < 20; ++trial) {
    Fixture f(kRecursiveGrammar, pool, 300 + static_cast<std::uint64_t>(trial % 3));
    Model m(f.cfg, f.grammar);
    DerivationState full = random_derivation(f.grammar, rng, 8, copy_counter);
    const size_t T = full.applied.size();
    if (T < 3) {
      --trial;
      continue;
    }
    NlInput nl_in = make_nl_input({"foo", "bar", "x"}, f.words, f.chars, f.cfg.char_max_len);
    NlEncoding nl = m.encode_nl(nl_in, false);
    AstInputs ai = m.make_ast_inputs(full.applied, full.depths, full.rule_parent_index);

    DerivationState st = f.grammar.initial_state();
    f.grammar.apply(st, full.applied[0]);
    std::vector<std::vector<int>> paths;
    std::vector<std::vector<bool>> masks;
    for (size_t q = 0; q + 1 < T; ++q) {
      paths.push_back(m.pad_path(f.grammar.query_path(st)));
      masks.push_back(f.grammar.valid_rule_mask(st, nl.tokens));
      f.grammar.apply(st, full.applied[q + 1]);
    }

    auto forward = [&](const AstInputs& in, const std::vector<std::vector<int>>& ps) {
      Tensor ast = m.encode_ast(in, nl, false);
      Tensor qs = m.encode_queries(ps, false);
      Tensor h = m.decode(qs, ast, nl, true, false);
      std::vector<std::vector<double>> dists;
      for (size_t q = 0; q + 1 < T; ++q) {
        RuleDistribution d = m.predict(h, static_cast<int>(q), nl, masks[q]);
        std::vector<double> flat = d.combined();
        flat.push_back(d.gate.item());
        dists.push_back(std::move(flat));
      }
      return dists;
    };
    auto base = forward(ai, paths);

    const size_t j = 1 + rng() % (T - 1);  // perturbed rule position
    AstInputs ai2 = ai;
    ai2.rule_rows[j] = (ai2.rule_rows[j] + 1) % (f.grammar.num_rules() + 1);
    ai2.depth_ids[j] = (ai2.depth_ids[j] + 1) % (f.cfg.max_depth + 1);
    std::rotate(ai2.def_ids[j].begin(), ai2.def_ids[j].begin() + 1, ai2.def_ids[j].end());
    auto paths2 = paths;
    for (size_t q = j; q + 1 < T; ++q)
      paths2[q][0] = (paths2[q][0] + 1) % (f.grammar.num_symbols() + 1);
    auto pert = forward(ai2, paths2);

    for (size_t i = 0; i < j && i < base.size(); ++i) {
      if (base[i] != pert[i]) {  // bitwise equality of doubles on purpose
        c.detail = "step " + std::to_string(i) + " changed after perturbing position " +
                   std::to_string(j);
        return c;
      }
    }
  }
  c.passed = true;
  c.detail = "20 trials";
  return c;
}

Criterion check_beam_oracle() {
  Criterion c{"beam search vs exhaustive enumeration", false, "", 0.0};
  const std::vector<std::string> toys = {
      "S -> \"a\"\nS -> \"b\"\n",
      "S -> \"a\"\nS -> \"b\"\nS -> \"c\"\n",
      "S -> A A\nA -> \"a\"\nA -> \"b\"\n",
      "S -> A B\nA -> \"a\"\nA -> \"b\"\nB -> \"x\" \"y\"\n",
      "S -> \"k\" A\nA -> \"a\"\nA -> \"b\"\n",
      "S -> A\nA -> B\nB -> \"a\"\nB -> \"b\"\n",
      "S -> A \"m\" B\nA -> \"a\"\nB -> \"b\"\nB -> \"c\"\n",
      "S -> \"p\" \"q\"\nS -> A\nA -> \"a\"\n",
      "S -> A B\nA -> \"a\" \"b\"\nA -> \"c\"\nB -> \"x\"\n",
      "S -> \"z\"\n",
  };
  for (size_t gi = 0; gi < toys.size(); ++gi) {
    Fixture f(toys[gi], {"u", "w"}, 500 + gi);
    Model m(f.cfg, f.grammar);
    NlInput nl_in = make_nl_input({"u", "w"}, f.words, f.chars, f.cfg.char_max_len);
    NlEncoding nl = m.encode_nl(nl_in, false);

    std::vector<Enumerated> all;
    DerivationState root = f.grammar.initial_state();
    f.grammar.apply_rule(root, f.grammar.start_rule_id());
    enumerate_derivations(m, f.grammar, nl, root, 0.0, all, 20);
    if (all.size() > 20) {
      c.detail = "toy grammar " + std::to_string(gi) + " has more than 20 derivations";
      return c;
    }
    double best = -1e300;
    for (const auto& e : all) best = std::max(best, e.log_prob);

    InferenceConfig ic;
    ic.beam_size = 20;
    ic.max_steps = 30;
    GenerationResult r = generate(m, f.grammar, nl_in, ic);
    if (!r.ok()) {
      c.detail = "beam returned nothing on toy grammar " + std::to_string(gi);
      return c;
    }
    if (std::abs(r.ranked.front().log_prob - best) > 1e-9) {
      c.detail = "toy grammar " + std::to_string(gi) + ": beam top " +
                 std::to_string(r.ranked.front().log_prob) + " vs exhaustive best " +
                 std::to_string(best);
      return c;
    }
    bool token_match = false;
    for (const auto& e : all)
      if (e.log_prob >= best - 1e-9 && e.tokens == r.ranked.front().tokens) token_match = true;
    if (!token_match) {
      c.detail = "toy grammar " + std::to_string(gi) + ": beam top program is not an argmax";
      return c;
    }
  }
  c.passed = true;
  c.detail = "10/10 toy grammars";
  return c;
}

struct OverfitResult {
  double str_acc = 0.0;
  double loss = 1e300;
};

OverfitResult train_synth(bool disable_pointer) {
  SynthOptions so;
  so.seed = 42;
  so.size = 50;
  SynthTask task = synth_task(so);
  Grammar g = Grammar::parse(task.grammar_text);
  Vocab words, chars;
  build_vocabs(task.records, TokenizeMode::Plain, words, chars);

  ConfigBundle cb;
  cb.model.d = 64;
  cb.model.n_heads = 8;
  cb.model.n_nl_blocks = 2;
  cb.model.n_ast_blocks = 2;
  cb.model.n_dec_blocks = 2;
  cb.model.tree_conv_blocks = 2;
  cb.model.fc_hidden = 256;
  cb.model.dropout = 0.0;
  cb.model.char_max_len = 8;
  cb.model.word_vocab = words.size();
  cb.model.char_vocab = chars.size();
  cb.model.seed = 9;
  cb.model.disable_pointer = disable_pointer;
  cb.train.batch_size = 8;
  cb.train.epochs = 30;
  cb.train.eval_every = 1000;
  cb.train.checkpoint_every = 1000;
  cb.inference.max_steps = 60;

  LoadOptions lo;
  LoadedCorpus lc = load_corpus(task.records, g, words, chars, cb.model.char_max_len, lo);

  auto dir = std::filesystem::temp_directory_path() /
             (std::string("accept_overfit_") + (disable_pointer ? "ptr_off" : "full"));
  std::filesystem::remove_all(dir);
  Model m(cb.model, g);
  TrainResult tr = train_model(m, g, lc.examples, {}, cb, dir.string());
  OverfitResult out;
  out.loss = tr.final_loss;
  out.str_acc = dev_str_acc(m, g, lc.examples, cb.inference.max_steps);
  std::filesystem::remove_all(dir);
  return out;
}

Criterion check_config_defaults() {
  Criterion c{"default configuration snapshot", false, "", 0.0};
  ConfigBundle def;
  std::vector<std::pair<bool, std::string>> checks = {
      {def.model.n_nl_blocks == 6, "n_nl_blocks=6"},
      {def.model.n_ast_blocks == 5, "n_ast_blocks=5"},
      {def.model.n_dec_blocks == 5, "n_dec_blocks=5"},
      {def.model.d == 256, "d=256"},
      {def.model.fc_hidden == 1024, "fc_hidden=1024"},
      {def.model.dropout == 0.15, "dropout=0.15"},
      {def.model.tree_conv_window == 3, "tree_conv_window=3"},
      {def.model.conv_window == 3, "conv_window=3"},
      {def.model.n_heads == 8, "n_heads=8"},
      {def.inference.beam_size == 5, "beam_size=5"},
  };
  for (const auto& [ok, what] : checks)
    if (!ok) {
      c.detail = "default " + what + " violated";
      return c;
    }
  // serialized snapshot must round-trip to the same snapshot
  const std::string snap = def.to_text();
  if (ConfigBundle::from_text(snap).to_text() != snap) {
    c.detail = "config text round trip changed the snapshot";
    return c;
  }
  c.passed = true;
  c.detail = "all pinned defaults present, snapshot round-trips";
  return c;
}

Criterion check_metric_sanity() {
  Criterion c{"exact-match and BLEU sanity", false, "", 0.0};
  std::vector<std::vector<std::string>> same = {{"a", "b", "c"}, {"d"}, {"e", "f"}};
  if (str_acc(same, same) != 100.0) {
    c.detail = "exact match on identical sets != 100";
    return c;
  }
  if (std::abs(bleu(same, same) - 100.0) > 1e-9) {
    c.detail = "BLEU on identical sets != 100";
    return c;
  }
  // frozen value from an independently written reference scorer
  std::vector<std::vector<std::string>> preds = {{"the", "cat", "sat", "on", "the", "mat"},
                                                 {"print", "(", "hello", "world", ")"}},
                                        refs = {{"the", "cat", "is", "on", "the", "mat"},
                                                {"print", "(", "hello", ",", "world", ")"}};
  const double got = bleu(preds, refs);
  if (std::abs(got - 40.7769770269) > 0.1) {
    c.detail = "BLEU " + std::to_string(got) + " off the reference value 40.7769770269";
    return c;
  }
  c.passed = true;
  c.detail = "100/100 on identical sets, reference case within 0.1";
  return c;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  auto timed = [&](const std::function<Criterion()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Criterion c = fn();
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(c);
  };

  timed(check_grammar_round_trip);
  if (results.back().passed && results.back().seconds >= 10.0) {
    results.back().passed = false;
    results.back().detail += " (over the 10 s budget)";
  }
  timed(check_adjacency_oracle);
  timed(check_gradients_suite);
  if (results.back().passed && results.back().seconds >= 120.0) {
    results.back().passed = false;
    results.back().detail += " (over the 2 min budget)";
  }
  timed(check_distribution_laws);
  timed(check_causality);
  timed(check_beam_oracle);

  // overfit + ablation share one training pipeline; time the full model run
  OverfitResult full{}, ablated{};
  std::string train_err;
  timed([&]() -> Criterion {
    Criterion c{"synthetic-task overfit under the 15 min budget", false, "", 0.0};
    try {
      full = train_synth(false);
    } catch (const std::exception& e) {
      c.detail = std::string("training failed: ") + e.what();
      train_err = c.detail;
      return c;
    }
    std::ostringstream os;
    os << "exact match " << full.str_acc << "%, final loss " << full.loss;
    c.detail = os.str();
    c.passed = full.str_acc >= 95.0 && full.loss < 0.1;
    return c;
  });
  if (results.back().passed && results.back().seconds >= 900.0) {
    results.back().passed = false;
    results.back().detail += " (over the 15 min budget)";
  }
  timed([&]() -> Criterion {
    Criterion c{"pointer ablation caps exact match", false, "", 0.0};
    if (!train_err.empty()) {
      c.detail = "skipped: " + train_err;
      return c;
    }
    try {
      ablated = train_synth(true);
    } catch (const std::exception& e) {
      c.detail = std::string("ablated training failed: ") + e.what();
      return c;
    }
    std::ostringstream os;
    os << "pointer off " << ablated.str_acc << "% vs full " << full.str_acc << "%";
    c.detail = os.str();
    c.passed = ablated.str_acc < 70.0 && full.str_acc >= 95.0;
    return c;
  });
  timed(check_config_defaults);
  timed(check_metric_sanity);

  int failures = 0;
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& c = results[i];
    if (!c.passed) ++failures;
    std::printf("%s %2zu %s [%s] (%.1fs)\n", c.passed ? "PASS" : "FAIL", i + 1,
                c.name.c_str(), c.detail.c_str(), c.seconds);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failures,
              results.size());
  return failures == 0 ? 0 : 1;
}
