#include "treegen/gradcheck.hpp"

#include <cmath>

#include "treegen/corpus.hpp"
#include "treegen/grammar.hpp"
#include "treegen/model.hpp"
#include "treegen/training.hpp"
#include "treegen/vocab.hpp"

namespace treegen {

GradCheckReport check_gradients(ParamStore& params, const std::function<Tensor()>& loss,
                                int max_entries_per_param, double fd_step) {
  params.zero_grads();
  Tensor l0 = loss();
  l0.backward();

  GradCheckReport rep;
  for (const auto& [name, p] : params.items()) {
    const auto analytic = p.raw()->ensure_grad();  // copy before perturbing
    auto& val = p.raw()->value;
    const long n = static_cast<long>(val.size());
    long stride = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param)
      stride = (n + max_entries_per_param - 1) / max_entries_per_param;
    for (long i = 0; i < n; i += stride) {
      const double keep = val[static_cast<size_t>(i)];
      val[static_cast<size_t>(i)] = keep + fd_step;
      const double up = loss().item();
      val[static_cast<size_t>(i)] = keep - fd_step;
      const double dn = loss().item();
      val[static_cast<size_t>(i)] = keep;
      const double numeric = (up - dn) / (2.0 * fd_step);
      const double a = analytic[static_cast<size_t>(i)];
      const double rel =
          std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      ++rep.entries_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

GradCheckReport gradcheck_micro(std::uint64_t seed) {
  Grammar grammar = Grammar::parse(
      "A -> \"a\" B\n"
      "B -> \"b\"\n"
      "B -> \"c\"\n");
  Vocab words = Vocab::from_tokens({"make", "a", "b"});
  Vocab chars = Vocab::from_tokens({"m", "a", "k", "e", "b"});

  ModelConfig mc;
  mc.d = 4;
  mc.n_heads = 2;
  mc.n_nl_blocks = 1;
  mc.n_ast_blocks = 1;
  mc.n_dec_blocks = 1;
  mc.fc_hidden = 8;
  mc.dropout = 0.0;
  mc.char_max_len = 4;
  mc.tree_conv_blocks = 1;
  mc.word_vocab = words.size();
  mc.char_vocab = chars.size();
  mc.n_rules = grammar.num_rules();
  mc.n_symbols = grammar.num_symbols();
  mc.seed = seed;
  Model model(mc, grammar);

  TrainExample ex;
  ex.id = "micro";
  ex.nl = make_nl_input({"make", "a", "b"}, words, chars, mc.char_max_len);
  auto tree = grammar.tree_from_sexp("(A a (B b))");
  auto applied = grammar.decompose(tree);
  auto state = grammar.derive_applied(applied);
  ex.applied = state.applied;
  ex.depths = state.depths;
  ex.parent_links = state.rule_parent_index;

  auto loss = [&]() { return example_loss(model, grammar, ex, false); };
  return check_gradients(model.params(), loss);
}

}  // namespace treegen
