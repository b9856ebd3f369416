#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "treegen/config.hpp"
#include "treegen/corpus.hpp"
#include "treegen/grammar.hpp"
#include "treegen/model.hpp"
#include "treegen/tensor.hpp"

namespace treegen {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Probability mass the distribution assigns to target choice `index` over
// D ∪ C, routed through the gate (graph tensor, scalar).
Tensor routed_prob(const RuleDistribution& dist, int index);

// Mean of −log p(target) with probabilities floored at 1e-12. Targets index
// D ∪ C; a target masked out at its step is an error.
Tensor nll_loss(const std::vector<RuleDistribution>& dists, const std::vector<int>& targets);

struct ExampleLossInfo {
  int steps = 0;
  int skipped_copy_only = 0;  // pointer disabled but the gold step is a copy
};

// Teacher-forced NLL of one example: AST reader over the full gold rule
// sequence, decoder queries causally restricted to each step's prefix. When
// the gold token is both a predefined unary rule and copyable from the
// description, both routes' mass counts toward the target (copy_preferred
// keeps only the copy route).
Tensor example_loss(Model& model, const Grammar& grammar, const TrainExample& ex,
                    bool training, ExampleLossInfo* info = nullptr);

// Adafactor with the standard defaults: relative step size min(1e-2, 1/sqrt t)
// scaled by max(eps2, RMS(param)), decay 1 - t^-0.8, factored second moments
// for matrices, update clipping at RMS 1.0, no momentum.
class Adafactor {
 public:
  explicit Adafactor(double eps1 = 1e-30, double eps2 = 1e-3, double clip = 1.0)
      : eps1_(eps1), eps2_(eps2), clip_(clip) {}

  // Applies accumulated gradients in place; skips (and reports via return
  // value) parameters with non-finite gradients. Does not zero gradients.
  int step(ParamStore& params);
  int t() const { return t_; }

 private:
  struct Moments {
    std::vector<double> row, col;  // factored (matrices)
    std::vector<double> full;      // vectors and scalars
  };
  double eps1_, eps2_, clip_;
  int t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

void save_checkpoint(const std::string& path, const ConfigBundle& cfg,
                     const ParamStore& params);
// Loads into an already-built model; every manifest entry must match a
// registered parameter's shape exactly.
ConfigBundle load_checkpoint(const std::string& path, ParamStore& params);
// Reads only the config snapshot (to rebuild a model before loading weights).
ConfigBundle read_checkpoint_config(const std::string& path);

struct TrainResult {
  double final_loss = 0.0;
  double best_dev_stracc = -1.0;
  int epochs_run = 0;
};

// Full training loop: shuffled length-grouped batches, per-batch Adafactor
// step with global-norm gradient clipping, append-only metrics log
// "epoch<TAB>loss<TAB>dev_stracc" (dash when the dev set was not scored that
// epoch), periodic checkpoints plus best.tgck / final.tgck under out_dir.
TrainResult train_model(Model& model, const Grammar& grammar,
                        const std::vector<TrainExample>& train_set,
                        const std::vector<TrainExample>& dev_set, const ConfigBundle& cfg,
                        const std::string& out_dir, std::ostream* progress = nullptr);

// Dev-set exact-match percentage under greedy decoding.
double dev_str_acc(Model& model, const Grammar& grammar,
                   const std::vector<TrainExample>& dev_set, int max_steps);

}  // namespace treegen
