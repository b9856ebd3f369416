#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "treegen/config.hpp"
#include "treegen/corpus.hpp"
#include "treegen/gradcheck.hpp"
#include "treegen/grammar.hpp"
#include "treegen/inference.hpp"
#include "treegen/metrics.hpp"
#include "treegen/model.hpp"
#include "treegen/synth.hpp"
#include "treegen/training.hpp"

namespace fs = std::filesystem;
using namespace treegen;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitGradcheck = 5;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TokenizeMode parse_mode(const std::string& m) {
  if (m == "plain") return TokenizeMode::Plain;
  if (m == "structural") return TokenizeMode::Structural;
  throw ConfigError("unknown preprocessing mode: " + m + " (expected plain|structural)");
}

ConfigBundle load_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  ConfigBundle cfg;
  if (!config_path.empty()) cfg = ConfigBundle::from_file(config_path);
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

struct LoadedModel {
  Grammar grammar;
  Vocab words, chars;
  ConfigBundle cfg;
  std::unique_ptr<Model> model;
};

LoadedModel load_model_dir(const std::string& dir, std::string checkpoint) {
  LoadedModel lm{Grammar::parse(read_file((fs::path(dir) / "grammar.txt").string())),
                 Vocab::load((fs::path(dir) / "words.vocab").string()),
                 Vocab::load((fs::path(dir) / "chars.vocab").string()),
                 {},
                 nullptr};
  if (checkpoint.empty()) {
    for (const char* name : {"best.tgck", "final.tgck"}) {
      auto p = fs::path(dir) / name;
      if (fs::exists(p)) {
        checkpoint = p.string();
        break;
      }
    }
    if (checkpoint.empty())
      throw CheckpointError("no best.tgck or final.tgck under " + dir);
  }
  lm.cfg = read_checkpoint_config(checkpoint);
  if (lm.cfg.model.n_rules != lm.grammar.num_rules() ||
      lm.cfg.model.n_symbols != lm.grammar.num_symbols())
    throw CheckpointError("checkpoint was trained against a different grammar than " + dir);
  if (lm.cfg.model.word_vocab != lm.words.size() || lm.cfg.model.char_vocab != lm.chars.size())
    throw CheckpointError("checkpoint vocabulary sizes do not match " + dir);
  lm.model = std::make_unique<Model>(lm.cfg.model, lm.grammar);
  load_checkpoint(checkpoint, lm.model->params());
  return lm;
}

std::vector<std::string> reference_tokens(const Grammar& g, const CorpusRecord& rec) {
  if (!rec.program.empty() && rec.program[0] == '(')
    return Grammar::linearize(g.tree_from_sexp(rec.program));
  std::istringstream in(rec.program);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

int cmd_synth(const std::string& out_dir, const SynthOptions& opts) {
  write_synth_task(out_dir, synth_task(opts));
  std::cout << "wrote " << opts.size << " examples under " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& grammar_path, const std::string& corpus_path,
              const std::string& dev_path, const std::string& out_dir, ConfigBundle cfg,
              TokenizeMode mode) {
  Grammar grammar = Grammar::parse(read_file(grammar_path));
  auto records = read_corpus_file(corpus_path);

  Vocab words, chars;
  build_vocabs(records, mode, words, chars);

  LoadOptions lopts{mode, cfg.train.strict_corpus};
  LoadedCorpus train_corpus =
      load_corpus(records, grammar, words, chars, cfg.model.char_max_len, lopts);
  for (const auto& id : train_corpus.skipped)
    std::cerr << "warning: skipped undecomposable record " << id << "\n";

  std::vector<TrainExample> dev;
  if (!dev_path.empty()) {
    auto dev_records = read_corpus_file(dev_path);
    dev = load_corpus(dev_records, grammar, words, chars, cfg.model.char_max_len, lopts)
              .examples;
  } else {
    dev = train_corpus.examples;  // overfit monitoring
  }

  cfg.model.word_vocab = words.size();
  cfg.model.char_vocab = chars.size();
  cfg.model.n_rules = grammar.num_rules();
  cfg.model.n_symbols = grammar.num_symbols();
  cfg.model.validate();

  fs::create_directories(out_dir);
  words.save((fs::path(out_dir) / "words.vocab").string());
  chars.save((fs::path(out_dir) / "chars.vocab").string());
  {
    std::ofstream g(fs::path(out_dir) / "grammar.txt");
    g << grammar_to_text(grammar);  // includes rules promoted during loading
  }
  if (train_corpus.promoted_rules)
    std::cout << "promoted " << train_corpus.promoted_rules
              << " terminal expansion(s) to predefined rules\n";

  Model model(cfg.model, grammar);
  TrainResult res = train_model(model, grammar, train_corpus.examples, dev, cfg, out_dir,
                                &std::cout);
  std::cout << "final loss " << res.final_loss << ", best dev StrAcc " << res.best_dev_stracc
            << "\n";
  return 0;
}

int cmd_generate(const std::string& dir, const std::string& checkpoint,
                 const std::string& description, int beam, int max_steps, TokenizeMode mode) {
  LoadedModel lm = load_model_dir(dir, checkpoint);
  InferenceConfig icfg = lm.cfg.inference;
  if (beam > 0) icfg.beam_size = beam;
  if (max_steps > 0) icfg.max_steps = max_steps;
  NlInput nl = make_nl_input(tokenize(description, mode), lm.words, lm.chars,
                             lm.cfg.model.char_max_len);
  GenerationResult res = generate(*lm.model, lm.grammar, nl, icfg);
  if (!res.diagnostic.empty()) std::cerr << res.diagnostic;
  if (!res.ok()) {
    std::cerr << "generation failed\n";
    return kExitData;
  }
  for (size_t i = 0; i < res.ranked.size(); ++i) {
    std::cout << std::fixed << std::setprecision(4) << res.ranked[i].log_prob << "\t";
    const auto& toks = res.ranked[i].tokens;
    for (size_t j = 0; j < toks.size(); ++j) std::cout << (j ? " " : "") << toks[j];
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& dir, const std::string& checkpoint,
                 const std::string& corpus_path, int beam, int max_steps, TokenizeMode mode,
                 const std::string& report_path) {
  LoadedModel lm = load_model_dir(dir, checkpoint);
  InferenceConfig icfg = lm.cfg.inference;
  if (beam > 0) icfg.beam_size = beam;
  if (max_steps > 0) icfg.max_steps = max_steps;

  auto records = read_corpus_file(corpus_path);
  std::vector<std::vector<std::string>> preds, refs;
  std::vector<std::string> verdicts;
  for (const auto& rec : records) {
    refs.push_back(reference_tokens(lm.grammar, rec));
    NlInput nl = make_nl_input(tokenize(rec.description, mode), lm.words, lm.chars,
                               lm.cfg.model.char_max_len);
    GenerationResult res = generate(*lm.model, lm.grammar, nl, icfg);
    preds.push_back(res.ok() ? res.ranked.front().tokens : std::vector<std::string>{});
    verdicts.push_back(rec.id + "\t" + (preds.back() == refs.back() ? "match" : "miss"));
  }
  std::ostringstream report;
  report << "# BLEU-4, corpus-level, +1 smoothing on orders 2-4, brevity penalty\n";
  report << std::fixed << std::setprecision(2);
  report << "str_acc\t" << str_acc(preds, refs) << "\n";
  report << "bleu\t" << bleu(preds, refs) << "\n";
  for (const auto& v : verdicts) report << v << "\n";
  if (report_path.empty()) {
    std::cout << report.str();
  } else {
    std::ofstream out(report_path);
    if (!out) throw CorpusError("cannot write report: " + report_path);
    out << report.str();
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  GradCheckReport rep = gradcheck_micro(seed);
  std::cout << "checked " << rep.entries_checked << " entries, max relative error "
            << rep.max_rel_err << " at " << rep.worst << "\n";
  if (!rep.ok(1e-3)) {
    std::cerr << "gradient check FAILED (tolerance 1e-3)\n";
    return kExitGradcheck;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grammar-based neural code generation toolkit"};
  app.require_subcommand(1);

  std::string config_path, mode_str = "plain";
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--set", overrides, "config override key=value (repeatable)");
  app.add_option("--mode", mode_str, "description preprocessing: plain|structural");

  auto* s_train = app.add_subcommand("train", "train a model");
  std::string grammar_path, corpus_path, dev_path, out_dir;
  s_train->add_option("--grammar", grammar_path, "grammar rules file")->required();
  s_train->add_option("--corpus", corpus_path, "training corpus (jsonl)")->required();
  s_train->add_option("--dev", dev_path, "dev corpus for periodic StrAcc");
  s_train->add_option("--out", out_dir, "output model directory")->required();

  auto* s_eval = app.add_subcommand("evaluate", "score a corpus with a trained model");
  std::string model_dir, checkpoint, report_path;
  int beam = 0, max_steps = 0;
  s_eval->add_option("--model-dir", model_dir, "trained model directory")->required();
  s_eval->add_option("--checkpoint", checkpoint, "checkpoint file (default best/final)");
  s_eval->add_option("--corpus", corpus_path, "evaluation corpus (jsonl)")->required();
  s_eval->add_option("--beam", beam, "beam size override");
  s_eval->add_option("--max-steps", max_steps, "rule limit override");
  s_eval->add_option("--report", report_path, "write the report here instead of stdout");

  auto* s_gen = app.add_subcommand("generate", "generate a program from a description");
  std::string description;
  s_gen->add_option("--model-dir", model_dir, "trained model directory")->required();
  s_gen->add_option("--checkpoint", checkpoint, "checkpoint file (default best/final)");
  s_gen->add_option("--description", description, "natural-language input")->required();
  s_gen->add_option("--beam", beam, "beam size override");
  s_gen->add_option("--max-steps", max_steps, "rule limit override");

  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gseed = 1;
  s_grad->add_option("--seed", gseed, "parameter init seed");

  auto* s_synth = app.add_subcommand("synth", "generate a synthetic task directory");
  SynthOptions sopts;
  s_synth->add_option("--out", out_dir, "output directory")->required();
  s_synth->add_option("--seed", sopts.seed, "generator seed");
  s_synth->add_option("--size", sopts.size, "number of examples");
  s_synth->add_option("--max-stmts", sopts.max_stmts, "statements per program");
  s_synth->add_option("--literals", sopts.n_literals, "distinct value literals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    TokenizeMode mode = parse_mode(mode_str);
    if (s_synth->parsed()) return cmd_synth(out_dir, sopts);
    if (s_grad->parsed()) return cmd_gradcheck(gseed);
    ConfigBundle cfg = load_config(config_path, overrides);
    if (s_train->parsed())
      return cmd_train(grammar_path, corpus_path, dev_path, out_dir, cfg, mode);
    if (s_gen->parsed())
      return cmd_generate(model_dir, checkpoint, description,
                          beam > 0 ? beam : cfg.inference.beam_size,
                          max_steps > 0 ? max_steps : cfg.inference.max_steps, mode);
    if (s_eval->parsed())
      return cmd_evaluate(model_dir, checkpoint, corpus_path, beam, max_steps, mode,
                          report_path);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
