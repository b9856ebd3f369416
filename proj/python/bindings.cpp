// Python surface: grammar handling, the synthetic task generator, metrics,
// gradient checking, and the train / generate / evaluate pipeline. File
// formats and artifact layout match the command-line tool exactly.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "treegen/config.hpp"
#include "treegen/corpus.hpp"
#include "treegen/gradcheck.hpp"
#include "treegen/grammar.hpp"
#include "treegen/inference.hpp"
#include "treegen/metrics.hpp"
#include "treegen/model.hpp"
#include "treegen/synth.hpp"
#include "treegen/training.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace treegen;

namespace {

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

ConfigBundle make_config(const std::string& config_path,
                         const std::map<std::string, std::string>& overrides) {
  ConfigBundle cfg;
  if (!config_path.empty()) cfg = ConfigBundle::from_file(config_path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

// A trained model directory (grammar.txt, words.vocab, chars.vocab, *.tgck)
// opened for generation and scoring.
struct TrainedModel {
  Grammar grammar;
  Vocab words, chars;
  ConfigBundle cfg;
  std::unique_ptr<Model> model;
  TokenizeMode mode = TokenizeMode::Plain;

  TrainedModel(const std::string& dir, std::string checkpoint, const std::string& mode_str)
      : grammar(Grammar::parse(read_file((fs::path(dir) / "grammar.txt").string()))),
        words(Vocab::load((fs::path(dir) / "words.vocab").string())),
        chars(Vocab::load((fs::path(dir) / "chars.vocab").string())),
        mode(parse_mode(mode_str)) {
    if (checkpoint.empty()) {
      for (const char* name : {"best.tgck", "final.tgck"}) {
        auto p = fs::path(dir) / name;
        if (fs::exists(p)) {
          checkpoint = p.string();
          break;
        }
      }
      if (checkpoint.empty()) throw CheckpointError("no best.tgck or final.tgck under " + dir);
    }
    cfg = read_checkpoint_config(checkpoint);
    if (cfg.model.n_rules != grammar.num_rules() ||
        cfg.model.n_symbols != grammar.num_symbols())
      throw CheckpointError("checkpoint was trained against a different grammar than " + dir);
    if (cfg.model.word_vocab != words.size() || cfg.model.char_vocab != chars.size())
      throw CheckpointError("checkpoint vocabulary sizes do not match " + dir);
    model = std::make_unique<Model>(cfg.model, grammar);
    load_checkpoint(checkpoint, model->params());
  }

  InferenceConfig icfg(int beam, int max_steps) const {
    InferenceConfig ic = cfg.inference;
    if (beam > 0) ic.beam_size = beam;
    if (max_steps > 0) ic.max_steps = max_steps;
    return ic;
  }

  py::list generate_py(const std::string& description, int beam, int max_steps) {
    NlInput nl = make_nl_input(tokenize(description, mode), words, chars,
                               cfg.model.char_max_len);
    GenerationResult res = generate(*model, grammar, nl, icfg(beam, max_steps));
    py::list out;
    for (const auto& g : res.ranked) {
      py::dict d;
      d["log_prob"] = g.log_prob;
      d["tokens"] = g.tokens;
      out.append(d);
    }
    return out;
  }

  py::dict evaluate_py(const std::string& corpus_path, int beam, int max_steps) {
    auto records = read_corpus_file(corpus_path);
    std::vector<std::vector<std::string>> preds, refs;
    py::list verdicts;
    for (const auto& rec : records) {
      if (!rec.program.empty() && rec.program[0] == '(')
        refs.push_back(Grammar::linearize(grammar.tree_from_sexp(rec.program)));
      else {
        std::istringstream in(rec.program);
        std::vector<std::string> toks;
        std::string t;
        while (in >> t) toks.push_back(t);
        refs.push_back(std::move(toks));
      }
      NlInput nl = make_nl_input(tokenize(rec.description, mode), words, chars,
                                 cfg.model.char_max_len);
      GenerationResult res = generate(*model, grammar, nl, icfg(beam, max_steps));
      preds.push_back(res.ok() ? res.ranked.front().tokens : std::vector<std::string>{});
      py::dict v;
      v["id"] = rec.id;
      v["match"] = preds.back() == refs.back();
      verdicts.append(v);
    }
    py::dict out;
    out["str_acc"] = str_acc(preds, refs);
    out["bleu"] = bleu(preds, refs);
    out["verdicts"] = verdicts;
    return out;
  }
};

py::dict train_py(const std::string& grammar_path, const std::string& corpus_path,
                  const std::string& out_dir, const std::string& dev_path,
                  const std::string& config_path,
                  const std::map<std::string, std::string>& overrides,
                  const std::string& mode_str) {
  ConfigBundle cfg = make_config(config_path, overrides);
  const TokenizeMode mode = parse_mode(mode_str);
  Grammar grammar = Grammar::parse(read_file(grammar_path));
  auto records = read_corpus_file(corpus_path);

  Vocab words, chars;
  build_vocabs(records, mode, words, chars);

  LoadOptions lopts{mode, cfg.train.strict_corpus};
  LoadedCorpus train_corpus =
      load_corpus(records, grammar, words, chars, cfg.model.char_max_len, lopts);
  std::vector<TrainExample> dev;
  if (!dev_path.empty())
    dev = load_corpus(read_corpus_file(dev_path), grammar, words, chars,
                      cfg.model.char_max_len, lopts)
              .examples;
  else
    dev = train_corpus.examples;

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
    g << grammar_to_text(grammar);
  }

  Model model(cfg.model, grammar);
  TrainResult res = train_model(model, grammar, train_corpus.examples, dev, cfg, out_dir);
  py::dict out;
  out["final_loss"] = res.final_loss;
  out["best_dev_stracc"] = res.best_dev_stracc;
  out["epochs_run"] = res.epochs_run;
  out["promoted_rules"] = train_corpus.promoted_rules;
  out["skipped"] = train_corpus.skipped;
  return out;
}

}  // namespace

PYBIND11_MODULE(_treegen, m) {
  m.doc() = "grammar-rule-based neural code generation";

  py::register_exception<GrammarError>(m, "GrammarError");
  py::register_exception<CorpusError>(m, "CorpusError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<CheckpointError>(m, "CheckpointError");

  py::class_<Grammar>(m, "Grammar")
      .def_static("parse", &Grammar::parse, py::arg("text"))
      .def("num_rules", &Grammar::num_rules)
      .def("num_symbols", &Grammar::num_symbols)
      .def("to_text", [](const Grammar& g) { return grammar_to_text(g); })
      .def("parse_program",
           [](const Grammar& g, const std::vector<std::string>& tokens) {
             return g.tree_to_sexp(parse_tokens(g, tokens));
           },
           py::arg("tokens"),
           "Parse a terminal token sequence into an s-expression AST.")
      .def("linearize_sexp",
           [](const Grammar& g, const std::string& sexp) {
             return Grammar::linearize(g.tree_from_sexp(sexp));
           },
           py::arg("sexp"));

  m.def("synth_task",
        [](std::uint64_t seed, int size, int max_stmts, int n_literals, int name_pool) {
          SynthOptions o;
          o.seed = seed;
          o.size = size;
          o.max_stmts = max_stmts;
          o.n_literals = n_literals;
          o.name_pool = name_pool;
          SynthTask t = synth_task(o);
          py::list recs;
          for (const auto& r : t.records) {
            py::dict d;
            d["id"] = r.id;
            d["description"] = r.description;
            d["program"] = r.program;
            recs.append(d);
          }
          py::dict out;
          out["grammar"] = t.grammar_text;
          out["records"] = recs;
          return out;
        },
        py::arg("seed") = 1, py::arg("size") = 50, py::arg("max_stmts") = 4,
        py::arg("n_literals") = 20, py::arg("name_pool") = 100);

  m.def("write_synth_task",
        [](const std::string& dir, std::uint64_t seed, int size) {
          SynthOptions o;
          o.seed = seed;
          o.size = size;
          write_synth_task(dir, synth_task(o));
        },
        py::arg("dir"), py::arg("seed") = 1, py::arg("size") = 50,
        "Write grammar.txt and corpus.jsonl under dir.");

  m.def("str_acc", &str_acc, py::arg("predictions"), py::arg("references"),
        "Exact-match percentage over token sequences.");
  m.def("bleu", &bleu, py::arg("predictions"), py::arg("references"),
        "Corpus-level BLEU-4, +1 smoothing on orders 2-4, brevity penalty.");

  m.def("gradcheck_micro",
        [](std::uint64_t seed) {
          GradCheckReport r = gradcheck_micro(seed);
          py::dict d;
          d["max_rel_err"] = r.max_rel_err;
          d["worst"] = r.worst;
          d["entries_checked"] = r.entries_checked;
          d["ok"] = r.ok(1e-3);
          return d;
        },
        py::arg("seed") = 1);

  m.def("default_config", [] { return ConfigBundle().to_text(); },
        "Serialized default configuration (flat key=value lines).");

  m.def("train", &train_py, py::arg("grammar"), py::arg("corpus"), py::arg("out_dir"),
        py::arg("dev") = "", py::arg("config") = "",
        py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("mode") = "plain",
        "Train a model and write its artifacts (vocabs, grammar, checkpoints).");

  py::class_<TrainedModel>(m, "TrainedModel")
      .def(py::init<const std::string&, std::string, const std::string&>(),
           py::arg("model_dir"), py::arg("checkpoint") = "", py::arg("mode") = "plain")
      .def("generate", &TrainedModel::generate_py, py::arg("description"),
           py::arg("beam") = 0, py::arg("max_steps") = 0,
           "Ranked candidate programs as dicts with log_prob and tokens.")
      .def("evaluate", &TrainedModel::evaluate_py, py::arg("corpus"), py::arg("beam") = 0,
           py::arg("max_steps") = 0);
}
