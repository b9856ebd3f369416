#include "treegen/synth.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace treegen {

SynthTask synth_task(const SynthOptions& opts) {
  if (opts.size < 1 || opts.max_stmts < 1 || opts.n_literals < 1 || opts.name_pool < 1)
    throw std::invalid_argument("synth_task: every knob must be >= 1");

  SynthTask task;
  {
    std::ostringstream g;
    g << "# statement-list toy grammar\n"
      << "S -> Stmt \";\"\n"
      << "S -> Stmt \";\" S\n"
      << "Stmt -> \"set\" Name Val\n"
      << "Stmt -> \"print\" Name\n"
      << "Stmt -> \"flag\" Bool\n"
      << "Name -> \"_v\"\n"  // dummy terminal rule: Name admits copied tokens
      << "Bool -> \"on\"\n"
      << "Bool -> \"off\"\n";
    for (int i = 0; i < opts.n_literals; ++i) g << "Val -> \"lit" << i << "\"\n";
    task.grammar_text = g.str();
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> n_stmts(1, opts.max_stmts);
  std::uniform_int_distribution<int> stmt_kind(0, 2);
  std::uniform_int_distribution<int> lit(0, opts.n_literals - 1);
  std::uniform_int_distribution<int> name(0, opts.name_pool - 1);
  std::uniform_int_distribution<int> coin(0, 1);

  for (int e = 0; e < opts.size; ++e) {
    std::ostringstream prog, desc;
    const int n = n_stmts(rng);
    for (int s = 0; s < n; ++s) {
      if (s > 0) desc << " then ";
      // the first statement always carries a copy-only identifier
      const int kind = s == 0 ? 0 : stmt_kind(rng);
      if (kind == 0) {
        std::string id = "x" + std::to_string(name(rng));
        std::string v = "lit" + std::to_string(lit(rng));
        prog << "set " << id << " " << v << " ; ";
        desc << "assign " << id << " to " << v;
      } else if (kind == 1) {
        std::string id = "x" + std::to_string(name(rng));
        prog << "print " << id << " ; ";
        desc << "show " << id;
      } else {
        std::string b = coin(rng) ? "on" : "off";
        prog << "flag " << b << " ; ";
        desc << "toggle " << b;
      }
    }
    CorpusRecord r;
    r.id = "synth" + std::to_string(e);
    r.description = desc.str();
    std::string p = prog.str();
    if (!p.empty() && p.back() == ' ') p.pop_back();
    r.program = p;
    task.records.push_back(std::move(r));
  }
  return task;
}

void write_synth_task(const std::string& dir, const SynthTask& task) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream g(fs::path(dir) / "grammar.txt");
  if (!g) throw std::runtime_error("cannot write grammar.txt under " + dir);
  g << task.grammar_text;
  g.close();
  write_corpus_file((fs::path(dir) / "corpus.jsonl").string(), task.records);
}

}  // namespace treegen
