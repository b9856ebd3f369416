#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treegen/corpus.hpp"

namespace treegen {

struct SynthOptions {
  std::uint64_t seed = 1;
  int size = 50;        // number of examples
  int max_stmts = 4;    // statements per program, uniform 1..max
  int n_literals = 20;  // distinct Val literals (grammar size knob)
  int name_pool = 100;  // distinct copyable identifier names
};

struct SynthTask {
  std::string grammar_text;
  std::vector<CorpusRecord> records;
};

// Deterministic toy task: statement-list programs over a small grammar whose
// identifier slots are filled with names that appear only in the paired
// description, so generation must use the copy mechanism. The description
// encodes the program exactly (one fixed phrase per statement form), making
// the task perfectly learnable. Identical seeds give byte-identical corpora.
SynthTask synth_task(const SynthOptions& opts);

// Writes grammar.txt and corpus.jsonl under dir (created if absent).
void write_synth_task(const std::string& dir, const SynthTask& task);

}  // namespace treegen
