#include <doctest.h>

#include <stdexcept>

#include "treegen/metrics.hpp"

using namespace treegen;

using Toks = std::vector<std::vector<std::string>>;

TEST_CASE("str_acc arithmetic") {
  Toks a = {{"x", "y"}, {"z"}, {"w"}};
  CHECK(str_acc(a, a) == 100.0);
  Toks b = {{"q"}, {"q"}, {"q"}};
  CHECK(str_acc(a, b) == 0.0);
  Toks c = {{"x", "y"}, {"q"}, {"q"}};
  CHECK(str_acc(c, a) == doctest::Approx(100.0 / 3.0));
  CHECK_THROWS_AS(str_acc(a, Toks{{"x"}}), std::invalid_argument);
}

TEST_CASE("bleu extremes") {
  Toks ref = {{"the", "cat", "sat", "on", "the", "mat"}};
  CHECK(bleu(ref, ref) == doctest::Approx(100.0));
  Toks zero = {{"q", "w", "e", "r", "t", "y"}};
  CHECK(bleu(zero, ref) < 1.0);  // smoothing keeps it positive but tiny
  Toks empty_pred = {{}};
  CHECK(bleu(empty_pred, ref) == 0.0);  // no crash on empty prediction
  CHECK_THROWS_AS(bleu(ref, Toks{{}}), std::invalid_argument);  // empty reference
}

TEST_CASE("bleu matches the frozen independent reference value") {
  // value frozen from tests/bleu_reference.py, an implementation written
  // separately in Python and run once
  Toks preds = {{"the", "cat", "sat", "on", "the", "mat"},
                {"print", "(", "hello", "world", ")"}};
  Toks refs = {{"the", "cat", "is", "on", "the", "mat"},
               {"print", "(", "hello", ",", "world", ")"}};
  CHECK(bleu(preds, refs) == doctest::Approx(40.7769770269).epsilon(0.001));
}

TEST_CASE("brevity penalty punishes short predictions") {
  Toks ref = {{"a", "b", "c", "d", "e", "f", "g", "h"}};
  Toks full = {{"a", "b", "c", "d", "e", "f", "g", "h"}};
  Toks half = {{"a", "b", "c", "d"}};
  CHECK(bleu(half, ref) < bleu(full, ref));
}
