#include "treegen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace treegen {

double str_acc(const std::vector<std::vector<std::string>>& predictions,
               const std::vector<std::vector<std::string>>& references) {
  if (predictions.size() != references.size())
    throw std::invalid_argument("str_acc: prediction/reference count mismatch");
  if (predictions.empty()) throw std::invalid_argument("str_acc: empty input");
  size_t hits = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == references[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts ngrams(const std::vector<std::string>& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                   toks.begin() + static_cast<long>(i) + n)];
  return out;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& predictions,
            const std::vector<std::vector<std::string>>& references) {
  if (predictions.size() != references.size())
    throw std::invalid_argument("bleu: prediction/reference count mismatch");
  if (predictions.empty()) throw std::invalid_argument("bleu: empty input");
  for (const auto& r : references)
    if (r.empty()) throw std::invalid_argument("bleu: empty reference tokens");

  long pred_len = 0, ref_len = 0;
  long matches[4] = {0, 0, 0, 0};
  long totals[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < predictions.size(); ++i) {
    pred_len += static_cast<long>(predictions[i].size());
    ref_len += static_cast<long>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      auto pc = ngrams(predictions[i], n);
      auto rc = ngrams(references[i], n);
      for (const auto& [g, c] : pc) {
        totals[n - 1] += c;
        auto it = rc.find(g);
        if (it != rc.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }

  double log_prec = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double num = static_cast<double>(matches[n - 1]);
    double den = static_cast<double>(totals[n - 1]);
    if (n >= 2) {  // add-one smoothing on higher orders
      num += 1.0;
      den += 1.0;
    }
    if (den <= 0.0 || num <= 0.0) return 0.0;
    log_prec += 0.25 * std::log(num / den);
  }
  double bp = 1.0;
  if (pred_len == 0) return 0.0;
  if (pred_len < ref_len)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len));
  return 100.0 * bp * std::exp(log_prec);
}

}  // namespace treegen
