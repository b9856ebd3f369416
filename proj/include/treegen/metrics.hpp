#pragma once

#include <string>
#include <vector>

namespace treegen {

// Percentage of predictions token-identical to their reference.
// Throws std::invalid_argument on length mismatch.
double str_acc(const std::vector<std::vector<std::string>>& predictions,
               const std::vector<std::vector<std::string>>& references);

// Corpus-level BLEU-4 on the 0-100 scale: geometric mean of modified n-gram
// precisions (orders 2-4 add-one smoothed) times the brevity penalty. Empty
// predictions contribute zero matches rather than erroring.
double bleu(const std::vector<std::vector<std::string>>& predictions,
            const std::vector<std::vector<std::string>>& references);

}  // namespace treegen
